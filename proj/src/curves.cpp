#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "bench.hpp"
#include "errors.hpp"

namespace dnnh {

namespace {

std::vector<double> Path(const CumHazardModel& m, std::span<const double> x,
                         const std::vector<double>& grid) {
  std::vector<double> out(grid.size());
  m.CumHazardPath(x, grid, out);
  return out;
}

void CheckInputs(const std::vector<CurveSeries>& series,
                 const std::vector<std::vector<double>>& probes, const std::vector<double>& grid) {
  Require(!series.empty() && !probes.empty() && grid.size() >= 2, ErrorKind::kConfig,
          "curves need models, probes and a grid");
  for (const auto& s : series) {
    Require(s.model != nullptr, ErrorKind::kConfig, "curve series without a model");
    for (const auto& x : probes) s.model->CheckProbe(x);
  }
  Require(std::is_sorted(grid.begin(), grid.end()) && grid.front() >= 0.0, ErrorKind::kConfig,
          "curve grid must be nondecreasing and nonnegative");
}

std::string Num(double v) {
  std::ostringstream o;
  o.precision(4);
  o << v;
  return o.str();
}

}  // namespace

void WriteCurvesCsv(const std::vector<CurveSeries>& series,
                    const std::vector<std::vector<double>>& probes,
                    const std::vector<double>& grid, const std::string& path) {
  CheckInputs(series, probes, grid);
  std::ofstream out(path, std::ios::binary);
  Require(out.good(), ErrorKind::kIo, "cannot write " + path);
  out << "model,x_id,t,Lambda,S\n";
  for (const auto& s : series)
    for (std::size_t p = 0; p < probes.size(); ++p) {
      const auto lam = Path(*s.model, probes[p], grid);
      for (std::size_t k = 0; k < grid.size(); ++k)
        out << s.label << ',' << p << ',' << FormatDouble(grid[k]) << ',' << FormatDouble(lam[k])
            << ',' << FormatDouble(std::exp(-lam[k])) << '\n';
    }
}

void WriteCurvesSvg(const std::vector<CurveSeries>& series,
                    const std::vector<std::vector<double>>& probes,
                    const std::vector<double>& grid, const std::string& path) {
  CheckInputs(series, probes, grid);
  std::vector<std::vector<double>> paths;
  double ymax = 0.0;
  for (const auto& s : series)
    for (const auto& x : probes) {
      paths.push_back(Path(*s.model, x, grid));
      for (double v : paths.back())
        if (std::isfinite(v)) ymax = std::max(ymax, v);
    }
  if (!(ymax > 0.0)) ymax = 1.0;
  const double t0 = grid.front(), t1 = std::max(grid.back(), t0 + 1e-12);
  const double W = 640, H = 420, L = 60, R = 150, T = 20, B = 50;
  auto px = [&](double t) { return L + (t - t0) / (t1 - t0) * (W - L - R); };
  auto py = [&](double v) { return H - B - std::min(v, ymax) / ymax * (H - T - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                 "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

  std::ofstream out(path, std::ios::binary);
  Require(out.good(), ErrorKind::kIo, "cannot write " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double t = t0 + (t1 - t0) * k / 4.0, v = ymax * k / 4.0;
    out << "<text x=\"" << px(t) << "\" y=\"" << H - B + 15 << "\" text-anchor=\"middle\">"
        << Num(t) << "</text>\n";
    out << "<text x=\"" << L - 5 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\">" << Num(v)
        << "</text>\n";
  }
  out << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10
      << "\" text-anchor=\"middle\">t</text>\n";
  out << "<text x=\"15\" y=\"" << (T + H - B) / 2 << "\" transform=\"rotate(-90 15 "
      << (T + H - B) / 2 << ")\" text-anchor=\"middle\">cumulative hazard</text>\n";
  std::size_t idx = 0;
  for (std::size_t s = 0; s < series.size(); ++s)
    for (std::size_t p = 0; p < probes.size(); ++p, ++idx) {
      const char* color = colors[idx % 8];
      out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\""
          << (s % 2 ? " stroke-dasharray=\"5,3\"" : "") << " points=\"";
      for (std::size_t k = 0; k < grid.size(); ++k)
        if (std::isfinite(paths[idx][k]))
          out << (k ? " " : "") << px(grid[k]) << ',' << py(paths[idx][k]);
      out << "\"/>\n";
      const double ly = T + 14.0 * static_cast<double>(idx);
      out << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 30
          << "\" y2=\"" << ly << "\" stroke=\"" << color << "\"/>\n";
      out << "<text x=\"" << W - R + 35 << "\" y=\"" << ly + 4 << "\">" << series[s].label
          << " x" << p << "</text>\n";
    }
  out << "</svg>\n";
}

}  // namespace dnnh
