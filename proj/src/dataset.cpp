#include "dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "csv.hpp"
#include "errors.hpp"

namespace dnnh {

std::size_t Dataset::events() const {
  std::size_t d = 0;
  for (const auto& s : subjects) d += s.delta;
  return d;
}

double Dataset::censoring_rate() const {
  if (subjects.empty()) return 0.0;
  return 1.0 - static_cast<double>(events()) / static_cast<double>(size());
}

double Dataset::max_y() const {
  double m = 0.0;
  for (const auto& s : subjects) m = std::max(m, s.y);
  return m;
}

void Dataset::Validate(bool require_unit_cube) const {
  Require(p >= 0, ErrorKind::kData, "covariate dimension must be nonnegative");
  Require(std::isfinite(tau) && tau > 0.0, ErrorKind::kData, "horizon tau must be positive");
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    const Subject& s = subjects[i];
    const std::string where = "subject " + std::to_string(i) + ": ";
    Require(std::isfinite(s.y) && s.y >= 0.0, ErrorKind::kData, where + "time must be finite and >= 0");
    Require(s.y <= tau * (1.0 + 1e-12), ErrorKind::kData, where + "time exceeds horizon tau");
    Require(s.delta == 0 || s.delta == 1, ErrorKind::kData, where + "event indicator must be 0 or 1");
    Require(s.x.size() == static_cast<std::size_t>(p), ErrorKind::kData,
            where + "covariate dimension mismatch");
    for (double v : s.x) {
      Require(std::isfinite(v), ErrorKind::kData, where + "non-finite covariate");
      if (require_unit_cube)
        Require(v >= 0.0 && v <= 1.0, ErrorKind::kData, where + "covariate outside [0,1]");
    }
  }
}

Dataset Dataset::Subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.p = p;
  out.tau = tau;
  out.subjects.reserve(indices.size());
  for (std::size_t i : indices) {
    Require(i < subjects.size(), ErrorKind::kInternal, "subset index out of range");
    out.subjects.push_back(subjects[i]);
  }
  return out;
}

Dataset Dataset::Concat(const Dataset& a, const Dataset& b) {
  Require(a.p == b.p, ErrorKind::kData, "cannot concatenate datasets of different dimension");
  Dataset out = a;
  out.tau = std::max(a.tau, b.tau);
  out.subjects.insert(out.subjects.end(), b.subjects.begin(), b.subjects.end());
  return out;
}

std::string FormatDouble(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) return std::to_string(v);
  return std::string(buf, ptr);
}

void WriteDatasetCsv(const Dataset& data, std::ostream& out,
                     const std::vector<std::string>& extra_names,
                     const std::vector<std::vector<double>>& extra_columns) {
  Require(extra_names.size() == extra_columns.size(), ErrorKind::kInternal,
          "extra column names/values mismatch");
  out << "y,delta";
  for (int j = 0; j < data.p; ++j) out << ",x" << (j + 1);
  for (const auto& name : extra_names) out << ',' << name;
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Subject& s = data.subjects[i];
    out << FormatDouble(s.y) << ',' << s.delta;
    for (double v : s.x) out << ',' << FormatDouble(v);
    for (const auto& col : extra_columns) out << ',' << FormatDouble(col.at(i));
    out << '\n';
  }
}

void WriteDatasetCsv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  Require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + path);
  WriteDatasetCsv(data, out);
}

namespace {

double ParseNumber(const std::string& s, const std::string& what) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  while (b < e && *b == ' ') ++b;
  auto [ptr, ec] = std::from_chars(b, e, v);
  Require(ec == std::errc() && ptr == e, ErrorKind::kData, "cannot parse '" + s + "' as " + what);
  return v;
}

}  // namespace

Dataset ReadDatasetCsv(const std::string& path) {
  const CsvTable table = ReadCsv(path);
  const int iy = table.Column("y");
  const int id = table.Column("delta");
  Require(iy >= 0 && id >= 0, ErrorKind::kData, path + ": columns 'y' and 'delta' are required");
  std::vector<int> xcols;
  for (int j = 1;; ++j) {
    const int c = table.Column("x" + std::to_string(j));
    if (c < 0) break;
    xcols.push_back(c);
  }
  Dataset data;
  data.p = static_cast<int>(xcols.size());
  for (const auto& row : table.rows) {
    Subject s;
    s.y = ParseNumber(row[iy], "time");
    const double d = ParseNumber(row[id], "event indicator");
    Require(d == 0.0 || d == 1.0, ErrorKind::kData, "event indicator must be 0 or 1");
    s.delta = static_cast<int>(d);
    for (int c : xcols) s.x.push_back(ParseNumber(row[c], "covariate"));
    data.subjects.push_back(std::move(s));
  }
  Require(!data.empty(), ErrorKind::kData, path + ": no rows");
  data.tau = data.max_y();
  if (data.tau <= 0.0) data.tau = 1.0;
  data.Validate();
  return data;
}

}  // namespace dnnh
