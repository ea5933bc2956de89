#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "bench.hpp"
#include "csv.hpp"
#include "errors.hpp"

namespace dnnh {

namespace {

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double ParseNumber(const std::string& cell, const std::string& column) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  Require(used == cell.size() && used > 0 && std::isfinite(v), ErrorKind::kData,
          "column '" + column + "': '" + cell + "' is not a number");
  return v;
}

int ParseEvent(const std::string& cell) {
  if (cell == "1" || cell == "1.0" || cell == "true" || cell == "TRUE") return 1;
  if (cell == "0" || cell == "0.0" || cell == "false" || cell == "FALSE") return 0;
  Fail(ErrorKind::kData, "event indicator '" + cell + "' is not 0/1");
}

}  // namespace

void CovariateSchema::Validate() const {
  Require(!time.empty(), ErrorKind::kSchema, "schema needs a time column");
  Require(!event.empty(), ErrorKind::kSchema, "schema needs an event column");
  std::set<std::string> seen{time};
  Require(seen.insert(event).second, ErrorKind::kSchema, "time and event columns coincide");
  for (const auto& c : numeric)
    Require(seen.insert(c).second, ErrorKind::kSchema, "column '" + c + "' listed twice");
  for (const auto& c : categorical) {
    Require(seen.insert(c.name).second, ErrorKind::kSchema, "column '" + c.name + "' listed twice");
    Require(!c.baseline.empty(), ErrorKind::kSchema,
            "categorical '" + c.name + "' has no baseline level");
    Require(std::find(c.levels.begin(), c.levels.end(), c.baseline) == c.levels.end(),
            ErrorKind::kSchema, "categorical '" + c.name + "': baseline listed among dummy levels");
  }
  Require(!numeric.empty() || !categorical.empty(), ErrorKind::kSchema, "schema has no covariates");
}

nlohmann::json CovariateSchema::ToJson() const {
  nlohmann::json cats = nlohmann::json::array();
  for (const auto& c : categorical)
    cats.push_back({{"name", c.name}, {"baseline", c.baseline}, {"levels", c.levels}});
  return {{"time", time},
          {"event", event},
          {"numeric", numeric},
          {"categorical", cats},
          {"missing_tokens", missing_tokens}};
}

CovariateSchema CovariateSchema::FromJson(const nlohmann::json& j) {
  CovariateSchema s;
  try {
    s.time = j.at("time").get<std::string>();
    s.event = j.at("event").get<std::string>();
    s.numeric = j.value("numeric", s.numeric);
    for (const auto& c : j.value("categorical", nlohmann::json::array())) {
      CategoricalColumn col;
      col.name = c.at("name").get<std::string>();
      col.baseline = c.value("baseline", std::string());
      col.levels = c.value("levels", col.levels);
      s.categorical.push_back(col);
    }
    s.missing_tokens = j.value("missing_tokens", s.missing_tokens);
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kSchema, std::string("malformed schema: ") + e.what());
  }
  s.Validate();
  return s;
}

std::vector<double> CovariateEncoder::Encode(const std::map<std::string, std::string>& row) const {
  std::vector<double> x;
  x.reserve(names.size());
  for (std::size_t k = 0; k < numeric.size(); ++k) {
    auto it = row.find(numeric[k]);
    Require(it != row.end(), ErrorKind::kSchema, "missing column '" + numeric[k] + "'");
    x.push_back((ParseNumber(Trim(it->second), numeric[k]) - min[k]) / span[k]);
  }
  for (const auto& c : categorical) {
    auto it = row.find(c.name);
    Require(it != row.end(), ErrorKind::kSchema, "missing column '" + c.name + "'");
    const std::string v = Trim(it->second);
    const bool known =
        v == c.baseline || std::find(c.levels.begin(), c.levels.end(), v) != c.levels.end();
    Require(known, ErrorKind::kSchema, "column '" + c.name + "': unknown level '" + v + "'");
    for (const auto& level : c.levels) x.push_back(v == level ? 1.0 : 0.0);
  }
  return x;
}

nlohmann::json CovariateEncoder::ToJson() const {
  nlohmann::json cats = nlohmann::json::array();
  for (const auto& c : categorical)
    cats.push_back({{"name", c.name}, {"baseline", c.baseline}, {"levels", c.levels}});
  return {{"names", names}, {"numeric", numeric}, {"min", min}, {"span", span}, {"categorical", cats}};
}

CovariateEncoder CovariateEncoder::FromJson(const nlohmann::json& j) {
  CovariateEncoder e;
  try {
    e.names = j.at("names").get<std::vector<std::string>>();
    e.numeric = j.at("numeric").get<std::vector<std::string>>();
    e.min = j.at("min").get<std::vector<double>>();
    e.span = j.at("span").get<std::vector<double>>();
    for (const auto& c : j.at("categorical"))
      e.categorical.push_back({c.at("name"), c.at("baseline"), c.at("levels")});
  } catch (const nlohmann::json::exception& ex) {
    Fail(ErrorKind::kSchema, std::string("malformed encoder: ") + ex.what());
  }
  Require(e.min.size() == e.numeric.size() && e.span.size() == e.numeric.size(),
          ErrorKind::kSchema, "encoder numeric maps have mismatched sizes");
  return e;
}

nlohmann::json IngestReport::ToJson() const {
  return {{"rows_read", rows_read},
          {"dropped", dropped},
          {"kept", kept},
          {"nonpositive_times", nonpositive_times},
          {"warnings", warnings}};
}

IngestResult IngestCsv(const std::string& path, const CovariateSchema& schema) {
  schema.Validate();
  const CsvTable table = ReadCsv(path);
  auto col = [&](const std::string& name) {
    const int c = table.Column(name);
    Require(c >= 0, ErrorKind::kSchema, "column '" + name + "' not in " + path);
    return static_cast<std::size_t>(c);
  };
  const std::size_t tcol = col(schema.time), ecol = col(schema.event);
  std::vector<std::size_t> ncols, ccols;
  for (const auto& n : schema.numeric) ncols.push_back(col(n));
  for (const auto& c : schema.categorical) ccols.push_back(col(c.name));
  const std::set<std::string> missing(schema.missing_tokens.begin(), schema.missing_tokens.end());

  IngestResult res;
  res.report.rows_read = table.rows.size();
  std::vector<const std::vector<std::string>*> kept;
  for (const auto& row : table.rows) {
    bool drop = false;
    auto check = [&](std::size_t c) {
      if (c >= row.size() || missing.count(Trim(row[c]))) drop = true;
    };
    check(tcol);
    check(ecol);
    for (auto c : ncols) check(c);
    for (auto c : ccols) check(c);
    if (drop)
      ++res.report.dropped;
    else
      kept.push_back(&row);
  }
  res.report.kept = kept.size();
  Require(!kept.empty(), ErrorKind::kData, "no complete rows in " + path);

  CovariateEncoder& enc = res.encoder;
  enc.numeric = schema.numeric;
  for (std::size_t k = 0; k < ncols.size(); ++k) {
    double lo = INFINITY, hi = -INFINITY;
    for (const auto* row : kept) {
      const double v = ParseNumber(Trim((*row)[ncols[k]]), schema.numeric[k]);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    double span = hi - lo;
    if (!(span > 0.0)) {
      res.report.warnings.push_back("column '" + schema.numeric[k] + "' is constant");
      span = 1.0;
    }
    enc.min.push_back(lo);
    enc.span.push_back(span);
    enc.names.push_back(schema.numeric[k]);
  }
  for (std::size_t k = 0; k < ccols.size(); ++k) {
    CategoricalColumn c = schema.categorical[k];
    std::set<std::string> seen;
    for (const auto* row : kept) seen.insert(Trim((*row)[ccols[k]]));
    if (c.levels.empty()) {
      for (const auto& v : seen)
        if (v != c.baseline) c.levels.push_back(v);
    } else {
      for (const auto& v : seen)
        Require(v == c.baseline || std::find(c.levels.begin(), c.levels.end(), v) != c.levels.end(),
                ErrorKind::kSchema, "column '" + c.name + "': undeclared level '" + v + "'");
    }
    if (!seen.count(c.baseline))
      res.report.warnings.push_back("baseline level '" + c.baseline + "' of '" + c.name +
                                    "' does not occur");
    for (const auto& level : c.levels) enc.names.push_back(c.name + "=" + level);
    enc.categorical.push_back(c);
  }

  Dataset& data = res.data;
  data.p = static_cast<int>(enc.names.size());
  for (const auto* row : kept) {
    std::map<std::string, std::string> cells;
    for (std::size_t c = 0; c < table.header.size() && c < row->size(); ++c)
      cells[table.header[c]] = (*row)[c];
    Subject s;
    s.y = ParseNumber(Trim((*row)[tcol]), schema.time);
    s.delta = ParseEvent(Trim((*row)[ecol]));
    s.x = enc.Encode(cells);
    if (s.y <= 0.0) ++res.report.nonpositive_times;
    data.subjects.push_back(std::move(s));
  }
  if (res.report.nonpositive_times)
    res.report.warnings.push_back(std::to_string(res.report.nonpositive_times) +
                                  " nonpositive times; log-time models are undefined for them");
  data.tau = data.max_y();
  data.Validate();
  return res;
}

SplitFractions SplitPreset(const std::string& name) {
  if (name == "64/16/20") return {0.64, 0.16, 0.20};
  if (name == "64/36") return {0.64, 0.36, 0.0};
  Fail(ErrorKind::kConfig, "unknown split preset '" + name + "' (64/16/20 | 64/36)");
}

}  // namespace dnnh
