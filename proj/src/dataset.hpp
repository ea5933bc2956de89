#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace dnnh {

// One right-censored observation Z = (Y, Delta, X).
struct Subject {
  double y = 0.0;
  int delta = 0;
  std::vector<double> x;
};

struct Dataset {
  std::vector<Subject> subjects;
  int p = 0;
  double tau = 0.0;  // study horizon; every y <= tau

  std::size_t size() const { return subjects.size(); }
  bool empty() const { return subjects.empty(); }
  std::size_t events() const;
  double censoring_rate() const;
  double max_y() const;

  // Checks y >= 0 finite, delta in {0,1}, shared dimension, y <= tau, and
  // (optionally) covariates inside the unit cube. Throws kData.
  void Validate(bool require_unit_cube = false) const;

  Dataset Subset(std::span<const std::size_t> indices) const;
  static Dataset Concat(const Dataset& a, const Dataset& b);
};

// y, delta, x1..xp. Extra columns (when given) are appended verbatim.
void WriteDatasetCsv(const Dataset& data, std::ostream& out,
                     const std::vector<std::string>& extra_names = {},
                     const std::vector<std::vector<double>>& extra_columns = {});
void WriteDatasetCsv(const Dataset& data, const std::string& path);

// Reads the y, delta, x* layout written above; unknown columns are ignored.
// tau defaults to max y.
Dataset ReadDatasetCsv(const std::string& path);

std::string FormatDouble(double v);

}  // namespace dnnh
