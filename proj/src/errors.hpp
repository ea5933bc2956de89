#pragma once

#include <stdexcept>
#include <string>

namespace dnnh {

enum class ErrorKind {
  kShape,
  kDomain,
  kOptimization,
  kConfig,
  kData,
  kEstimation,
  kDegenerate,
  kCalibration,
  kMetricUndefined,
  kSchema,
  kIo,
  kInternal,
};

const char* ErrorKindName(ErrorKind kind);

// Single exception type for the library; the kind drives C API error codes
// and CLI exit statuses.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void Fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void Require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) throw Error(kind, what);
}

}  // namespace dnnh
