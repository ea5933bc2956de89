#include "errors.hpp"

namespace dnnh {

const char* ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kDomain: return "domain";
    case ErrorKind::kOptimization: return "optimization";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kData: return "data";
    case ErrorKind::kEstimation: return "estimation";
    case ErrorKind::kDegenerate: return "degenerate";
    case ErrorKind::kCalibration: return "calibration";
    case ErrorKind::kMetricUndefined: return "metric_undefined";
    case ErrorKind::kSchema: return "schema";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kInternal: return "internal";
  }
  return "unknown";
}

}  // namespace dnnh
