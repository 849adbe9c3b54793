#include "isoflow/common.hpp"

namespace isoflow {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::shape_mismatch: return "shape mismatch";
    case ErrorCode::non_finite: return "non-finite value";
    case ErrorCode::io: return "i/o failure";
    case ErrorCode::bad_magic: return "bad magic number";
    case ErrorCode::truncated: return "truncated file";
    case ErrorCode::dimension_mismatch: return "dimension mismatch";
    case ErrorCode::divergence: return "training diverged";
    case ErrorCode::singular: return "singular matrix";
  }
  return "unknown error";
}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

std::string shape_string(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace isoflow
