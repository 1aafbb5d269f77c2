#include "cctmpc/error.hpp"

namespace cctmpc {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kUnbounded: return "Unbounded";
    case ErrorCode::kEmpty: return "Empty";
    case ErrorCode::kEmptyOrUnbounded: return "EmptyOrUnbounded";
    case ErrorCode::kDimensionTooLarge: return "DimensionTooLarge";
    case ErrorCode::kDegenerateVertex: return "DegenerateVertex";
    case ErrorCode::kRankDeficient: return "RankDeficient";
    case ErrorCode::kRangeNotNested: return "RangeNotNested";
    case ErrorCode::kInfeasible: return "Infeasible";
    case ErrorCode::kNotConverged: return "NotConverged";
    case ErrorCode::kSolverFailure: return "SolverFailure";
    case ErrorCode::kInfeasibleAtStart: return "InfeasibleAtStart";
    case ErrorCode::kMidRunInfeasible: return "MidRunInfeasible";
    case ErrorCode::kSchema: return "Schema";
  }
  return "Unknown";
}

}  // namespace cctmpc
