#include "rmss/errors.hpp"

namespace rmss {

const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::Parse: return "ParseError";
        case ErrorCode::Schema: return "SchemaError";
        case ErrorCode::Topology: return "TopologyError";
        case ErrorCode::EmptySelection: return "EmptySelection";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::Precondition: return "PreconditionError";
        case ErrorCode::UnknownBus: return "UnknownBus";
        case ErrorCode::NonConvergence: return "NonConvergence";
        case ErrorCode::JacobianSingular: return "JacobianSingular";
        case ErrorCode::NotPsd: return "NotPSD";
        case ErrorCode::DegenerateDirection: return "DegenerateDirection";
        case ErrorCode::ZeroStep: return "ZeroStep";
        case ErrorCode::ModelEvaluation: return "ModelEvaluationError";
        case ErrorCode::AllSamplesFailed: return "AllSamplesFailed";
        case ErrorCode::MissingLimits: return "MissingLimits";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::Io: return "IoError";
    }
    return "Error";
}

}  // namespace rmss
