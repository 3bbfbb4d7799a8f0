#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace rmss {

enum class ErrorCode {
    Parse,
    Schema,
    Topology,
    EmptySelection,
    InvalidArgument,
    Precondition,
    UnknownBus,
    NonConvergence,
    JacobianSingular,
    NotPsd,
    DegenerateDirection,
    ZeroStep,
    ModelEvaluation,
    AllSamplesFailed,
    MissingLimits,
    DimensionMismatch,
    Io,
};

const char* to_string(ErrorCode code);

/// Base of every error the library raises. The code survives the C boundary.
class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

  private:
    ErrorCode code_;
};

class ParseError : public Error {
  public:
    ParseError(int line, const std::string& what)
        : Error(ErrorCode::Parse, "line " + std::to_string(line) + ": " + what), line_(line) {}
    int line() const noexcept { return line_; }

  private:
    int line_;
};

class SchemaError : public Error {
  public:
    explicit SchemaError(const std::string& what) : Error(ErrorCode::Schema, what) {}
};

class TopologyError : public Error {
  public:
    explicit TopologyError(const std::string& what) : Error(ErrorCode::Topology, what) {}
};

class EmptySelection : public Error {
  public:
    explicit EmptySelection(const std::string& what) : Error(ErrorCode::EmptySelection, what) {}
};

class InvalidArgument : public Error {
  public:
    explicit InvalidArgument(const std::string& what) : Error(ErrorCode::InvalidArgument, what) {}
};

class PreconditionError : public Error {
  public:
    explicit PreconditionError(const std::string& what) : Error(ErrorCode::Precondition, what) {}
};

class UnknownBus : public Error {
  public:
    explicit UnknownBus(int bus) : Error(ErrorCode::UnknownBus, "unknown bus " + std::to_string(bus)), bus_(bus) {}
    int bus() const noexcept { return bus_; }

  private:
    int bus_;
};

/// Newton failed to reach tolerance. Carries the mismatch history of the failed solve.
class NonConvergence : public Error {
  public:
    NonConvergence(const std::string& what, std::vector<double> history)
        : Error(ErrorCode::NonConvergence, what), history_(std::move(history)) {}
    const std::vector<double>& history() const noexcept { return history_; }

  private:
    std::vector<double> history_;
};

/// Factorization failure. pivot_bus is -1 when no single bus can be blamed.
class JacobianSingular : public Error {
  public:
    JacobianSingular(const std::string& what, int pivot_bus)
        : Error(ErrorCode::JacobianSingular, what), pivot_bus_(pivot_bus) {}
    int pivot_bus() const noexcept { return pivot_bus_; }

  private:
    int pivot_bus_;
};

class NotPsd : public Error {
  public:
    explicit NotPsd(const std::string& what) : Error(ErrorCode::NotPsd, what) {}
};

class DegenerateDirection : public Error {
  public:
    explicit DegenerateDirection(const std::string& what) : Error(ErrorCode::DegenerateDirection, what) {}
};

class ZeroStep : public Error {
  public:
    ZeroStep() : Error(ErrorCode::ZeroStep, "finite-difference step must be positive") {}
};

class ModelEvaluationError : public Error {
  public:
    ModelEvaluationError(std::size_t sample, const std::string& what)
        : Error(ErrorCode::ModelEvaluation, "sample " + std::to_string(sample) + ": " + what), sample_(sample) {}
    std::size_t sample() const noexcept { return sample_; }

  private:
    std::size_t sample_;
};

class AllSamplesFailed : public Error {
  public:
    explicit AllSamplesFailed(const std::string& what) : Error(ErrorCode::AllSamplesFailed, what) {}
};

class MissingLimits : public Error {
  public:
    explicit MissingLimits(int bus)
        : Error(ErrorCode::MissingLimits, "bus " + std::to_string(bus) + " has no voltage limits") {}
};

class DimensionMismatch : public Error {
  public:
    explicit DimensionMismatch(const std::string& what) : Error(ErrorCode::DimensionMismatch, what) {}
};

class IoError : public Error {
  public:
    explicit IoError(const std::string& what) : Error(ErrorCode::Io, what) {}
};

}  // namespace rmss
