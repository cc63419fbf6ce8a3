#pragma once

#include <stdexcept>
#include <string>

namespace mvd {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidArgument : Error {
    using Error::Error;
};
struct ShapeError : Error {
    using Error::Error;
};
struct NumericalError : Error {
    using Error::Error;
};
struct DivergenceError : Error {
    long iteration = -1;
    DivergenceError(const std::string& what, long iter) : Error(what), iteration(iter) {}
};

struct UnknownDataset : Error {
    using Error::Error;
};
struct DataLoadError : Error {
    using Error::Error;
};
struct InsufficientData : Error {
    long qualifying = 0;
    InsufficientData(const std::string& what, long have) : Error(what), qualifying(have) {}
};

struct ArchitectureError : Error {
    using Error::Error;
};
struct CheckpointCorrupt : Error {
    using Error::Error;
};
struct CheckpointVersionError : Error {
    using Error::Error;
};

struct OracleError : Error {
    long index = -1;
    OracleError(const std::string& what, long at) : Error(what), index(at) {}
};

struct ContractViolation : Error {
    using Error::Error;
};
struct PlanError : Error {
    using Error::Error;
};

struct BindError : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};

}  // namespace mvd
