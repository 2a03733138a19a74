#pragma once

#include <stdexcept>
#include <string>

namespace contagion {

/// Root of the library's exception hierarchy.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed or inconsistent input (files, graphs, configs). CLI exit code 2.
class DataError : public Error {
public:
    using Error::Error;
};

/// Numerical failure (non-finite loss, divergence). CLI exit code 3.
class NumericError : public Error {
public:
    using Error::Error;
};

#define CONTAGION_DEFINE_ERROR(NAME, BASE)              \
    class NAME : public BASE {                          \
    public:                                             \
        explicit NAME(const std::string& what)          \
            : BASE(std::string(#NAME) + ": " + what) {} \
    }

// graph-core
CONTAGION_DEFINE_ERROR(MalformedRecord, DataError);
CONTAGION_DEFINE_ERROR(DanglingEdge, DataError);
CONTAGION_DEFINE_ERROR(DuplicateNode, DataError);
CONTAGION_DEFINE_ERROR(DuplicateEdge, DataError);
CONTAGION_DEFINE_ERROR(SelfLoop, DataError);
CONTAGION_DEFINE_ERROR(NodeNotFound, DataError);
CONTAGION_DEFINE_ERROR(NoPath, DataError);

// intervention-engine
CONTAGION_DEFINE_ERROR(TargetMissing, DataError);
CONTAGION_DEFINE_ERROR(TargetIntervention, DataError);
CONTAGION_DEFINE_ERROR(NegativeEffect, DataError);

// instruction-forge
CONTAGION_DEFINE_ERROR(InfeasibleConfig, DataError);
CONTAGION_DEFINE_ERROR(TemplateMissing, DataError);
CONTAGION_DEFINE_ERROR(DuplicateLabel, DataError);

// fusion-kernel
CONTAGION_DEFINE_ERROR(EmptyInput, DataError);
CONTAGION_DEFINE_ERROR(EmptyGraph, DataError);
CONTAGION_DEFINE_ERROR(LabelOutOfRange, DataError);
CONTAGION_DEFINE_ERROR(DimensionMismatch, DataError);
CONTAGION_DEFINE_ERROR(NoPositives, DataError);
CONTAGION_DEFINE_ERROR(NonFiniteLoss, NumericError);

// pathway-engine / trainer / export
CONTAGION_DEFINE_ERROR(EmptyPath, DataError);
CONTAGION_DEFINE_ERROR(SingleClass, DataError);
CONTAGION_DEFINE_ERROR(EmptyDataset, DataError);
CONTAGION_DEFINE_ERROR(VocabMismatch, DataError);
CONTAGION_DEFINE_ERROR(InconsistentInputs, DataError);
CONTAGION_DEFINE_ERROR(ConfigError, DataError);

#undef CONTAGION_DEFINE_ERROR

} // namespace contagion
