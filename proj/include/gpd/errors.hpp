#pragma once

#include <stdexcept>
#include <string>

namespace gpd {

/// Base of every error raised by the library. Each subclass names a failure
/// category so callers (the CLI, the HTTP service) can map it to an exit code
/// or a status without string matching.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual const char* kind() const noexcept { return "error"; }
};

#define GPD_DEFINE_ERROR(Name, tag)                                   \
    class Name : public Error {                                       \
    public:                                                           \
        using Error::Error;                                           \
        const char* kind() const noexcept override { return tag; }    \
    };

GPD_DEFINE_ERROR(ArgumentError, "argument")
GPD_DEFINE_ERROR(DomainError, "domain")
GPD_DEFINE_ERROR(NumericalError, "numerical")
GPD_DEFINE_ERROR(UsageError, "usage")
GPD_DEFINE_ERROR(TrainingError, "training")
GPD_DEFINE_ERROR(GenerationError, "generation")
GPD_DEFINE_ERROR(FormatError, "format")
GPD_DEFINE_ERROR(ConsistencyError, "consistency")
GPD_DEFINE_ERROR(FitError, "fit")

#undef GPD_DEFINE_ERROR

}  // namespace gpd
