#pragma once

#include <stdexcept>
#include <string>

namespace malimg {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Zero-length input where bytes are required.
class EmptyFileError : public Error {
public:
    using Error::Error;
};

class NotPeError : public Error {
public:
    using Error::Error;
};

class TruncatedHeaderError : public Error {
public:
    using Error::Error;
};

class UndefinedEntropyError : public Error {
public:
    using Error::Error;
};

class UndefinedAucError : public Error {
public:
    using Error::Error;
};

/// Caller violated an API contract (bad arguments, unfitted model, ...).
class UsageError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    DivergenceError(int epoch, const std::string& what)
        : Error(what), epoch_(epoch) {}
    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

/// Malformed on-disk artifact (container, manifest, PNG).
class FormatError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace malimg
