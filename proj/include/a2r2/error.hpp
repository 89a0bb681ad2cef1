#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace a2r2 {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed dataset line; line numbers are 1-based.
class DatasetError : public Error {
public:
    DatasetError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// No high-attention region could be isolated; callers fall back to whole images.
class NoSalientRegion : public Error {
public:
    using Error::Error;
};

class ToolchainMissing : public Error {
public:
    using Error::Error;
};

// Retryable wire failure (connection refused, 5xx, timeout).
class TransportError : public Error {
public:
    using Error::Error;
};

class BackendUnavailable : public Error {
public:
    using Error::Error;
};

class EmptyGeneration : public Error {
public:
    using Error::Error;
};

class AttentionUnavailable : public Error {
public:
    using Error::Error;
};

class ProtocolError : public Error {
public:
    using Error::Error;
};

class JudgeParseError : public Error {
public:
    using Error::Error;
};

}  // namespace a2r2
