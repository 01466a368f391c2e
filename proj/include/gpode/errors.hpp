#pragma once

#include <stdexcept>
#include <string>

namespace gpode {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class DimensionMismatch : public Error {
public:
    explicit DimensionMismatch(const std::string& what) : Error(what) {}
};

class NotPositiveDefinite : public Error {
public:
    explicit NotPositiveDefinite(const std::string& what) : Error(what) {}
};

class UnsupportedOrder : public Error {
public:
    explicit UnsupportedOrder(const std::string& what) : Error(what) {}
};

class NonInvariantKernel : public Error {
public:
    explicit NonInvariantKernel(const std::string& what) : Error(what) {}
};

class DegenerateOrbit : public Error {
public:
    explicit DegenerateOrbit(const std::string& what) : Error(what) {}
};

class DuplicatePoint : public Error {
public:
    explicit DuplicatePoint(const std::string& what) : Error(what) {}
};

class SingularState : public Error {
public:
    explicit SingularState(const std::string& what) : Error(what) {}
};

class NoConvergence : public Error {
public:
    explicit NoConvergence(const std::string& what) : Error(what) {}
};

class NonFiniteInitial : public Error {
public:
    explicit NonFiniteInitial(const std::string& what) : Error(what) {}
};

class EmptyDataset : public Error {
public:
    explicit EmptyDataset(const std::string& what) : Error(what) {}
};

class InvalidBounds : public Error {
public:
    explicit InvalidBounds(const std::string& what) : Error(what) {}
};

/// Configuration / usage errors surfaced by the CLI with exit code 2.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what) {}
};

/// File-format or filesystem errors.
class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(what) {}
};

} // namespace gpode
