#pragma once

#include <stdexcept>
#include <string>

namespace parreg {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad argument value (nonpositive dilation factor, odd order, ...).
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Input outside the domain of a map (retraction of the origin, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Data violates a documented admissibility or regularity condition.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Grid or solver configuration cannot support the request.
class ConfigurationError : public Error {
public:
    using Error::Error;
};

/// Stencil would read outside the stored samples.
class ExtrapolationError : public Error {
public:
    using Error::Error;
};

/// Shapes of two grid objects do not match.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Ellipticity certificate failed or a symbol became singular.
class EllipticityError : public Error {
public:
    using Error::Error;
};

/// Perturbation argument failed (contraction precheck or iteration budget).
class ContractionError : public Error {
public:
    using Error::Error;
};

}  // namespace parreg
