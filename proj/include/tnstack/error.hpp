#pragma once

#include <stdexcept>
#include <string>

namespace tnstack {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Extents that should agree do not (contraction pairs, batch sizes, ...).
class DimensionError : public Error {
public:
    using Error::Error;
};

/// An axis or site index outside the valid range.
class BoundsError : public Error {
public:
    using Error::Error;
};

/// Malformed wiring passed to full_contract.
class WiringError : public Error {
public:
    using Error::Error;
};

/// Two MPS that have to be contracted against each other are not compatible.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Inputs handed to the stack construction do not share a structure.
class StackingError : public Error {
public:
    using Error::Error;
};

class ArgumentError : public Error {
public:
    using Error::Error;
};

/// A contraction plan that does not describe the network it is applied to.
class PlanError : public Error {
public:
    using Error::Error;
};

/// The dense batched contraction would exceed the configured element budget.
class MemoryGuardError : public Error {
public:
    using Error::Error;
};

/// A brute-force oracle was asked for a tensor larger than its cap.
class OracleRefused : public Error {
public:
    using Error::Error;
};

/// The halving sweep cannot run on this chain; use the plain sweep instead.
class FallbackRequired : public Error {
public:
    using Error::Error;
};

/// Cost formula requested outside the regime it is defined for.
class RegimeError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Well-formed JSON/CSV that does not follow the expected schema.
class FormatError : public Error {
public:
    using Error::Error;
};

}  // namespace tnstack
