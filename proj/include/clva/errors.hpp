// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace clva {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid span sizes passed to build_layout or a mismatching layout.
class LayoutError : public Error {
public:
    using Error::Error;
};

/// Caller supplied an argument outside the operation's domain
/// (empty head set, negative alpha, mask length mismatch, ...).
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Data violates a numeric invariant (row sums, ranges, region overlap).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Underlying stream or file could not be opened, read, or written.
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace clva
