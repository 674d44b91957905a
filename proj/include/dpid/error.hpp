// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace dpid {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite or out-of-domain numeric input.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Two fields (or a field and a model) disagree on geometry.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A caller-side contract was violated (empty list, bad count, bad config).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// The denoiser or prior provider cannot serve the requested condition.
class UnsupportedConditionError : public Error {
 public:
  using Error::Error;
};

/// Network or protocol failure talking to the bridge service.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// File could not be read, parsed or written.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace dpid
