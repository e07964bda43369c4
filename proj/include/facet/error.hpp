#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace facet {

// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

// Operation not valid for the image's channel mode (e.g. gray conversion of a gray image).
class ModeError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class UnknownIdentityError : public Error {
 public:
  explicit UnknownIdentityError(const std::string& id)
      : Error("unknown identity '" + id + "'"), id_(id) {}
  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

class BudgetExhaustedError : public Error {
 public:
  BudgetExhaustedError(std::uint64_t used, std::uint64_t limit, std::uint64_t attempted)
      : Error("query budget exhausted: used " + std::to_string(used) + " of " +
              std::to_string(limit) + ", batch of " + std::to_string(attempted) + " rejected"),
        used_(used),
        limit_(limit),
        attempted_(attempted) {}

  std::uint64_t used() const noexcept { return used_; }
  std::uint64_t limit() const noexcept { return limit_; }
  std::uint64_t attempted() const noexcept { return attempted_; }

 private:
  std::uint64_t used_;
  std::uint64_t limit_;
  std::uint64_t attempted_;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

// Wire-level protocol violation reported by a scoring service (4xx other than 404/429).
class ProtocolError : public Error {
 public:
  ProtocolError(std::string code, const std::string& message)
      : Error(code + ": " + message), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

// Invalid configuration or flag combination.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace facet
