#pragma once

#include <stdexcept>
#include <string>

namespace kqr {

enum class ErrorKind {
  Config,     // invalid option, parameter or recipe
  Input,      // malformed or mis-shaped data
  Domain,     // value outside a function's domain
  Io,
  Parse,
  Version,
  Numerical,
};

const char* kind_name(ErrorKind kind) noexcept;

// All library failures are reported through this type. `field` names the
// offending parameter, column or flag when there is one.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message, std::string field = {})
      : std::runtime_error(message), kind_(kind), field_(std::move(field)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& field() const noexcept { return field_; }

 private:
  ErrorKind kind_;
  std::string field_;
};

}  // namespace kqr
