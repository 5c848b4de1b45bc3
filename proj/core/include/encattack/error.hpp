#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace encattack {

/// Failure categories. Each maps to a distinct CLI exit code.
enum class ErrorKind {
  configuration = 2,
  shape = 3,
  validation = 4,
  training = 5,
  size = 6,
  protocol = 7,
  io = 8,
  schema = 9,
  extraction = 10,
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) throw Error(kind, message);
}

}  // namespace encattack
