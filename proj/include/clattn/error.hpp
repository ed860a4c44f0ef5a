#pragma once

#include <stdexcept>
#include <string>

namespace clattn {

// Raised when a caller violates an operation's precondition (shapes, ranges).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised by tensor-file and CSV readers. `field()` names the offending part
// of the input ("magic", "dtype", "payload length", ...), or is empty for
// plain open/read failures.
class IoError : public std::runtime_error {
 public:
  IoError(const std::string& what, std::string field = {})
      : std::runtime_error(what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

namespace detail {

inline void require(bool ok, const char* msg) {
  if (!ok) throw InvalidArgument(msg);
}

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw InvalidArgument(msg);
}

}  // namespace detail
}  // namespace clattn
