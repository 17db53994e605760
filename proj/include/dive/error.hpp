#pragma once

#include <stdexcept>
#include <string>

namespace dive {

/// Failure category; maps one-to-one onto the CLI exit codes.
enum class ErrorKind {
  Usage = 1,
  Input = 2,      // missing/unreadable/malformed input or unwritable output
  Invariant = 3,  // internal invariant violation
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error input_error(const std::string& what) { return Error(ErrorKind::Input, what); }
inline Error invariant_error(const std::string& what) { return Error(ErrorKind::Invariant, what); }

}  // namespace dive
