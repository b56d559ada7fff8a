#pragma once

#include <stdexcept>
#include <string>

namespace tractor {

// Exit-code relevant categories; the CLI maps these to process status.
enum class ErrorKind { BadInput, ChartExit, Precondition, Verification };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error bad_input(const std::string& what) {
  return Error(ErrorKind::BadInput, what);
}
inline Error precondition(const std::string& what) {
  return Error(ErrorKind::Precondition, what);
}

}  // namespace tractor
