#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace stresslab {

/// Exception carrying a stable machine-readable code alongside the message.
/// Codes are what the CLI prints in its one-line error output.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

[[noreturn]] inline void fail(std::string code, const std::string& msg) {
  throw Error(std::move(code), msg);
}

inline void require(bool cond, const char* code, const std::string& msg) {
  if (!cond) fail(code, msg);
}

}  // namespace stresslab
