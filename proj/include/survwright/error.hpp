#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace survwright {

// All library failures are reported as Error. `code` is a short stable
// identifier (used in CLI/HTTP error bodies), `what()` is the human message.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

}  // namespace survwright
