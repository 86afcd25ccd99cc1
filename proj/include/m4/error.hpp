#pragma once

#include <stdexcept>
#include <string>

namespace m4 {

/// Raised on violated preconditions and unrecoverable estimation failures.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Wraps an Error with the name of the pipeline stage that produced it.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw Error(message);
}

}  // namespace m4
