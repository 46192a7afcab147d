#pragma once

#include <stdexcept>
#include <string>

namespace tabby {

// Error classes map one-to-one onto CLI exit codes.
enum class ErrorKind : int {
  kInvalidArgument = 2,
  kSchema = 3,
  kData = 4,
  kEncoding = 5,
  kModel = 6,
  kTraining = 7,
  kSampling = 8,
  kEvaluation = 9,
  kIo = 10,
  kCheckpoint = 11,
};

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
  if (!condition) fail(kind, message);
}

}  // namespace tabby
