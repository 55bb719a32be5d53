#pragma once

#include <stdexcept>
#include <string>

namespace ldct {

/// Coarse failure categories. The CLI maps each kind to its own exit code.
enum class ErrorKind {
  kInvalidArgument,  // precondition violated by the caller
  kShape,            // tensor/image shape mismatch or indivisible dimensions
  kFormat,           // bad magic bytes or unparseable container/manifest
  kTruncated,        // payload shorter than the header promises
  kDimension,        // header dimensions inconsistent with the payload or invariants
  kIo,               // file missing/unwritable
  kConfig,           // malformed or out-of-range configuration
  kNumerical,        // non-finite values, zero norms, degenerate statistics
  kEmptyForeground,  // query sampling on a mask with no foreground
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) fail(kind, what);
}

}  // namespace ldct
