#pragma once

#include <stdexcept>
#include <string>

namespace latq {

// Invalid configuration, flag values, preconditions, malformed data.
// The CLI maps this family to exit code 1.
class validation_error : public std::runtime_error {
 public:
  explicit validation_error(const std::string& msg) : std::runtime_error(msg) {}
};

// File and format problems. CLI exit code 2.
class io_error : public std::runtime_error {
 public:
  explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

enum class format_code {
  bad_magic,
  bad_version,
  bad_header,
  bad_descr,
  big_endian,
  fortran_order,
  bad_shape,
  payload_mismatch,
  dtype_mismatch,
  sidecar_version,
  checkpoint_header,
};

inline const char* format_code_name(format_code c) {
  switch (c) {
    case format_code::bad_magic: return "bad_magic";
    case format_code::bad_version: return "bad_version";
    case format_code::bad_header: return "bad_header";
    case format_code::bad_descr: return "bad_descr";
    case format_code::big_endian: return "big_endian";
    case format_code::fortran_order: return "fortran_order";
    case format_code::bad_shape: return "bad_shape";
    case format_code::payload_mismatch: return "payload_mismatch";
    case format_code::dtype_mismatch: return "dtype_mismatch";
    case format_code::sidecar_version: return "sidecar_version";
    case format_code::checkpoint_header: return "checkpoint_header";
  }
  return "unknown";
}

// io_error carrying a machine-checkable code, so callers can tell a
// big-endian rejection from a fortran-order rejection.
class format_error : public io_error {
 public:
  format_error(format_code code, const std::string& msg)
      : io_error(std::string(format_code_name(code)) + ": " + msg), code_(code) {}
  format_code code() const { return code_; }

 private:
  format_code code_;
};

// Numerical failure at runtime (divergence, NaN loss). CLI exit code 3.
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace latq
