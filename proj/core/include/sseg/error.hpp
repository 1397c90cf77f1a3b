#pragma once

#include <stdexcept>
#include <string>

namespace sseg {

// Error categories map 1:1 onto the CLI exit codes (config=2, io=3, numeric=4).
// Shape errors are programming/contract errors and map to config.
enum class ErrorKind { shape, config, io, numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error shape_error(const std::string& msg) { return Error(ErrorKind::shape, msg); }
inline Error config_error(const std::string& msg) { return Error(ErrorKind::config, msg); }
inline Error io_error(const std::string& msg) { return Error(ErrorKind::io, msg); }
inline Error numeric_error(const std::string& msg) { return Error(ErrorKind::numeric, msg); }

// Thrown when a transformed sentence lands entirely outside the canvas;
// the synthesizer catches it and retries with fresh parameters.
class PlacementError : public Error {
 public:
  explicit PlacementError(const std::string& msg) : Error(ErrorKind::numeric, msg) {}
};

}  // namespace sseg
