#pragma once

#include <stdexcept>
#include <string>

namespace anca {

enum class ErrorCode {
  ok = 0,
  config = 1,
  io = 2,
  data = 3,
  shape = 4,
  contract = 5,
  numeric = 6,
  internal = 7,
};

inline const char* error_category(ErrorCode c) {
  switch (c) {
    case ErrorCode::ok: return "ok";
    case ErrorCode::config: return "config_error";
    case ErrorCode::io: return "io_error";
    case ErrorCode::data: return "data_error";
    case ErrorCode::shape: return "shape_error";
    case ErrorCode::contract: return "contract_violation";
    case ErrorCode::numeric: return "numeric_error";
    default: return "internal_error";
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg)
      : std::runtime_error(msg), code_(code) {}
  ErrorCode code() const { return code_; }
  const char* category() const { return error_category(code_); }

 private:
  ErrorCode code_;
};

}  // namespace anca
