#pragma once

#include <stdexcept>
#include <string>

namespace mrct {

enum class ErrorCode {
    invalid_argument,
    invalid_config,
    io_error,
    numeric_error,
    internal,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void throw_invalid_argument(const std::string& msg) {
    throw Error(ErrorCode::invalid_argument, msg);
}
[[noreturn]] inline void throw_invalid_config(const std::string& msg) {
    throw Error(ErrorCode::invalid_config, msg);
}
[[noreturn]] inline void throw_io_error(const std::string& msg) {
    throw Error(ErrorCode::io_error, msg);
}
[[noreturn]] inline void throw_numeric_error(const std::string& msg) {
    throw Error(ErrorCode::numeric_error, msg);
}
[[noreturn]] inline void throw_internal(const std::string& msg) {
    throw Error(ErrorCode::internal, msg);
}

} // namespace mrct
