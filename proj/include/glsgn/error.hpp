#pragma once

#include <stdexcept>
#include <string>

namespace glsgn {

enum class ErrorCode {
    ShapeMismatch,
    InvalidArgument,
    UnsupportedFormat,
    MalformedHeader,
    TruncatedPayload,
    UnsupportedMaxval,
    Io,
    CorruptCheckpoint,
    Config,
};

const char* to_string(ErrorCode code);

// Every failure raised by the library carries a code so callers (the CLI in
// particular) can map it onto an exit status without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

} // namespace glsgn
