#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bbox {

enum class Errc {
    InvalidHeader,
    BadMagic,
    UnsupportedVersion,
    SchemaMismatch,
    DimsExceedMax,
    CorruptPayload,
    InvalidFile,
    InvalidConfig,
    CapacityTooSmall,
    IndexOutOfRange,
    PageNotResident,
    SpecMismatch,
    SourceError,
    SampleFailed,
    Shutdown,
    Io,
};

std::string_view errc_name(Errc code);

// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) {
    throw Error(code, message);
}

} // namespace bbox
