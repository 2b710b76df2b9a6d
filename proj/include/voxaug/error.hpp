#pragma once

#include <stdexcept>
#include <string>

namespace voxaug {

// All toolkit failures surface as this type. `code()` is a short stable token
// used by the CLI when printing machine-parsable error lines.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& what)
        : std::runtime_error(what), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

[[noreturn]] inline void fail(const std::string& code, const std::string& what) {
    throw Error(code, what);
}

} // namespace voxaug
