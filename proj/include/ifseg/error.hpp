#pragma once

#include <stdexcept>
#include <string>

namespace ifseg {

// Error categories, mapped to process exit codes by the CLI:
// Usage -> 1, Data -> 2, Numeric -> 3.
enum class ErrorKind { Usage, Data, Numeric };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail_usage(const std::string& msg) { throw Error(ErrorKind::Usage, msg); }
[[noreturn]] inline void fail_data(const std::string& msg) { throw Error(ErrorKind::Data, msg); }
[[noreturn]] inline void fail_numeric(const std::string& msg) { throw Error(ErrorKind::Numeric, msg); }

inline void require_data(bool cond, const std::string& msg) {
    if (!cond) fail_data(msg);
}

}  // namespace ifseg
