#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tls {

// Every failure raised by the library carries a stable machine-readable code
// (used verbatim in the CLI's error JSON) next to the human message.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

struct InvalidInput : Error {
    explicit InvalidInput(const std::string& message) : Error("invalid_input", message) {}
};

struct UndefinedLoss : Error {
    explicit UndefinedLoss(const std::string& message) : Error("undefined_loss", message) {}
};

struct UndefinedMetric : Error {
    explicit UndefinedMetric(const std::string& message) : Error("undefined_metric", message) {}
};

struct NumericFailure : Error {
    explicit NumericFailure(const std::string& message) : Error("numeric_failure", message) {}
};

struct GenerationError : Error {
    explicit GenerationError(const std::string& message) : Error("generation_error", message) {}
};

struct IoError : Error {
    explicit IoError(const std::string& message) : Error("io_error", message) {}
};

namespace detail {

inline void require(bool condition, std::string_view message) {
    if (!condition) throw InvalidInput(std::string(message));
}

}  // namespace detail
}  // namespace tls
