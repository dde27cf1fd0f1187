#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <variant>

namespace cuem {

enum class Errc {
    empty_query,
    malformed_history,
    precondition,
    backend_unavailable,
    unknown_image,
    missing_sentinel,
    unknown_api,
    connector_failure,
    no_image,
    enrichment_empty,
    empty_reference,
    parse_error,
    io_error,
    invalid_config,
    invalid_argument,
};

const char* errc_name(Errc code);

struct Error {
    Errc code;
    std::string message;
};

inline Error make_error(Errc code, std::string message) {
    return Error{code, std::move(message)};
}

template <typename T>
class Result;

/// Convenience for `return make_error<T>(...)` in functions returning Result<T>.
template <typename T>
Result<T> make_error(Errc code, std::string message) {
    return Result<T>(Error{code, std::move(message)});
}

/// Value-or-error return type used by every fallible operation.
template <typename T>
class Result {
public:
    Result(T value) : v_(std::move(value)) {}
    Result(Error error) : v_(std::move(error)) {}

    bool ok() const { return std::holds_alternative<T>(v_); }
    explicit operator bool() const { return ok(); }

    const T& value() const& {
        if (!ok()) throw std::runtime_error("Result::value on error: " + std::get<Error>(v_).message);
        return std::get<T>(v_);
    }
    T& value() & {
        if (!ok()) throw std::runtime_error("Result::value on error: " + std::get<Error>(v_).message);
        return std::get<T>(v_);
    }
    /// Moves the value out, leaving the Result in a consumed state.
    T take() {
        if (!ok()) throw std::runtime_error("Result::take on error: " + std::get<Error>(v_).message);
        return std::get<T>(std::move(v_));
    }

    const Error& error() const {
        if (ok()) throw std::runtime_error("Result::error on success");
        return std::get<Error>(v_);
    }
    Errc code() const { return error().code; }

private:
    std::variant<T, Error> v_;
};

template <>
class Result<void> {
public:
    Result() = default;
    Result(Error error) : err_(std::move(error)), has_err_(true) {}

    bool ok() const { return !has_err_; }
    explicit operator bool() const { return ok(); }

    const Error& error() const {
        if (ok()) throw std::runtime_error("Result::error on success");
        return err_;
    }
    Errc code() const { return error().code; }

private:
    Error err_{};
    bool has_err_ = false;
};

}  // namespace cuem
