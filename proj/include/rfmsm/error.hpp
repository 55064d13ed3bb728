#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rfmsm {

enum class ErrorCode {
    invalid_argument,
    empty_corpus,
    degenerate_variance,
    too_small,
    pulse_train_exceeds_frame,
    undefined_snr,
    degenerate_noise,
    shape_mismatch,
    bad_magic,
    bad_header,
    truncated_body,
    label_count_mismatch,
    insufficient_cell,
    indivisible_length,
    numerical_failure,
    config,
    io,
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::empty_corpus: return "empty_corpus";
    case ErrorCode::degenerate_variance: return "degenerate_variance";
    case ErrorCode::too_small: return "too_small";
    case ErrorCode::pulse_train_exceeds_frame: return "pulse_train_exceeds_frame";
    case ErrorCode::undefined_snr: return "undefined_snr";
    case ErrorCode::degenerate_noise: return "degenerate_noise";
    case ErrorCode::shape_mismatch: return "shape_mismatch";
    case ErrorCode::bad_magic: return "bad_magic";
    case ErrorCode::bad_header: return "bad_header";
    case ErrorCode::truncated_body: return "truncated_body";
    case ErrorCode::label_count_mismatch: return "label_count_mismatch";
    case ErrorCode::insufficient_cell: return "insufficient_cell";
    case ErrorCode::indivisible_length: return "indivisible_length";
    case ErrorCode::numerical_failure: return "numerical_failure";
    case ErrorCode::config: return "config";
    case ErrorCode::io: return "io";
    }
    return "unknown";
}

/// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
    throw Error(code, what);
}

inline void require(bool cond, ErrorCode code, const std::string& what) {
    if (!cond) fail(code, what);
}

} // namespace rfmsm
