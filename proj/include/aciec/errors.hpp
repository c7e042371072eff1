#pragma once

#include <stdexcept>
#include <string>

namespace aciec {

// Exit-code mapping: UsageError -> 1, DataError -> 2, ClientError -> 3.
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Failures of external clients (encoder, chat, OCR) or pipeline stages.
struct ClientError : std::runtime_error {
    explicit ClientError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised by the hierarchical sampler when no further triple can be formed.
struct EpochExhausted : std::runtime_error {
    EpochExhausted() : std::runtime_error("epoch exhausted") {}
};

}  // namespace aciec
