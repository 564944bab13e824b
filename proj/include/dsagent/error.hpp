// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dsagent {

enum class ErrorCode {
    // domain
    InvalidSpec,
    InvalidConfig,
    SessionClosed,
    InvalidState,
    // llm gateway
    AuthError,
    TransportError,
    BackendError,
    EmptyScript,
    UnknownBackend,
    // action parsing
    UnknownAction,
    MissingField,
    UnexpectedField,
    InvalidFieldType,
    NoJsonFound,
    // orchestrator
    LimitReached,
    ActionParseFailure,
    // sandbox
    ImageMissing,
    RuntimeUnavailable,
    DataPathMissing,
    SandboxDead,
    // assets / serialization
    IoError,
    VersionUnknown,
    SchemaViolation,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }
    /// Message without the "<Code>: " prefix.
    [[nodiscard]] const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

/// Error raised while loading a run file; `path` is a JSON pointer.
class SchemaError : public Error {
public:
    SchemaError(std::string path, const std::string& message);

    [[nodiscard]] const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

} // namespace dsagent
