// SPDX-License-Identifier: Apache-2.0
#include "dsagent/error.hpp"

#include "dsagent/clock.hpp"

#include <chrono>

namespace dsagent {

std::string_view to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::SessionClosed: return "SessionClosed";
    case ErrorCode::InvalidState: return "InvalidState";
    case ErrorCode::AuthError: return "AuthError";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::BackendError: return "BackendError";
    case ErrorCode::EmptyScript: return "EmptyScript";
    case ErrorCode::UnknownBackend: return "UnknownBackend";
    case ErrorCode::UnknownAction: return "UnknownAction";
    case ErrorCode::MissingField: return "MissingField";
    case ErrorCode::UnexpectedField: return "UnexpectedField";
    case ErrorCode::InvalidFieldType: return "InvalidFieldType";
    case ErrorCode::NoJsonFound: return "NoJsonFound";
    case ErrorCode::LimitReached: return "LimitReached";
    case ErrorCode::ActionParseFailure: return "ActionParseFailure";
    case ErrorCode::ImageMissing: return "ImageMissing";
    case ErrorCode::RuntimeUnavailable: return "RuntimeUnavailable";
    case ErrorCode::DataPathMissing: return "DataPathMissing";
    case ErrorCode::SandboxDead: return "SandboxDead";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::VersionUnknown: return "VersionUnknown";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    }
    return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), detail_(message)
{
}

SchemaError::SchemaError(std::string path, const std::string& message)
    : Error(ErrorCode::SchemaViolation, (path.empty() ? std::string("/") : path) + ": " + message),
      path_(std::move(path))
{
}

std::int64_t SystemClock::now_ms()
{
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

} // namespace dsagent
