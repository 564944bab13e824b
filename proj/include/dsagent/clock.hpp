// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cstdint>

namespace dsagent {

/// Source of every timestamp and duration the engine records. Deadlines use
/// the steady clock directly; only values that end up in a Session go
/// through this interface, so runs can be replayed bit-exactly.
class Clock {
public:
    virtual ~Clock() = default;
    /// Milliseconds since the Unix epoch.
    virtual std::int64_t now_ms() = 0;
};

class SystemClock final : public Clock {
public:
    std::int64_t now_ms() override;
};

/// Deterministic clock: every read returns the current value and then
/// advances it by `step_ms`.
class ManualClock final : public Clock {
public:
    explicit ManualClock(std::int64_t start_ms = 1'700'000'000'000, std::int64_t step_ms = 1)
        : next_(start_ms), step_(step_ms) {}

    std::int64_t now_ms() override { return next_.fetch_add(step_); }

private:
    std::atomic<std::int64_t> next_;
    std::int64_t step_;
};

} // namespace dsagent
