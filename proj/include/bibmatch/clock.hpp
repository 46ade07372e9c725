#pragma once

#include <chrono>
#include <mutex>
#include <thread>

namespace bibmatch {

/// Injectable monotonic clock so pacing and backoff are testable without
/// real waiting.
class Clock {
public:
    virtual ~Clock() = default;
    virtual std::chrono::microseconds now() = 0;
    virtual void sleep_for(std::chrono::microseconds d) = 0;
};

class SystemClock final : public Clock {
public:
    std::chrono::microseconds now() override {
        return std::chrono::duration_cast<std::chrono::microseconds>(
            std::chrono::steady_clock::now().time_since_epoch());
    }
    void sleep_for(std::chrono::microseconds d) override {
        std::this_thread::sleep_for(d);
    }
};

/// Time only advances when someone sleeps.
class VirtualClock final : public Clock {
public:
    std::chrono::microseconds now() override {
        std::lock_guard lock(mu_);
        return now_;
    }
    void sleep_for(std::chrono::microseconds d) override {
        std::lock_guard lock(mu_);
        if (d.count() > 0)
            now_ += d;
    }

private:
    std::mutex mu_;
    std::chrono::microseconds now_{0};
};

}  // namespace bibmatch
