#pragma once

#include <atomic>

namespace scavenger {

// Seconds as a double. Wall clocks count from the Unix epoch; virtual clocks
// count from an arbitrary origin that is treated as local midnight.
class Clock {
public:
    virtual ~Clock() = default;
    virtual double now() const = 0;
    virtual void sleep_until(double t) = 0;
    // Seconds since local midnight for timestamp `t`, in [0, 86400).
    virtual double time_of_day(double t) const = 0;
};

class WallClock final : public Clock {
public:
    double now() const override;
    void sleep_until(double t) override;
    double time_of_day(double t) const override;
};

// Time only moves when someone sleeps or calls set/advance.
class VirtualClock final : public Clock {
public:
    explicit VirtualClock(double start = 0.0) : now_(start) {}

    double now() const override { return now_.load(); }
    void sleep_until(double t) override;
    double time_of_day(double t) const override;

    void set(double t) { now_.store(t); }
    void advance(double dt) { sleep_until(now() + dt); }

private:
    std::atomic<double> now_;
};

} // namespace scavenger
