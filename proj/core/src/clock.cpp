#include "scavenger/clock.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <thread>

namespace scavenger {

double WallClock::now() const {
    using namespace std::chrono;
    return duration<double>(system_clock::now().time_since_epoch()).count();
}

void WallClock::sleep_until(double t) {
    double dt = t - now();
    if (dt > 0) std::this_thread::sleep_for(std::chrono::duration<double>(dt));
}

double WallClock::time_of_day(double t) const {
    auto secs = static_cast<std::time_t>(std::floor(t));
    std::tm local{};
    localtime_r(&secs, &local);
    return local.tm_hour * 3600.0 + local.tm_min * 60.0 + local.tm_sec + (t - std::floor(t));
}

void VirtualClock::sleep_until(double t) {
    double cur = now_.load();
    while (t > cur && !now_.compare_exchange_weak(cur, t)) {
    }
}

double VirtualClock::time_of_day(double t) const {
    double r = std::fmod(t, 86400.0);
    return r < 0 ? r + 86400.0 : r;
}

} // namespace scavenger
