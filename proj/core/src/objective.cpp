#include "scavenger/objective.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <thread>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "scavenger/errors.hpp"
#include "scavenger/keyvalue.hpp"

namespace scavenger {

ConfigVector apply(ConfigVector config, Change change) {
    config.levels.at(change.index) = change.new_value;
    return config;
}

std::optional<double> Objective::evaluate(const ConfigVector& config, const Checkpoint& checkpoint) const {
    if (checkpoint && !checkpoint(0.0)) return std::nullopt;
    double v = evaluate(config);
    if (checkpoint && !checkpoint(1.0)) return std::nullopt;
    return v;
}

void Objective::validate(const ConfigVector& config) const {
    if (config.size() != length()) {
        throw ContractError(fmt::format("config length {} does not match objective length {}", config.size(), length()));
    }
    for (std::size_t i = 0; i < config.size(); ++i) {
        if (config[i] < 0 || config[i] >= level_count()) {
            throw ContractError(fmt::format("config[{}] = {} outside [0, {})", i, config[i], level_count()));
        }
    }
}

PhaseMaskObjective::PhaseMaskObjective(std::size_t n, int levels, std::size_t target_order)
    : n_(n), levels_(levels), k_(target_order) {
    if (n_ < 1) throw ContractError("phase mask needs n >= 1");
    if (levels_ < 2) throw ContractError("phase mask needs at least 2 levels");
    if (k_ >= n_) throw ContractError(fmt::format("target order {} outside [0, {})", k_, n_));
    const std::size_t period = static_cast<std::size_t>(levels_) * n_;
    cos_.resize(period);
    sin_.resize(period);
    for (std::size_t r = 0; r < period; ++r) {
        double angle = 2.0 * std::numbers::pi * static_cast<double>(r) / static_cast<double>(period);
        cos_[r] = std::cos(angle);
        sin_[r] = std::sin(angle);
    }
}

double PhaseMaskObjective::efficiency(const ConfigVector& config, std::size_t order) const {
    validate(config);
    if (order >= n_) throw ContractError(fmt::format("order {} outside [0, {})", order, n_));
    const std::size_t period = static_cast<std::size_t>(levels_) * n_;
    const std::size_t L = static_cast<std::size_t>(levels_);
    double re = 0.0;
    double im = 0.0;
    for (std::size_t m = 0; m < n_; ++m) {
        // c_m / L - k m / n  ==  (c_m n - k m L) / (L n)
        std::size_t r = (static_cast<std::size_t>(config[m]) * n_ + period - (order * m % n_) * L) % period;
        re += cos_[r];
        im += sin_[r];
    }
    double nn = static_cast<double>(n_);
    return (re * re + im * im) / (nn * nn);
}

double PhaseMaskObjective::evaluate(const ConfigVector& config) const { return efficiency(config, k_); }

std::optional<double> PhaseMaskObjective::evaluate(const ConfigVector& config, const Checkpoint& checkpoint) const {
    if (!checkpoint) return evaluate(config);
    // The sum is cheap; checkpoints bracket it at 0% and 100%.
    if (!checkpoint(0.0)) return std::nullopt;
    double v = evaluate(config);
    if (!checkpoint(1.0)) return std::nullopt;
    return v;
}

SlowObjective::SlowObjective(std::shared_ptr<const Objective> inner, double seconds)
    : inner_(std::move(inner)), seconds_(seconds) {
    if (!inner_) throw ContractError("SlowObjective needs an inner objective");
    if (!(seconds_ >= 0.0)) throw ContractError("eval_cost must be >= 0");
}

double SlowObjective::evaluate(const ConfigVector& config) const {
    return *evaluate(config, Checkpoint{});
}

std::optional<double> SlowObjective::evaluate(const ConfigVector& config, const Checkpoint& checkpoint) const {
    constexpr int kSlices = 10;
    auto slice = std::chrono::duration<double>(seconds_ / kSlices);
    for (int i = 0; i < kSlices; ++i) {
        if (checkpoint && !checkpoint(static_cast<double>(i) / kSlices)) return std::nullopt;
        std::this_thread::sleep_for(slice);
    }
    double v = inner_->evaluate(config);
    if (checkpoint && !checkpoint(1.0)) return std::nullopt;
    return v;
}

Optimum brute_force_optimum(const Objective& objective) {
    const std::size_t n = objective.length();
    const int L = objective.level_count();
    double total = std::pow(static_cast<double>(L), static_cast<double>(n));
    if (total > static_cast<double>(1u << 20)) {
        throw ContractError(fmt::format("refusing to enumerate {}^{} configurations (limit 2^20)", L, n));
    }
    ConfigVector current{std::vector<int>(n, 0)};
    Optimum best{current, objective.evaluate(current)};
    for (;;) {
        // Odometer increment with the last element fastest: visits configs in
        // lexicographic order, so keeping the first maximizer keeps the
        // smallest. Mathematically tied configs (rotations, global phase) can
        // differ in the last bits, hence the tolerance.
        std::size_t i = n;
        while (i > 0) {
            --i;
            if (++current[i] < L) break;
            current[i] = 0;
            if (i == 0) return best;
        }
        double v = objective.evaluate(current);
        if (v > best.value + 1e-12) best = {current, v};
    }
}

std::vector<Change> neighbors(const Objective& objective, const ConfigVector& config) {
    objective.validate(config);
    std::vector<Change> out;
    out.reserve(config.size() * static_cast<std::size_t>(objective.level_count() - 1));
    for (std::size_t i = 0; i < config.size(); ++i) {
        for (int v = 0; v < objective.level_count(); ++v) {
            if (v != config[i]) out.push_back({i, v});
        }
    }
    return out;
}

void ObjectiveParams::write(KeyValues& out) const {
    out.add("objective", kind);
    out.add("n", std::to_string(n));
    out.add("levels", std::to_string(levels));
    out.add("target_order", std::to_string(target_order));
    if (eval_cost > 0) out.add("eval_cost", format_double(eval_cost));
}

ObjectiveParams ObjectiveParams::read(const KeyValues& in) {
    ObjectiveParams p;
    p.kind = in.get("objective").value_or("phase_mask");
    if (p.kind != "phase_mask") throw FormatError(fmt::format("{}: unknown objective '{}'", in.source(), p.kind));
    auto n = in.require_int("n");
    auto levels = in.require_int("levels");
    auto k = in.require_int("target_order");
    if (n < 1) throw FormatError(fmt::format("{}: n must be >= 1", in.source()));
    if (levels < 2) throw FormatError(fmt::format("{}: levels must be >= 2", in.source()));
    if (k < 0 || k >= n) throw FormatError(fmt::format("{}: target_order must be in [0, n)", in.source()));
    p.n = static_cast<std::size_t>(n);
    p.levels = static_cast<int>(levels);
    p.target_order = static_cast<std::size_t>(k);
    p.eval_cost = in.get_double("eval_cost").value_or(0.0);
    if (p.eval_cost < 0) throw FormatError(fmt::format("{}: eval_cost must be >= 0", in.source()));
    return p;
}

std::shared_ptr<const Objective> make_objective(const ObjectiveParams& params) {
    std::shared_ptr<const Objective> obj =
        std::make_shared<PhaseMaskObjective>(params.n, params.levels, params.target_order);
    if (params.eval_cost > 0) obj = std::make_shared<SlowObjective>(std::move(obj), params.eval_cost);
    return obj;
}

ConfigVector initial_config(const ObjectiveParams& params, std::string_view kind, std::uint64_t seed) {
    ConfigVector c{std::vector<int>(params.n, 0)};
    if (kind == "zero") return c;
    if (kind != "random") throw ContractError(fmt::format("unknown --init-config '{}' (zero | random)", kind));
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> level(0, params.levels - 1);
    for (auto& v : c.levels) v = level(rng);
    return c;
}

std::string to_string(const ConfigVector& config) { return fmt::format("{}", fmt::join(config.levels, " ")); }

} // namespace scavenger
