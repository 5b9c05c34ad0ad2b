#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace scavenger {

class KeyValues;

// A discrete configuration: one level in [0, L) per element.
struct ConfigVector {
    std::vector<int> levels;

    std::size_t size() const { return levels.size(); }
    int operator[](std::size_t i) const { return levels[i]; }
    int& operator[](std::size_t i) { return levels[i]; }

    friend bool operator==(const ConfigVector&, const ConfigVector&) = default;
    friend auto operator<=>(const ConfigVector&, const ConfigVector&) = default;
};

// A single-element modification.
struct Change {
    std::size_t index = 0;
    int new_value = 0;

    friend bool operator==(const Change&, const Change&) = default;
};

ConfigVector apply(ConfigVector config, Change change);

// Progress callback for long evaluations; `fraction` is the share of work done.
// Returning false asks the evaluation to abandon.
using Checkpoint = std::function<bool(double fraction)>;

// Higher is better. Implementations must be pure and safe to call concurrently.
class Objective {
public:
    virtual ~Objective() = default;

    virtual std::size_t length() const = 0;
    virtual int level_count() const = 0;
    // Relative cost of one evaluation; the simulator scales t_eval by it.
    virtual double cost_hint() const { return 1.0; }

    virtual double evaluate(const ConfigVector& config) const = 0;
    // Interruptible form. Returns nullopt when a checkpoint said stop.
    virtual std::optional<double> evaluate(const ConfigVector& config, const Checkpoint& checkpoint) const;

    // Throws ContractError on length or level mismatch.
    void validate(const ConfigVector& config) const;
};

// Far-field efficiency of a 1-D phase mask into diffraction order k:
//   eta_k = |sum_m exp(i 2pi (c_m / L - k m / n))|^2 / n^2
class PhaseMaskObjective final : public Objective {
public:
    PhaseMaskObjective(std::size_t n, int levels, std::size_t target_order);

    std::size_t length() const override { return n_; }
    int level_count() const override { return levels_; }
    std::size_t target_order() const { return k_; }

    double evaluate(const ConfigVector& config) const override;
    std::optional<double> evaluate(const ConfigVector& config, const Checkpoint& checkpoint) const override;

    // Efficiency into an arbitrary order, for normalization checks.
    double efficiency(const ConfigVector& config, std::size_t order) const;

private:
    std::size_t n_;
    int levels_;
    std::size_t k_;
    // cos/sin of 2pi r / (L n) for r in [0, L n): phases are reduced exactly in
    // integers before the table lookup.
    std::vector<double> cos_;
    std::vector<double> sin_;
};

// Wraps another objective and makes every evaluation take `seconds` of wall
// time, checking the checkpoint every tenth of the way. Stands in for an
// expensive solver when running real workers.
class SlowObjective final : public Objective {
public:
    SlowObjective(std::shared_ptr<const Objective> inner, double seconds);

    std::size_t length() const override { return inner_->length(); }
    int level_count() const override { return inner_->level_count(); }
    double cost_hint() const override { return seconds_; }

    double evaluate(const ConfigVector& config) const override;
    std::optional<double> evaluate(const ConfigVector& config, const Checkpoint& checkpoint) const override;

private:
    std::shared_ptr<const Objective> inner_;
    double seconds_;
};

struct Optimum {
    ConfigVector config;
    double value = 0.0;
};

// Exhaustive search over all L^n configs; ties (within 1e-12) go to the
// lexicographically smallest config. Refuses when L^n > 2^20.
Optimum brute_force_optimum(const Objective& objective);

// All n*(L-1) single-element changes of `config`, index-major.
std::vector<Change> neighbors(const Objective& objective, const ConfigVector& config);

// Objective parameters as stored in manifest.dat.
struct ObjectiveParams {
    std::string kind = "phase_mask";
    std::size_t n = 8;
    int levels = 2;
    std::size_t target_order = 1;
    double eval_cost = 0.0; // seconds of artificial delay per evaluation

    void write(KeyValues& out) const;
    static ObjectiveParams read(const KeyValues& in);
};

std::shared_ptr<const Objective> make_objective(const ObjectiveParams& params);

// "zero" (all levels 0) or "random" (uniform levels from `seed`).
ConfigVector initial_config(const ObjectiveParams& params, std::string_view kind, std::uint64_t seed);

std::string to_string(const ConfigVector& config);

} // namespace scavenger
