#pragma once

// Trial costing, expected information gain and the three trial selection
// strategies: ase (information per unit cost), naive (cheapest first) and
// random (seeded uniform).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gemlearn/abduction.hpp"
#include "gemlearn/cost.hpp"
#include "gemlearn/engine.hpp"
#include "gemlearn/facts.hpp"

namespace gemlearn {

inline Cost trial_cost(const Trial& trial, const Environment& env) {
    const Medium* medium = env.find_medium(trial.medium);
    if (!medium) throw Error(ErrorKind::UnknownMedium, "unknown medium '" + trial.medium + "'");
    Cost total = env.base_cost;
    for (const auto& m : medium->metabolites) {
        auto it = env.prices.find(m);
        if (it == env.prices.end()) throw Error(ErrorKind::Validation, "unpriced nutrient '" + m + "'");
        total += it->second;
    }
    return total;
}

/// Expected reduction in log2(alive count) under a uniform prior when
/// `growth` of `alive` hypotheses predict Growth.
inline double expected_information_gain(std::size_t alive, std::size_t growth) {
    if (alive == 0 || growth == 0 || growth >= alive) return 0.0;
    const double n = static_cast<double>(alive);
    const double k = static_cast<double>(growth);
    const double p = k / n;
    return std::log2(n) - (p * std::log2(k) + (1.0 - p) * std::log2(n - k));
}

inline double expected_information_gain(const Trial& trial, const HypothesisSpace& space, const CompiledModel& c,
                                        unsigned workers = 1) {
    const std::size_t n = space.alive_count();
    if (n == 0) return 0.0;
    const TrialRef ref = resolve(c, trial);
    const auto k = alive_growth_counts(space, c, std::span<const TrialRef>(&ref, 1), workers);
    return expected_information_gain(n, k[0]);
}

/// Every (wild-type or single-gene deletion) x medium pair, in trial order.
inline std::vector<Trial> design_space(const CompiledModel& c) {
    std::vector<Trial> out;
    out.reserve((c.genes.size() + 1) * c.media.size());
    for (const auto& m : c.media) {
        out.push_back(Trial::wild_type(m.id));
        for (const auto& g : c.genes) out.push_back(Trial::deletion(g, m.id));
    }
    std::sort(out.begin(), out.end());
    return out;
}

enum class StrategyKind { Ase, Naive, Random };

inline const char* to_string(StrategyKind k) noexcept {
    switch (k) {
        case StrategyKind::Ase: return "ase";
        case StrategyKind::Naive: return "naive";
        case StrategyKind::Random: return "random";
    }
    return "?";
}

struct Strategy {
    StrategyKind kind = StrategyKind::Ase;
    std::optional<std::uint64_t> seed;  // random only

    static Strategy ase() { return {StrategyKind::Ase, std::nullopt}; }
    static Strategy naive() { return {StrategyKind::Naive, std::nullopt}; }
    static Strategy random(std::uint64_t seed) { return {StrategyKind::Random, seed}; }

    /// `seed` is ignored unless the strategy is random.
    static Strategy parse(std::string_view name, std::optional<std::uint64_t> seed) {
        if (name == "ase") return ase();
        if (name == "naive") return naive();
        if (name == "random") {
            if (!seed) throw Error(ErrorKind::Validation, "random strategy requires a seed");
            return random(*seed);
        }
        throw Error(ErrorKind::Validation, "unknown strategy '" + std::string(name) + "'");
    }

    friend bool operator==(const Strategy&, const Strategy&) = default;
};

struct TrialScore {
    Trial trial;
    Cost cost;
    double eig_bits = 0.0;
    double utility = 0.0;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Uniform index in [0, n) drawn from the generator for (seed, step).
inline std::size_t seeded_pick(std::uint64_t seed, std::uint64_t step, std::size_t n) {
    std::uint64_t state = seed ^ (step * 0xD1B54A32D192ED03ull);
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    for (;;) {
        const std::uint64_t x = splitmix64(state);
        if (x < limit) return static_cast<std::size_t>(x % bound);
    }
}

inline std::vector<Trial> untried(std::span<const Trial> candidates, const std::set<Trial>& tried) {
    std::vector<Trial> out;
    for (const auto& t : candidates)
        if (!tried.count(t)) out.push_back(t);
    if (!std::is_sorted(out.begin(), out.end())) std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

}  // namespace detail

/// Scores trials against the alive hypotheses of `space`. Growth counts
/// come from `table` when it covers every trial.
inline std::vector<TrialScore> score_trials(std::span<const Trial> trials, const HypothesisSpace& space,
                                            const CompiledModel& c, const Environment& env, unsigned workers = 1,
                                            const PredictionTable* table = nullptr) {
    std::vector<TrialScore> out;
    out.reserve(trials.size());
    std::vector<TrialRef> refs;
    refs.reserve(trials.size());
    for (const auto& t : trials) {
        const Cost cost = trial_cost(t, env);
        if (cost.cents() <= 0)
            throw Error(ErrorKind::Validation, "trial " + t.str() + " has zero cost; set a positive base_cost");
        out.push_back({t, cost, 0.0, 0.0});
        refs.push_back(resolve(c, t));
    }
    const std::size_t n = space.alive_count();
    std::vector<std::size_t> k;
    if (table) {
        std::vector<std::size_t> rows;
        for (const auto& t : trials) {
            auto i = table->trial_index(t);
            if (!i) break;
            rows.push_back(*i);
        }
        if (rows.size() == trials.size()) {
            const auto all = table->growth_counts(space);
            for (auto i : rows) k.push_back(all[i]);
        }
    }
    if (k.size() != trials.size()) k = alive_growth_counts(space, c, refs, workers);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i].eig_bits = expected_information_gain(n, k[i]);
        out[i].utility = out[i].eig_bits / out[i].cost.value();
    }
    return out;
}

/// Picks the next trial, or nullopt when the strategy has nothing left to
/// run. `step` is the 0-based index of the selection within the campaign
/// and feeds the random strategy's generator.
inline std::optional<TrialScore> select_trial(const Strategy& strategy, std::span<const Trial> candidates,
                                              const std::set<Trial>& tried, const HypothesisSpace& space,
                                              const CompiledModel& c, const Environment& env, std::uint64_t step = 0,
                                              unsigned workers = 1, const PredictionTable* table = nullptr) {
    const auto open = detail::untried(candidates, tried);
    if (open.empty()) return std::nullopt;

    switch (strategy.kind) {
        case StrategyKind::Ase: {
            const auto scores = score_trials(open, space, c, env, workers, table);
            const TrialScore* best = nullptr;
            for (const auto& s : scores) {
                if (s.eig_bits <= 0.0) continue;
                if (!best) {
                    best = &s;
                    continue;
                }
                // eig/cost compared as eig * other_cost, exact in cents.
                const double lhs = s.eig_bits * static_cast<double>(best->cost.cents());
                const double rhs = best->eig_bits * static_cast<double>(s.cost.cents());
                if (lhs > rhs || (lhs == rhs && s.cost < best->cost)) best = &s;
                // Equal utility and cost: `open` is sorted, keep the earlier.
            }
            if (!best) return std::nullopt;
            return *best;
        }
        case StrategyKind::Naive: {
            const Trial* best = nullptr;
            Cost best_cost;
            for (const auto& t : open) {
                const Cost cost = trial_cost(t, env);
                if (!best || cost < best_cost) {
                    best = &t;
                    best_cost = cost;
                }
            }
            auto score = score_trials(std::span(best, 1), space, c, env, workers, table);
            return score.front();
        }
        case StrategyKind::Random: {
            if (!strategy.seed) throw Error(ErrorKind::Validation, "random strategy requires a seed");
            const auto& pick = open[detail::seeded_pick(*strategy.seed, step, open.size())];
            auto score = score_trials(std::span(&pick, 1), space, c, env, workers, table);
            return score.front();
        }
    }
    return std::nullopt;
}

}  // namespace gemlearn
