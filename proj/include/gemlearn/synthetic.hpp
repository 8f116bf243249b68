#pragma once

// Seeded synthetic models for benchmarks and campaign experiments.
//
// Shape: a handful of core nutrients present in every medium feed a chain
// of biosynthesis reactions (each non-nutrient metabolite has a producer
// whose substrates appear earlier in the chain), so every metabolite is
// synthesisable by the wild type on every medium. The remaining reactions
// are random extra edges, a share of which salvage optional nutrients into
// the chain and make knockout phenotypes depend on the medium.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gemlearn/engine.hpp"
#include "gemlearn/error.hpp"
#include "gemlearn/facts.hpp"
#include "gemlearn/selection.hpp"

namespace gemlearn {

struct SyntheticSpec {
    std::size_t genes = 300;
    std::size_t reactions = 600;
    std::size_t metabolites = 0;  // 0: derived from reactions
    std::size_t media = 5;
    std::size_t essential = 8;
    std::size_t core_nutrients = 3;
    double reversible = 0.1;
    double spontaneous = 0.05;
    std::uint64_t seed = 1;
};

struct SyntheticInstance {
    MetabolicModel model;
    Environment env;
};

namespace detail {

/// splitmix64 stream; the standard distributions are not portable across
/// library implementations, so draws are done by hand.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() { return splitmix64(state_); }

    std::size_t below(std::size_t n) {
        const std::uint64_t bound = n;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        for (;;) {
            const std::uint64_t x = next();
            if (x < limit) return static_cast<std::size_t>(x % bound);
        }
    }

    std::size_t between(std::size_t lo, std::size_t hi) { return lo + below(hi - lo + 1); }

    bool chance(double p) { return static_cast<double>(next() >> 11) * 0x1.0p-53 < p; }

private:
    std::uint64_t state_;
};

/// prefix + i zero-padded to the width of count - 1, so ids sort numerically.
inline std::string numbered(char prefix, std::size_t i, std::size_t count) {
    const auto digits = std::to_string(i);
    const auto width = std::to_string(count > 0 ? count - 1 : 0).size();
    return prefix + std::string(width > digits.size() ? width - digits.size() : 0, '0') + digits;
}

}  // namespace detail

inline SyntheticInstance generate_synthetic(const SyntheticSpec& spec) {
    if (spec.genes == 0 || spec.reactions == 0 || spec.media == 0 || spec.essential == 0 || spec.core_nutrients == 0)
        throw Error(ErrorKind::Validation, "synthetic model parameters must be positive");
    detail::Rng rng(spec.seed);

    const std::size_t optional_nutrients = std::max<std::size_t>(4, 2 * spec.media);
    const std::size_t nutrients = spec.core_nutrients + optional_nutrients;
    std::size_t n_met = spec.metabolites ? spec.metabolites : nutrients + std::max<std::size_t>(spec.reactions * 3 / 5, 1);
    if (n_met <= nutrients) throw Error(ErrorKind::Validation, "too few metabolites for the nutrient pool");
    const std::size_t chain = n_met - nutrients;
    if (chain > spec.reactions) throw Error(ErrorKind::Validation, "need at least one reaction per non-nutrient metabolite");
    if (spec.essential > chain) throw Error(ErrorKind::Validation, "more essential metabolites than synthesisable ones");

    SyntheticInstance out;
    MetabolicModel& m = out.model;
    for (std::size_t i = 0; i < n_met; ++i) m.metabolites.push_back(detail::numbered('m', i, n_met));
    for (std::size_t i = 0; i < spec.genes; ++i) m.genes.push_back(detail::numbered('g', i, spec.genes));
    for (std::size_t i = 0; i < spec.genes; ++i) m.enzymes.push_back(detail::numbered('e', i, spec.genes));

    // Gene-enzyme map: mostly one-to-one, some complexes and multi-function genes.
    for (std::size_t i = 0; i < spec.genes; ++i) {
        m.codes.push_back({m.genes[i], m.enzymes[i]});
        if (rng.chance(0.1)) {
            const auto other = rng.below(spec.genes);
            if (other != i) m.codes.push_back({m.genes[other], m.enzymes[i]});
        }
    }

    auto catalysts = [&]() {
        std::vector<std::string> out;
        if (rng.chance(spec.spontaneous)) return out;
        out.push_back(m.enzymes[rng.below(spec.genes)]);
        if (rng.chance(0.05)) {
            auto iso = m.enzymes[rng.below(spec.genes)];
            if (iso != out.front()) out.push_back(iso);
        }
        return out;
    };
    auto pick_distinct = [&](std::size_t count, auto&& draw) {
        std::vector<std::string> out;
        while (out.size() < count) {
            auto id = draw();
            if (std::find(out.begin(), out.end(), id) == out.end()) out.push_back(id);
        }
        return out;
    };
    std::size_t next_reaction = 0;
    auto add_reaction = [&](std::vector<std::string> subs, std::vector<std::string> prods, bool reversible) {
        Reaction r;
        r.id = detail::numbered('r', next_reaction++, spec.reactions);
        r.enzymes = catalysts();
        r.substrates = std::move(subs);
        r.products = std::move(prods);
        r.reversible = reversible;
        m.reactions.push_back(std::move(r));
    };

    // Chain: the producer of metabolite i draws substrates from the core
    // nutrients and earlier chain metabolites.
    auto chain_or_core = [&](std::size_t limit) {
        const std::size_t pool = spec.core_nutrients + (limit - nutrients);
        const std::size_t k = rng.below(pool);
        return k < spec.core_nutrients ? m.metabolites[k] : m.metabolites[nutrients + (k - spec.core_nutrients)];
    };
    for (std::size_t i = nutrients; i < n_met; ++i) {
        const std::size_t pool = spec.core_nutrients + (i - nutrients);
        auto subs = pick_distinct(std::min<std::size_t>(pool, rng.between(1, 2)), [&] { return chain_or_core(i); });
        add_reaction(std::move(subs), {m.metabolites[i]}, false);
    }

    // Extra edges. A third salvage an optional nutrient into a chain
    // metabolite; the rest connect random metabolites.
    auto any_chain = [&] { return m.metabolites[nutrients + rng.below(chain)]; };
    while (m.reactions.size() < spec.reactions) {
        if (rng.chance(1.0 / 3.0)) {
            const auto nutrient = m.metabolites[spec.core_nutrients + rng.below(optional_nutrients)];
            add_reaction({nutrient}, {any_chain()}, false);
        } else {
            auto subs = pick_distinct(rng.between(1, 2), [&] { return m.metabolites[rng.below(n_met)]; });
            auto prods = pick_distinct(rng.between(1, 2), any_chain);
            const bool overlap = std::any_of(prods.begin(), prods.end(), [&](const std::string& p) {
                return std::find(subs.begin(), subs.end(), p) != subs.end();
            });
            if (overlap) continue;
            add_reaction(std::move(subs), std::move(prods), rng.chance(spec.reversible));
        }
    }

    // Essentials come from the deeper half of the chain.
    const std::size_t deep = nutrients + chain / 2;
    m.essential = pick_distinct(spec.essential, [&] { return m.metabolites[deep + rng.below(n_met - deep)]; });
    std::sort(m.essential.begin(), m.essential.end());

    Environment& env = out.env;
    env.base_cost = Cost::from_cents(100);
    for (std::size_t i = 0; i < nutrients; ++i)
        env.prices[m.metabolites[i]] = Cost::from_cents(static_cast<std::int64_t>(rng.between(50, 2000)));
    for (std::size_t k = 0; k < spec.media; ++k) {
        Medium medium;
        medium.id = detail::numbered('M', k, spec.media);
        for (std::size_t i = 0; i < spec.core_nutrients; ++i) medium.metabolites.push_back(m.metabolites[i]);
        auto extra = pick_distinct(std::min<std::size_t>(optional_nutrients, rng.between(1, 3)), [&] {
            return m.metabolites[spec.core_nutrients + rng.below(optional_nutrients)];
        });
        std::sort(extra.begin(), extra.end());
        medium.metabolites.insert(medium.metabolites.end(), extra.begin(), extra.end());
        env.media.push_back(std::move(medium));
    }
    return out;
}

/// Codes facts whose removal changes at least one single-knockout
/// phenotype on some medium, in model order. Deleting one of these gives
/// an oracle campaign with something to discover.
inline std::vector<GeneEnzyme> detectable_deletions(const MetabolicModel& model, const Environment& env,
                                                    unsigned workers = 1) {
    const auto full = compile(model, env);
    std::vector<GeneEnzyme> out;
    std::vector<unsigned char> keep(model.codes.size(), 0);
    parallel_for(model.codes.size(), workers, [&](std::size_t i, unsigned) {
        MetabolicModel working = model;
        working.codes.erase(working.codes.begin() + static_cast<std::ptrdiff_t>(i));
        const auto c = compile(working, env);
        ClosureWorkspace ws;
        const auto gene = *full.gene_index(model.codes[i].first);
        for (Index med = 0; med < full.media.size(); ++med) {
            const TrialRef t{gene, med};
            if (simulate(full, nullptr, t, ws) != simulate(c, nullptr, t, ws)) {
                keep[i] = 1;
                return;
            }
        }
    });
    for (std::size_t i = 0; i < model.codes.size(); ++i)
        if (keep[i]) out.push_back(model.codes[i]);
    return out;
}

/// Splits a full synthetic model into a working model missing one
/// detectable codes fact, picked with `seed`. nullopt if none qualifies.
inline std::optional<std::pair<MetabolicModel, GeneEnzyme>> delete_detectable(const MetabolicModel& model,
                                                                              const Environment& env,
                                                                              std::uint64_t seed,
                                                                              unsigned workers = 1) {
    const auto options = detectable_deletions(model, env, workers);
    if (options.empty()) return std::nullopt;
    detail::Rng rng(seed);
    const auto fact = options[rng.below(options.size())];
    MetabolicModel working = model;
    working.codes.erase(std::find(working.codes.begin(), working.codes.end(), fact));
    return std::pair{std::move(working), fact};
}

}  // namespace gemlearn
