#pragma once

// Candidate gene-enzyme hypotheses and their pruning against observations.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "gemlearn/engine.hpp"
#include "gemlearn/error.hpp"
#include "gemlearn/facts.hpp"

namespace gemlearn {

class HypothesisSpace {
public:
    HypothesisSpace() = default;
    explicit HypothesisSpace(std::vector<Hypothesis> candidates) : candidates_(std::move(candidates)) {
        std::sort(candidates_.begin(), candidates_.end());
        for (std::size_t i = 1; i < candidates_.size(); ++i)
            if (candidates_[i] == candidates_[i - 1])
                throw Error(ErrorKind::Duplicate, "duplicate candidate " + candidates_[i].id());
        refuted_by_.resize(candidates_.size());
        alive_ = candidates_.size();
        for (std::size_t i = 0; i < candidates_.size(); ++i) {
            Index last = static_cast<Index>(-1);
            for (const auto& ge : candidates_[i].added())
                if (ge.first != last) by_gene_[last = ge.first].push_back(i);
        }
        for (auto& [g, list] : by_gene_) list.erase(std::unique(list.begin(), list.end()), list.end());
    }

    const std::vector<Hypothesis>& candidates() const noexcept { return candidates_; }
    std::size_t size() const noexcept { return candidates_.size(); }
    bool alive(std::size_t i) const { return !refuted_by_[i].has_value(); }
    const std::optional<Observation>& refuted_by(std::size_t i) const { return refuted_by_[i]; }

    std::size_t alive_count() const noexcept { return alive_; }

    /// Smallest alive index, or size() when none is alive.
    std::size_t first_alive() const noexcept { return first_alive_; }
    std::vector<std::size_t> alive_indices() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < candidates_.size(); ++i)
            if (alive(i)) out.push_back(i);
        return out;
    }
    std::vector<Hypothesis> alive_hypotheses() const {
        std::vector<Hypothesis> out;
        for (std::size_t i = 0; i < candidates_.size(); ++i)
            if (alive(i)) out.push_back(candidates_[i]);
        return out;
    }
    std::optional<std::size_t> find(const std::string& id) const {
        auto it = std::lower_bound(candidates_.begin(), candidates_.end(), id,
                                   [](const Hypothesis& h, const std::string& key) { return h.id() < key; });
        if (it == candidates_.end() || it->id() != id) return std::nullopt;
        return static_cast<std::size_t>(it - candidates_.begin());
    }

    void refute(std::size_t i, const Observation& obs) {
        if (!alive(i)) return;
        refuted_by_[i] = obs;
        --alive_;
        while (first_alive_ < candidates_.size() && !alive(first_alive_)) ++first_alive_;
    }

    /// Alive candidates naming any of the given genes, ascending.
    std::vector<std::size_t> alive_involving(std::span<const Index> genes) const {
        std::vector<std::size_t> out;
        for (auto g : genes) {
            auto it = by_gene_.find(g);
            if (it == by_gene_.end()) continue;
            for (auto i : it->second)
                if (alive(i)) out.push_back(i);
        }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    friend bool operator==(const HypothesisSpace& a, const HypothesisSpace& b) {
        return a.candidates_ == b.candidates_ && a.refuted_by_ == b.refuted_by_;
    }

private:
    std::vector<Hypothesis> candidates_;  // sorted by id
    std::vector<std::optional<Observation>> refuted_by_;
    std::map<Index, std::vector<std::size_t>> by_gene_;  // candidates naming each gene
    std::size_t alive_ = 0;
    std::size_t first_alive_ = 0;
};

/// Number of alive hypotheses predicting Growth for each trial. Only
/// hypotheses naming a knocked-out gene are simulated; the rest share the
/// hypothesis-free prediction.
inline std::vector<std::size_t> alive_growth_counts(const HypothesisSpace& space, const CompiledModel& c,
                                                    std::span<const TrialRef> trials, unsigned workers = 1) {
    std::vector<std::size_t> counts(trials.size(), 0);
    const std::size_t n = space.alive_count();
    if (n == 0 || trials.empty()) return counts;
    const BatchPlan plan(c, trials, workers);
    std::vector<Index> genes;
    for (const auto& t : trials)
        if (t.knockout) genes.push_back(*t.knockout);
    std::sort(genes.begin(), genes.end());
    genes.erase(std::unique(genes.begin(), genes.end()), genes.end());
    const auto relevant = space.alive_involving(genes);

    const unsigned lanes = std::max(workers, 1u);
    std::vector<std::vector<std::int64_t>> delta(lanes, std::vector<std::int64_t>(trials.size(), 0));
    std::vector<ClosureWorkspace> ws(lanes);
    parallel_for(relevant.size(), workers, [&](std::size_t k, unsigned lane) {
        plan.evaluate(space.candidates()[relevant[k]], ws[lane], [&](std::size_t t, Phenotype p) {
            if (p != plan.baseline(t)) delta[lane][t] += p == Phenotype::Growth ? 1 : -1;
        });
    });
    for (std::size_t t = 0; t < trials.size(); ++t) {
        std::int64_t k = plan.baseline(t) == Phenotype::Growth ? static_cast<std::int64_t>(n) : 0;
        for (const auto& d : delta) k += d[t];
        counts[t] = static_cast<std::size_t>(k);
    }
    return counts;
}

/// Predictions of every candidate of a space over a fixed trial list,
/// stored as deviations from the hypothesis-free baseline. Predictions do
/// not change as the space is pruned, so a campaign builds this once and
/// answers growth counts, pruning and accuracy from it.
class PredictionTable {
public:
    PredictionTable(const HypothesisSpace& space, const CompiledModel& c, std::span<const Trial> trials,
                    unsigned workers = 1)
        : trials_(trials.begin(), trials.end()), candidates_(space.size()) {
        std::vector<TrialRef> refs;
        refs.reserve(trials_.size());
        for (std::size_t t = 0; t < trials_.size(); ++t) {
            refs.push_back(resolve(c, trials_[t]));
            index_.emplace(trials_[t], t);
        }
        const BatchPlan plan(c, refs, workers);
        baseline_.resize(trials_.size());
        for (std::size_t t = 0; t < trials_.size(); ++t) baseline_[t] = plan.baseline(t);
        deviations_.resize(space.size());
        std::vector<ClosureWorkspace> ws(std::max(workers, 1u));
        parallel_for(space.size(), workers, [&](std::size_t h, unsigned lane) {
            auto& dev = deviations_[h];
            plan.evaluate(space.candidates()[h], ws[lane], [&](std::size_t t, Phenotype p) {
                if (p != baseline_[t]) dev.push_back(static_cast<Index>(t));
            });
            std::sort(dev.begin(), dev.end());
            dev.erase(std::unique(dev.begin(), dev.end()), dev.end());
        });
    }

    std::size_t trial_count() const noexcept { return trials_.size(); }
    std::size_t candidate_count() const noexcept { return candidates_; }
    const std::vector<Trial>& trials() const noexcept { return trials_; }

    std::optional<std::size_t> trial_index(const Trial& t) const {
        auto it = index_.find(t);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    Phenotype baseline(std::size_t t) const { return baseline_[t]; }

    Phenotype predict(std::size_t h, std::size_t t) const {
        const auto& dev = deviations_[h];
        const bool flipped = std::binary_search(dev.begin(), dev.end(), static_cast<Index>(t));
        return flipped ? flip(baseline_[t]) : baseline_[t];
    }

    /// Alive hypotheses predicting Growth, for every trial of the table.
    std::vector<std::size_t> growth_counts(const HypothesisSpace& space) const {
        check(space);
        const std::size_t n = space.alive_count();
        std::vector<std::size_t> out(trials_.size());
        for (std::size_t t = 0; t < trials_.size(); ++t) out[t] = baseline_[t] == Phenotype::Growth ? n : 0;
        for (std::size_t h = 0; h < candidates_; ++h) {
            if (!space.alive(h)) continue;
            for (auto t : deviations_[h]) {
                if (baseline_[t] == Phenotype::Growth)
                    --out[t];
                else
                    ++out[t];
            }
        }
        return out;
    }

    void check(const HypothesisSpace& space) const {
        if (space.size() != candidates_)
            throw Error(ErrorKind::Validation, "prediction table was built for a different hypothesis space");
    }

private:
    static Phenotype flip(Phenotype p) { return p == Phenotype::Growth ? Phenotype::NoGrowth : Phenotype::Growth; }

    std::vector<Trial> trials_;
    std::size_t candidates_ = 0;
    std::map<Trial, std::size_t> index_;
    std::vector<Phenotype> baseline_;
    std::vector<std::vector<Index>> deviations_;  // sorted trial indices
};

/// One singleton hypothesis per (gene, enzyme in scope) not already coded.
/// An empty scope yields an empty space; nullopt means every enzyme.
inline HypothesisSpace generate_candidates(const CompiledModel& c,
                                           const std::optional<std::vector<std::string>>& enzyme_scope = std::nullopt) {
    std::vector<Index> enzymes;
    if (enzyme_scope) {
        for (const auto& e : *enzyme_scope) {
            auto i = c.enzyme_index(e);
            if (!i) throw Error(ErrorKind::Undeclared, "unknown enzyme '" + e + "' in scope");
            if (std::find(enzymes.begin(), enzymes.end(), *i) == enzymes.end()) enzymes.push_back(*i);
        }
    } else {
        for (Index e = 0; e < c.enzymes.size(); ++e) enzymes.push_back(e);
    }
    std::vector<Hypothesis> out;
    out.reserve(c.genes.size() * enzymes.size());
    for (Index g = 0; g < c.genes.size(); ++g)
        for (auto e : enzymes)
            if (!c.has_codes(g, e)) out.push_back(Hypothesis::make(c, {{c.genes[g], c.enzymes[e]}}));
    return HypothesisSpace(std::move(out));
}

struct PruneResult {
    std::size_t alive_before = 0;
    std::size_t alive_after = 0;
};

/// Refutes every alive hypothesis whose prediction for the observed trial
/// disagrees with the observation. Throws SpaceExhausted (after applying
/// the refutations) when nothing survives.
inline PruneResult prune(HypothesisSpace& space, const CompiledModel& c, const Observation& obs,
                         unsigned workers = 1, const PredictionTable* table = nullptr) {
    const std::size_t before = space.alive_count();
    if (before == 0) throw Error(ErrorKind::SpaceExhausted, "hypothesis space already exhausted");
    auto finish = [&] {
        const PruneResult result{before, space.alive_count()};
        if (result.alive_after == 0)
            throw Error(ErrorKind::SpaceExhausted, "no candidate hypothesis is consistent with " + obs.trial.str() +
                                                       " = " + to_string(obs.phenotype));
        return result;
    };
    if (table) {
        table->check(space);
        if (auto t = table->trial_index(obs.trial)) {
            for (std::size_t h = 0; h < space.size(); ++h)
                if (space.alive(h) && table->predict(h, *t) != obs.phenotype) space.refute(h, obs);
            return finish();
        }
    }
    const TrialRef trial = resolve(c, obs.trial);
    const BatchPlan plan(c, std::span<const TrialRef>(&trial, 1), workers);

    std::vector<std::size_t> relevant;
    if (trial.knockout) relevant = space.alive_involving(std::span<const Index>(&*trial.knockout, 1));
    std::vector<Phenotype> predictions(relevant.size(), plan.baseline(0));
    std::vector<ClosureWorkspace> ws(std::max(workers, 1u));
    parallel_for(relevant.size(), workers, [&](std::size_t k, unsigned lane) {
        plan.evaluate(space.candidates()[relevant[k]], ws[lane], [&](std::size_t, Phenotype p) { predictions[k] = p; });
    });

    if (plan.baseline(0) != obs.phenotype) {
        // Everything not naming the knocked-out gene predicts the baseline.
        std::size_t r = 0;
        for (std::size_t i = 0; i < space.size(); ++i) {
            if (r < relevant.size() && relevant[r] == i) {
                ++r;
                continue;
            }
            space.refute(i, obs);
        }
    }
    for (std::size_t k = 0; k < relevant.size(); ++k)
        if (predictions[k] != obs.phenotype) space.refute(relevant[k], obs);
    return finish();
}

/// Index of the lexicographically smallest alive hypothesis.
inline std::size_t representative_index(const HypothesisSpace& space) {
    if (space.alive_count() > 0) return space.first_alive();
    throw Error(ErrorKind::EmptyAlive, "no alive hypothesis to recover the model from");
}

inline const Hypothesis& representative(const HypothesisSpace& space) {
    return space.candidates()[representative_index(space)];
}

/// The model extended with the representative hypothesis's codes facts.
inline MetabolicModel recovered_model(const MetabolicModel& model, const HypothesisSpace& space) {
    MetabolicModel out = model;
    for (const auto& f : representative(space).facts()) out.codes.push_back(f);
    return out;
}

/// Fraction of observations whose phenotype the model reproduces.
inline double predictive_accuracy(const MetabolicModel& candidate, const Environment& env,
                                  std::span<const Observation> truth, unsigned workers = 1) {
    if (truth.empty()) throw Error(ErrorKind::Validation, "accuracy needs at least one observation");
    const auto c = compile(candidate, env);
    std::vector<TrialRef> refs;
    refs.reserve(truth.size());
    for (const auto& o : truth) refs.push_back(resolve(c, o.trial));
    const std::optional<Hypothesis> none;
    const auto pred = simulate_batch(c, std::span(&none, 1), std::span<const TrialRef>(refs), workers);
    std::size_t hits = 0;
    for (std::size_t t = 0; t < truth.size(); ++t) hits += pred.at(0, t) == truth[t].phenotype;
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

/// Same quantity computed without recompiling: the working model simulated
/// under hypothesis h.
inline double predictive_accuracy(const CompiledModel& c, const Hypothesis* h, std::span<const TrialRef> trials,
                                  std::span<const Phenotype> truth, unsigned workers = 1) {
    if (trials.empty()) throw Error(ErrorKind::Validation, "accuracy needs at least one observation");
    std::optional<Hypothesis> row;
    if (h) row = *h;
    const auto pred = simulate_batch(c, std::span(&row, 1), trials, workers);
    std::size_t hits = 0;
    for (std::size_t t = 0; t < trials.size(); ++t) hits += pred.at(0, t) == truth[t];
    return static_cast<double>(hits) / static_cast<double>(trials.size());
}

}  // namespace gemlearn
