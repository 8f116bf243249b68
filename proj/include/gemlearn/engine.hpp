#pragma once

// Bit-parallel phenotype simulation.
//
// A model is compiled into dense indices and bitmasks. For a (hypothesis,
// knockout) pair the set of active directed reactions is derived from the
// enzyme/gene masks; growth on a medium holds when the least fixpoint of
// the active reactions seeded with the medium contains every essential
// metabolite.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gemlearn/bitset.hpp"
#include "gemlearn/error.hpp"
#include "gemlearn/facts.hpp"
#include "gemlearn/parallel.hpp"

namespace gemlearn {

using Index = std::uint32_t;
/// Gene index of a single-gene deletion, nullopt for wild-type.
using Knockout = std::optional<Index>;

struct DirectedReaction {
    Index source = 0;  // position in MetabolicModel::reactions
    bool reverse = false;
    BitSet substrates;
    BitSet products;
    std::vector<Index> substrate_list;
    std::vector<Index> product_list;
    std::vector<Index> enzymes;
};

struct CompiledMedium {
    std::string id;
    BitSet mask;
};

/// Interned, immutable form of a model (and optionally its media).
/// Safe to share across threads.
class CompiledModel {
public:
    std::vector<std::string> metabolites, genes, enzymes;
    std::vector<DirectedReaction> reactions;
    std::vector<BitSet> enzyme_genes;  // per enzyme, over genes
    BitSet essential_mask;
    std::vector<CompiledMedium> media;

    // Derived lookup tables.
    std::vector<std::vector<Index>> consumers;         // metabolite -> directed reactions using it
    std::vector<std::vector<Index>> enzyme_reactions;  // enzyme -> directed reactions listing it
    std::vector<std::vector<Index>> gene_enzymes;      // gene -> enzymes requiring it

    std::size_t metabolite_count() const noexcept { return metabolites.size(); }
    std::size_t reaction_count() const noexcept { return reactions.size(); }

    std::optional<Index> metabolite_index(std::string_view id) const { return lookup(metabolite_ids_, id); }
    std::optional<Index> gene_index(std::string_view id) const { return lookup(gene_ids_, id); }
    std::optional<Index> enzyme_index(std::string_view id) const { return lookup(enzyme_ids_, id); }
    std::optional<Index> medium_index(std::string_view id) const { return lookup(medium_ids_, id); }

    bool has_codes(Index gene, Index enzyme) const { return enzyme_genes[enzyme].test(gene); }

    BitSet mask_of(const std::vector<std::string>& metabolite_ids) const {
        BitSet mask(metabolite_count());
        for (const auto& m : metabolite_ids) {
            auto i = metabolite_index(m);
            if (!i) throw Error(ErrorKind::Undeclared, "unknown metabolite '" + m + "'");
            mask.set(*i);
        }
        return mask;
    }

    friend CompiledModel compile(const MetabolicModel&, const Environment*);

private:
    using IdMap = std::unordered_map<std::string, Index>;
    static std::optional<Index> lookup(const IdMap& map, std::string_view id) {
        auto it = map.find(std::string(id));
        if (it == map.end()) return std::nullopt;
        return it->second;
    }

    IdMap metabolite_ids_, gene_ids_, enzyme_ids_, medium_ids_;
};

/// Interns declaration order; a reversible reaction yields a forward entry
/// followed by its reverse. Media are compiled when an environment is given.
inline CompiledModel compile(const MetabolicModel& model, const Environment* env = nullptr) {
    CompiledModel c;
    auto intern = [](const std::vector<std::string>& ids, CompiledModel::IdMap& map) {
        for (Index i = 0; i < ids.size(); ++i) map.emplace(ids[i], i);
    };
    c.metabolites = model.metabolites;
    c.genes = model.genes;
    c.enzymes = model.enzymes;
    intern(c.metabolites, c.metabolite_ids_);
    intern(c.genes, c.gene_ids_);
    intern(c.enzymes, c.enzyme_ids_);

    const std::size_t M = c.metabolites.size();
    const std::size_t G = c.genes.size();
    const std::size_t E = c.enzymes.size();

    c.enzyme_genes.assign(E, BitSet(G));
    c.gene_enzymes.assign(G, {});
    for (const auto& [g, e] : model.codes) {
        const Index gi = c.gene_ids_.at(g);
        const Index ei = c.enzyme_ids_.at(e);
        c.enzyme_genes[ei].set(gi);
        c.gene_enzymes[gi].push_back(ei);
    }
    for (auto& list : c.gene_enzymes) std::sort(list.begin(), list.end());

    auto to_indices = [&](const std::vector<std::string>& ids) {
        std::vector<Index> out;
        out.reserve(ids.size());
        for (const auto& id : ids) out.push_back(c.metabolite_ids_.at(id));
        return out;
    };
    auto to_mask = [&](const std::vector<Index>& idx) {
        BitSet m(M);
        for (auto i : idx) m.set(i);
        return m;
    };

    for (Index r = 0; r < model.reactions.size(); ++r) {
        const auto& rx = model.reactions[r];
        std::vector<Index> enz;
        for (const auto& e : rx.enzymes) enz.push_back(c.enzyme_ids_.at(e));
        const auto sub = to_indices(rx.substrates);
        const auto prod = to_indices(rx.products);
        c.reactions.push_back({r, false, to_mask(sub), to_mask(prod), sub, prod, enz});
        if (rx.reversible) c.reactions.push_back({r, true, to_mask(prod), to_mask(sub), prod, sub, enz});
    }

    c.consumers.assign(M, {});
    c.enzyme_reactions.assign(E, {});
    for (Index d = 0; d < c.reactions.size(); ++d) {
        for (auto m : c.reactions[d].substrate_list) c.consumers[m].push_back(d);
        for (auto e : c.reactions[d].enzymes) c.enzyme_reactions[e].push_back(d);
    }

    c.essential_mask = c.mask_of(model.essential);

    if (env) {
        for (Index i = 0; i < env->media.size(); ++i) {
            const auto& medium = env->media[i];
            BitSet mask(M);
            for (const auto& m : medium.metabolites) {
                auto mi = c.metabolite_index(m);
                if (!mi)
                    throw Error(ErrorKind::Undeclared,
                                "medium '" + medium.id + "' uses metabolite '" + m + "' not in the model");
                mask.set(*mi);
            }
            c.media.push_back({medium.id, std::move(mask)});
            c.medium_ids_.emplace(medium.id, i);
        }
    }
    return c;
}

inline CompiledModel compile(const MetabolicModel& model, const Environment& env) { return compile(model, &env); }

/// A candidate set of added codes(gene, enzyme) facts.
class Hypothesis {
public:
    /// Validates against the compiled model: known ids, nonempty, and no fact
    /// already present in the model.
    static Hypothesis make(const CompiledModel& c, std::vector<GeneEnzyme> facts) {
        if (facts.empty()) throw Error(ErrorKind::Validation, "hypothesis must add at least one codes fact");
        std::sort(facts.begin(), facts.end(), [](const GeneEnzyme& a, const GeneEnzyme& b) {
            return fact_id(a) < fact_id(b);
        });
        facts.erase(std::unique(facts.begin(), facts.end()), facts.end());
        Hypothesis h;
        for (const auto& f : facts) {
            auto g = c.gene_index(f.first);
            auto e = c.enzyme_index(f.second);
            if (!g) throw Error(ErrorKind::Undeclared, "unknown gene '" + f.first + "'");
            if (!e) throw Error(ErrorKind::Undeclared, "unknown enzyme '" + f.second + "'");
            if (c.has_codes(*g, *e))
                throw Error(ErrorKind::Validation, fact_id(f) + " is already in the model");
            h.added_.emplace_back(*g, *e);
            if (!h.id_.empty()) h.id_ += ';';
            h.id_ += fact_id(f);
        }
        h.facts_ = std::move(facts);
        return h;
    }

    static std::string fact_id(const GeneEnzyme& f) { return "codes(" + f.first + "," + f.second + ")"; }

    /// Parses `codes(g,e)[;codes(g,e)...]`.
    static std::vector<GeneEnzyme> parse_facts(std::string_view text) {
        std::vector<GeneEnzyme> out;
        for (auto part : detail::split(text, ';')) {
            part = detail::trim(part);
            constexpr std::string_view head = "codes(";
            if (part.size() < head.size() + 1 || part.substr(0, head.size()) != head || part.back() != ')')
                throw Error(ErrorKind::Syntax, "expected codes(gene,enzyme), got '" + std::string(part) + "'");
            const auto inner = part.substr(head.size(), part.size() - head.size() - 1);
            const auto args = detail::split(inner, ',');
            if (args.size() != 2 || !detail::is_identifier(detail::trim(args[0])) ||
                !detail::is_identifier(detail::trim(args[1])))
                throw Error(ErrorKind::Syntax, "expected codes(gene,enzyme), got '" + std::string(part) + "'");
            out.emplace_back(std::string(detail::trim(args[0])), std::string(detail::trim(args[1])));
        }
        return out;
    }

    const std::string& id() const noexcept { return id_; }
    const std::vector<std::pair<Index, Index>>& added() const noexcept { return added_; }
    const std::vector<GeneEnzyme>& facts() const noexcept { return facts_; }

    bool involves_gene(Index g) const noexcept {
        return std::any_of(added_.begin(), added_.end(), [g](const auto& p) { return p.first == g; });
    }

    friend bool operator==(const Hypothesis& a, const Hypothesis& b) { return a.id_ == b.id_; }
    friend auto operator<=>(const Hypothesis& a, const Hypothesis& b) { return a.id_ <=> b.id_; }

private:
    std::string id_;
    std::vector<std::pair<Index, Index>> added_;  // ordered as facts_
    std::vector<GeneEnzyme> facts_;
};

struct TrialRef {
    Knockout knockout;
    Index medium = 0;

    friend bool operator==(const TrialRef&, const TrialRef&) = default;
};

inline TrialRef resolve(const CompiledModel& c, const Trial& t) {
    TrialRef ref;
    if (t.knockout) {
        auto g = c.gene_index(*t.knockout);
        if (!g) throw Error(ErrorKind::Undeclared, "unknown gene '" + *t.knockout + "'");
        ref.knockout = *g;
    }
    auto m = c.medium_index(t.medium);
    if (!m) throw Error(ErrorKind::UnknownMedium, "unknown medium '" + t.medium + "'");
    ref.medium = *m;
    return ref;
}

namespace detail {

/// Enzyme e is unusable under knockout k when k is one of its genes, model
/// or hypothesised.
inline bool enzyme_blocked(const CompiledModel& c, const Hypothesis* h, Index e, Index k) {
    if (c.enzyme_genes[e].test(k)) return true;
    if (h)
        for (const auto& [g, he] : h->added())
            if (g == k && he == e) return true;
    return false;
}

/// Reactions that lose every enzyme when the hypothesis is applied on top of
/// knockout k, given the baseline active set.
inline std::vector<Index> newly_inactive(const CompiledModel& c, const Hypothesis& h, Index k, const BitSet& base) {
    std::vector<Index> out;
    for (const auto& [g, e] : h.added()) {
        if (g != k) continue;
        for (auto r : c.enzyme_reactions[e]) {
            if (!base.test(r)) continue;
            const auto& enz = c.reactions[r].enzymes;
            const bool any = std::any_of(enz.begin(), enz.end(),
                                         [&](Index other) { return !enzyme_blocked(c, &h, other, k); });
            if (!any && std::find(out.begin(), out.end(), r) == out.end()) out.push_back(r);
        }
    }
    return out;
}

}  // namespace detail

/// Directed reactions that can fire for the given hypothesis and knockout.
/// A reaction is active when it is spontaneous or some listed enzyme keeps
/// all of its genes; wild-type leaves every reaction active.
inline BitSet active_reactions(const CompiledModel& c, const Hypothesis* h, Knockout knockout) {
    BitSet active(c.reaction_count(), true);
    if (!knockout) return active;
    const Index k = *knockout;
    auto check = [&](Index e) {
        for (auto r : c.enzyme_reactions[e]) {
            if (!active.test(r)) continue;
            const auto& enz = c.reactions[r].enzymes;
            if (std::none_of(enz.begin(), enz.end(),
                             [&](Index other) { return !detail::enzyme_blocked(c, h, other, k); }))
                active.reset(r);
        }
    };
    for (auto e : c.gene_enzymes[k]) check(e);
    if (h)
        for (const auto& [g, e] : h->added())
            if (g == k) check(e);
    return active;
}

/// Per-call scratch for closure(); reuse one per thread to avoid allocation.
struct ClosureWorkspace {
    std::vector<Index> remaining;
    std::vector<Index> queue;
};

inline constexpr Index kNoReaction = static_cast<Index>(-1);

/// Least set S containing `medium` that is closed under every active
/// directed reaction whose substrates are all in S. Each reaction is
/// re-examined only when one of its substrates is newly added. With
/// `producer`, records for each metabolite of S the reaction that first
/// added it (kNoReaction for the medium).
inline BitSet closure(const CompiledModel& c, const BitSet& active, const BitSet& medium, ClosureWorkspace& ws,
                      std::vector<Index>* producer = nullptr) {
    BitSet s = medium;
    const std::size_t D = c.reaction_count();
    ws.remaining.assign(D, 0);
    ws.queue.clear();
    if (producer) producer->assign(c.metabolite_count(), kNoReaction);

    auto fire = [&](Index r) {
        for (auto p : c.reactions[r].product_list)
            if (s.insert(p)) {
                ws.queue.push_back(p);
                if (producer) (*producer)[p] = r;
            }
    };

    std::vector<Index>& ready = ws.remaining;  // counts first, then reused below
    for (Index r = 0; r < D; ++r) {
        if (!active.test(r)) continue;
        Index missing = 0;
        for (auto m : c.reactions[r].substrate_list) missing += !medium.test(m);
        ready[r] = missing;
    }
    for (Index r = 0; r < D; ++r)
        if (active.test(r) && ready[r] == 0) fire(r);

    for (std::size_t head = 0; head < ws.queue.size(); ++head) {
        const Index m = ws.queue[head];
        for (auto r : c.consumers[m])
            if (active.test(r) && --ready[r] == 0) fire(r);
    }
    return s;
}

inline BitSet closure(const CompiledModel& c, const BitSet& active, const BitSet& medium) {
    ClosureWorkspace ws;
    return closure(c, active, medium, ws);
}

inline Phenotype classify(const CompiledModel& c, const BitSet& synthesisable) {
    return c.essential_mask.is_subset_of(synthesisable) ? Phenotype::Growth : Phenotype::NoGrowth;
}

/// Reactions of the derivation recorded by closure() that the essential
/// metabolites depend on. Any active set containing these reactions still
/// derives every essential metabolite present in the closure.
inline BitSet essential_support(const CompiledModel& c, const std::vector<Index>& producer) {
    BitSet support(c.reaction_count());
    BitSet seen(c.metabolite_count());
    std::vector<Index> stack;
    c.essential_mask.for_each([&](std::size_t m) {
        seen.set(m);
        stack.push_back(static_cast<Index>(m));
    });
    while (!stack.empty()) {
        const Index m = stack.back();
        stack.pop_back();
        const Index r = producer[m];
        if (r == kNoReaction || support.test(r)) continue;
        support.set(r);
        for (auto sub : c.reactions[r].substrate_list)
            if (seen.insert(sub)) stack.push_back(sub);
    }
    return support;
}

namespace detail {
inline void require_essential(const CompiledModel& c) {
    if (c.essential_mask.none())
        throw Error(ErrorKind::Validation, "model declares no essential metabolites; cannot classify growth");
}
}  // namespace detail

inline Phenotype simulate(const CompiledModel& c, const Hypothesis* h, const TrialRef& t, ClosureWorkspace& ws) {
    detail::require_essential(c);
    const auto active = active_reactions(c, h, t.knockout);
    return classify(c, closure(c, active, c.media[t.medium].mask, ws));
}

/// Growth iff every essential metabolite is in the closure of the trial's
/// medium under the reactions active for (hypothesis, knockout).
inline Phenotype simulate(const CompiledModel& c, const Hypothesis* h, const Trial& t) {
    ClosureWorkspace ws;
    return simulate(c, h, resolve(c, t), ws);
}

inline Phenotype simulate(const CompiledModel& c, const std::optional<Hypothesis>& h, const Trial& t) {
    return simulate(c, h ? &*h : nullptr, t);
}

/// Hypotheses x trials grid of phenotypes, row-major.
class PhenotypeMatrix {
public:
    PhenotypeMatrix() = default;
    PhenotypeMatrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), cells_(rows * cols, Phenotype::NoGrowth) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return cells_.empty(); }
    Phenotype at(std::size_t h, std::size_t t) const { return cells_[h * cols_ + t]; }
    Phenotype& at(std::size_t h, std::size_t t) { return cells_[h * cols_ + t]; }

    friend bool operator==(const PhenotypeMatrix&, const PhenotypeMatrix&) = default;

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<Phenotype> cells_;
};

/// Shared work for evaluating many hypotheses over many trials.
///
/// Trials are grouped by knockout. For each group the hypothesis-free
/// activity and per-medium closures are computed once. A hypothesis can only
/// switch reactions off, and only for knockouts of genes it names. Removing
/// reactions cannot turn NoGrowth into Growth, and cannot break Growth
/// unless a removed reaction belongs to the recorded derivation of the
/// essential metabolites. Only the remaining cases recompute the closure.
/// Results are exact.
class BatchPlan {
public:
    BatchPlan(const CompiledModel& c, std::span<const TrialRef> trials, unsigned workers) : c_(&c) {
        detail::require_essential(c);
        trials_.assign(trials.begin(), trials.end());
        std::map<std::int64_t, std::size_t> group_of;
        for (std::size_t t = 0; t < trials_.size(); ++t) {
            const std::int64_t key = trials_[t].knockout ? static_cast<std::int64_t>(*trials_[t].knockout) : -1;
            auto [it, fresh] = group_of.emplace(key, groups_.size());
            if (fresh) groups_.push_back({trials_[t].knockout, {}, {}});
            groups_[it->second].trials.push_back(t);
        }
        for (std::size_t g = 0; g < groups_.size(); ++g)
            if (groups_[g].knockout) group_by_gene_.emplace(*groups_[g].knockout, g);

        support_.resize(trials_.size());
        base_.resize(trials_.size());
        parallel_for(groups_.size(), workers, [&](std::size_t g, unsigned) {
            ClosureWorkspace ws;
            std::vector<Index> producer;
            auto& group = groups_[g];
            group.active = active_reactions(c, nullptr, group.knockout);
            for (auto t : group.trials) {
                base_[t] = classify(c, closure(c, group.active, c.media[trials_[t].medium].mask, ws, &producer));
                if (base_[t] == Phenotype::Growth) support_[t] = essential_support(c, producer);
            }
        });
    }

    std::size_t trial_count() const noexcept { return trials_.size(); }
    Phenotype baseline(std::size_t t) const { return base_[t]; }

    /// Calls f(trial, phenotype) for each trial whose phenotype under h can
    /// differ from the baseline (trials of knockout groups h touches).
    template <class F>
    void evaluate(const Hypothesis& h, ClosureWorkspace& ws, F&& f) const {
        const auto& c = *c_;
        std::vector<Index> seen;
        for (const auto& [gene, enzyme] : h.added()) {
            if (std::find(seen.begin(), seen.end(), gene) != seen.end()) continue;
            seen.push_back(gene);
            auto it = group_by_gene_.find(gene);
            if (it == group_by_gene_.end()) continue;
            const auto& group = groups_[it->second];
            const auto off = detail::newly_inactive(c, h, gene, group.active);
            if (off.empty()) {
                for (auto t : group.trials) f(t, base_[t]);
                continue;
            }
            BitSet active = group.active;
            for (auto r : off) active.reset(r);
            for (auto t : group.trials) {
                const bool affected = base_[t] == Phenotype::Growth &&
                                      std::any_of(off.begin(), off.end(), [&](Index r) { return support_[t].test(r); });
                f(t, affected ? classify(c, closure(c, active, c.media[trials_[t].medium].mask, ws)) : base_[t]);
            }
        }
    }

private:
    struct Group {
        Knockout knockout;
        std::vector<std::size_t> trials;
        BitSet active;
    };

    const CompiledModel* c_;
    std::vector<TrialRef> trials_;
    std::vector<Group> groups_;
    std::unordered_map<Index, std::size_t> group_by_gene_;
    std::vector<BitSet> support_;  // empty when the baseline is NoGrowth
    std::vector<Phenotype> base_;
};

/// Entry (h, t) equals simulate(c, hypotheses[h], trials[t]) for every
/// worker count.
inline PhenotypeMatrix simulate_batch(const CompiledModel& c, std::span<const std::optional<Hypothesis>> hypotheses,
                                      std::span<const TrialRef> trials, unsigned workers) {
    PhenotypeMatrix out(hypotheses.size(), trials.size());
    if (out.empty()) return out;
    if (std::none_of(hypotheses.begin(), hypotheses.end(), [](const auto& h) { return h.has_value(); })) {
        detail::require_essential(c);
        std::vector<ClosureWorkspace> ws(std::max(workers, 1u));
        parallel_for(trials.size(), workers, [&](std::size_t t, unsigned lane) {
            const auto p = simulate(c, nullptr, trials[t], ws[lane]);
            for (std::size_t h = 0; h < hypotheses.size(); ++h) out.at(h, t) = p;
        });
        return out;
    }
    const BatchPlan plan(c, trials, workers);
    std::vector<ClosureWorkspace> ws(std::max(workers, 1u));
    parallel_for(hypotheses.size(), workers, [&](std::size_t h, unsigned lane) {
        for (std::size_t t = 0; t < trials.size(); ++t) out.at(h, t) = plan.baseline(t);
        if (!hypotheses[h]) return;
        plan.evaluate(*hypotheses[h], ws[lane], [&](std::size_t t, Phenotype p) { out.at(h, t) = p; });
    });
    return out;
}

inline PhenotypeMatrix simulate_batch(const CompiledModel& c, std::span<const std::optional<Hypothesis>> hypotheses,
                                      std::span<const Trial> trials, unsigned workers) {
    std::vector<TrialRef> refs;
    refs.reserve(trials.size());
    for (const auto& t : trials) refs.push_back(resolve(c, t));
    return simulate_batch(c, hypotheses, std::span<const TrialRef>(refs), workers);
}

/// Number of hypotheses predicting Growth for each trial.
inline std::vector<std::size_t> growth_counts(const CompiledModel& c, std::span<const Hypothesis> hypotheses,
                                              std::span<const TrialRef> trials, unsigned workers) {
    std::vector<std::size_t> counts(trials.size(), 0);
    if (hypotheses.empty() || trials.empty()) return counts;
    const BatchPlan plan(c, trials, workers);
    const unsigned lanes = std::max(workers, 1u);
    std::vector<std::vector<std::int64_t>> delta(lanes, std::vector<std::int64_t>(trials.size(), 0));
    std::vector<ClosureWorkspace> ws(lanes);
    parallel_for(hypotheses.size(), workers, [&](std::size_t h, unsigned lane) {
        plan.evaluate(hypotheses[h], ws[lane], [&](std::size_t t, Phenotype p) {
            if (p != plan.baseline(t)) delta[lane][t] += p == Phenotype::Growth ? 1 : -1;
        });
    });
    for (std::size_t t = 0; t < trials.size(); ++t) {
        std::int64_t k = plan.baseline(t) == Phenotype::Growth ? static_cast<std::int64_t>(hypotheses.size()) : 0;
        for (const auto& d : delta) k += d[t];
        counts[t] = static_cast<std::size_t>(k);
    }
    return counts;
}

}  // namespace gemlearn
