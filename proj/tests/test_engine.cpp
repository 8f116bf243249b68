#include <gtest/gtest.h>

#include <random>

#include "gemlearn/engine.hpp"
#include "support/test_support.hpp"

using namespace gemlearn;
namespace gt = gemlearn::testing;

namespace {

std::set<std::string> names(const CompiledModel& c, const BitSet& s) {
    std::set<std::string> out;
    s.for_each([&](std::size_t i) { out.insert(c.metabolites[i]); });
    return out;
}

MetabolicModel without_codes(MetabolicModel m, const GeneEnzyme& f) {
    m.codes.erase(std::remove(m.codes.begin(), m.codes.end(), f), m.codes.end());
    return m;
}

}  // namespace

TEST(Compile, ToyModel) {
    const auto c = compile(gt::t1(), gt::t1_env());
    EXPECT_EQ(c.metabolite_count(), 5u);
    EXPECT_EQ(c.reaction_count(), 2u);
    EXPECT_EQ(names(c, c.essential_mask), std::set<std::string>{"E"});
    for (Index i = 0; i < c.metabolites.size(); ++i) EXPECT_EQ(c.metabolite_index(c.metabolites[i]), i);
    EXPECT_EQ(*c.gene_index("g2"), 1u);
    EXPECT_EQ(*c.medium_index("M_B"), 1u);
    EXPECT_EQ(names(c, c.media[0].mask), std::set<std::string>{"A"});
}

TEST(Compile, ReversibleSplitsForwardFirst) {
    const auto c = compile(parse_model("metabolite A\nmetabolite B\nreaction r rev=1 enz=- sub=B prod=A\n"));
    ASSERT_EQ(c.reaction_count(), 2u);
    EXPECT_FALSE(c.reactions[0].reverse);
    EXPECT_TRUE(c.reactions[1].reverse);
    EXPECT_EQ(c.reactions[0].substrates, c.reactions[1].products);
    EXPECT_EQ(c.reactions[0].products, c.reactions[1].substrates);
    EXPECT_EQ(names(c, c.reactions[0].substrates), std::set<std::string>{"B"});
}

TEST(Compile, EmptyModel) {
    const auto c = compile(MetabolicModel{});
    EXPECT_EQ(c.metabolite_count(), 0u);
    EXPECT_EQ(c.reaction_count(), 0u);
}

TEST(Compile, DirectedCountAndDisjointMasks) {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 50; ++i) {
        const auto m = gt::random_model(rng);
        const auto c = compile(m);
        std::size_t expected = 0;
        for (const auto& r : m.reactions) expected += 1 + r.reversible;
        EXPECT_EQ(c.reaction_count(), expected);
        for (const auto& r : c.reactions) EXPECT_FALSE(r.substrates.intersects(r.products));
    }
}

TEST(ActiveReactions, ToyModel) {
    const auto c = compile(gt::t1(), gt::t1_env());
    const auto dg1 = active_reactions(c, nullptr, *c.gene_index("g1"));
    EXPECT_FALSE(dg1.test(0));
    EXPECT_TRUE(dg1.test(1));
    const auto wt = active_reactions(c, nullptr, std::nullopt);
    EXPECT_EQ(wt.count(), 2u);
}

TEST(ActiveReactions, HypothesisAddsRequirement) {
    const auto c = compile(gt::t1_incomplete(), gt::t1_env());
    const auto h = Hypothesis::make(c, {{"g2", "e1"}});
    const auto a = active_reactions(c, &h, *c.gene_index("g2"));
    EXPECT_FALSE(a.test(0));  // e1 now needs g1 and g2
    EXPECT_TRUE(a.test(1));   // e2 has no gene
}

TEST(Closure, Basics) {
    const auto c = compile(gt::t1(), gt::t1_env());
    const BitSet all(c.reaction_count(), true);
    EXPECT_TRUE(closure(c, all, BitSet(c.metabolite_count())).none());
    EXPECT_EQ(names(c, closure(c, all, c.mask_of({"A"}))), (std::set<std::string>{"A", "B", "E"}));

    const auto rev = compile(parse_model("metabolite A\nmetabolite B\nreaction r rev=1 enz=- sub=A prod=B\n"));
    EXPECT_EQ(names(rev, closure(rev, BitSet(2, true), rev.mask_of({"B"}))), (std::set<std::string>{"A", "B"}));
}

TEST(Closure, SourceReactionFiresUnconditionally) {
    const auto c = compile(parse_model("metabolite A\nmetabolite B\nreaction s rev=0 enz=- sub=- prod=A\n"
                                       "reaction t rev=0 enz=- sub=A prod=B\n"));
    EXPECT_EQ(names(c, closure(c, BitSet(2, true), BitSet(2))), (std::set<std::string>{"A", "B"}));
    EXPECT_TRUE(closure(c, BitSet(2), BitSet(2)).none());
}

TEST(Closure, MatchesNaiveOracleAndLaws) {
    std::mt19937_64 rng(2024);
    for (int model_no = 0; model_no < 60; ++model_no) {
        const auto m = gt::random_model(rng);
        const auto c = compile(m);
        for (int k = 0; k < 10; ++k) {
            std::optional<std::string> ko;
            if (k % 3) ko = m.genes[rng() % m.genes.size()];
            std::vector<bool> active_naive;
            for (const auto& r : m.reactions) active_naive.push_back(gt::naive_reaction_active(m, r, {}, ko));
            const auto sub = gt::random_subset(rng, m.metabolites, 0.2);
            const auto active = active_reactions(c, nullptr, ko ? c.gene_index(*ko) : std::nullopt);
            const auto s = closure(c, active, c.mask_of(sub));
            EXPECT_EQ(names(c, s), gt::naive_closure(m, active_naive, {sub.begin(), sub.end()}));

            // Idempotence.
            EXPECT_EQ(closure(c, active, s), s);
            // Monotone in the medium.
            auto bigger = sub;
            for (const auto& x : gt::random_subset(rng, m.metabolites, 0.2)) bigger.push_back(x);
            EXPECT_TRUE(s.is_subset_of(closure(c, active, c.mask_of(bigger))));
            // Monotone in the active set.
            EXPECT_TRUE(s.is_subset_of(closure(c, BitSet(c.reaction_count(), true), c.mask_of(sub))));
        }
    }
}

TEST(ActiveReactions, KnockoutAndHypothesisOnlyRemove) {
    std::mt19937_64 rng(77);
    for (int i = 0; i < 100; ++i) {
        const auto m = gt::random_model(rng);
        const auto c = compile(m);
        std::vector<GeneEnzyme> missing;
        for (const auto& g : m.genes)
            for (const auto& e : m.enzymes)
                if (!m.has_codes(g, e)) missing.emplace_back(g, e);
        if (missing.empty()) continue;
        std::shuffle(missing.begin(), missing.end(), rng);
        missing.resize(std::min<std::size_t>(missing.size(), 1 + rng() % 3));
        const auto h = Hypothesis::make(c, missing);
        const auto wt = active_reactions(c, &h, std::nullopt);
        EXPECT_EQ(wt.count(), c.reaction_count());
        for (Index g = 0; g < c.genes.size(); ++g) {
            const auto with_h = active_reactions(c, &h, g);
            const auto without = active_reactions(c, nullptr, g);
            EXPECT_TRUE(with_h.is_subset_of(wt));
            EXPECT_TRUE(with_h.is_subset_of(without));
        }
    }
}

TEST(Simulate, ToyModel) {
    const auto truth = compile(gt::t1(), gt::t1_env());
    EXPECT_EQ(simulate(truth, nullptr, Trial::wild_type("M_A")), Phenotype::Growth);
    EXPECT_EQ(simulate(truth, nullptr, Trial::deletion("g1", "M_A")), Phenotype::NoGrowth);
    const auto incomplete = compile(gt::t1_incomplete(), gt::t1_env());
    EXPECT_EQ(simulate(incomplete, nullptr, Trial::deletion("g2", "M_A")), Phenotype::Growth);
    EXPECT_THROW(simulate(truth, nullptr, Trial::wild_type("M_Z")), Error);
}

TEST(Simulate, RequiresEssentialMetabolites) {
    auto m = gt::t1();
    m.essential.clear();
    const auto c = compile(m, gt::t1_env());
    EXPECT_THROW(simulate(c, nullptr, Trial::wild_type("M_A")), Error);
}

TEST(SimulateBatch, ToyModel) {
    const auto c = compile(gt::t1(), gt::t1_env());
    const std::vector<std::optional<Hypothesis>> none{std::nullopt};
    const std::vector<Trial> trials{Trial::wild_type("M_A"), Trial::deletion("g1", "M_A"),
                                    Trial::deletion("g2", "M_A")};
    const auto m = simulate_batch(c, none, std::span<const Trial>(trials), 1);
    ASSERT_EQ(m.rows(), 1u);
    EXPECT_EQ(m.at(0, 0), Phenotype::Growth);
    EXPECT_EQ(m.at(0, 1), Phenotype::NoGrowth);
    EXPECT_EQ(m.at(0, 2), Phenotype::NoGrowth);

    EXPECT_TRUE(simulate_batch(c, {}, std::span<const Trial>(trials), 4).empty());
    EXPECT_TRUE(simulate_batch(c, none, std::span<const Trial>(), 4).empty());
}

TEST(SimulateBatch, AgreesWithSingleAndNaiveAcrossWorkers) {
    std::mt19937_64 rng(99);
    for (int i = 0; i < 40; ++i) {
        const auto m = gt::random_model(rng, {.max_metabolites = 40, .max_reactions = 80});
        const auto env = gt::random_environment(rng, m, 4);
        const auto c = compile(m, env);
        std::vector<std::optional<Hypothesis>> hyps{std::nullopt};
        std::vector<std::vector<GeneEnzyme>> facts{{}};
        for (const auto& g : m.genes)
            for (const auto& e : m.enzymes)
                if (!m.has_codes(g, e) && rng() % 3 == 0) {
                    std::vector<GeneEnzyme> f{{g, e}};
                    if (rng() % 4 == 0) {
                        const auto& g2 = m.genes[rng() % m.genes.size()];
                        const auto& e2 = m.enzymes[rng() % m.enzymes.size()];
                        if (!m.has_codes(g2, e2) && GeneEnzyme{g2, e2} != f[0]) f.emplace_back(g2, e2);
                    }
                    hyps.emplace_back(Hypothesis::make(c, f));
                    facts.push_back(f);
                }
        std::vector<Trial> trials;
        for (const auto& med : env.media) {
            trials.push_back(Trial::wild_type(med.id));
            for (const auto& g : m.genes) trials.push_back(Trial::deletion(g, med.id));
        }
        const auto serial = simulate_batch(c, hyps, std::span<const Trial>(trials), 1);
        const auto parallel = simulate_batch(c, hyps, std::span<const Trial>(trials), 8);
        EXPECT_EQ(serial, parallel);
        for (std::size_t h = 0; h < hyps.size(); ++h)
            for (std::size_t t = 0; t < trials.size(); ++t) {
                ASSERT_EQ(serial.at(h, t), simulate(c, hyps[h], trials[t]));
                ASSERT_EQ(serial.at(h, t), gt::naive_simulate(m, env, facts[h], trials[t]));
            }

        // growth_counts is the column sum of the hypothesis rows.
        std::vector<Hypothesis> only;
        for (const auto& h : hyps)
            if (h) only.push_back(*h);
        std::vector<TrialRef> refs;
        for (const auto& t : trials) refs.push_back(resolve(c, t));
        const auto counts = growth_counts(c, only, refs, 3);
        for (std::size_t t = 0; t < trials.size(); ++t) {
            std::size_t k = 0;
            for (std::size_t h = 1; h < hyps.size(); ++h) k += serial.at(h, t) == Phenotype::Growth;
            EXPECT_EQ(counts[t], k);
        }
    }
}

TEST(Hypothesis, IdIsCanonical) {
    const auto c = compile(without_codes(gt::t1(), {"g2", "e2"}), gt::t1_env());
    const auto h = Hypothesis::make(c, {{"g2", "e2"}, {"g1", "e2"}});
    EXPECT_EQ(h.id(), "codes(g1,e2);codes(g2,e2)");
    EXPECT_EQ(Hypothesis::parse_facts(h.id()), (std::vector<GeneEnzyme>{{"g1", "e2"}, {"g2", "e2"}}));
    EXPECT_THROW(Hypothesis::make(c, {{"g1", "e1"}}), Error);
    EXPECT_THROW(Hypothesis::make(c, {}), Error);
    EXPECT_THROW(Hypothesis::parse_facts("codes(g1)"), Error);
    EXPECT_THROW(Hypothesis::make(c, {{"g9", "e1"}}), Error);
}
