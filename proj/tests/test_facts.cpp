#include <gtest/gtest.h>

#include <random>

#include "gemlearn/facts.hpp"
#include "support/test_support.hpp"

using namespace gemlearn;
using gemlearn::testing::fixture;

namespace {

ErrorKind kind_of(auto&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "expected gemlearn::Error";
    return ErrorKind::Io;
}

}  // namespace

TEST(ParseModel, EmptyFileIsEmptyModel) {
    const auto m = parse_model("");
    EXPECT_TRUE(m.metabolites.empty());
    EXPECT_TRUE(m.genes.empty());
    EXPECT_TRUE(m.enzymes.empty());
    EXPECT_TRUE(m.codes.empty());
    EXPECT_TRUE(m.reactions.empty());
    EXPECT_TRUE(m.essential.empty());
}

TEST(ParseModel, ToyModel) {
    const auto m = gemlearn::testing::t1();
    EXPECT_EQ(m.metabolites, (std::vector<std::string>{"A", "B", "C", "D", "E"}));
    EXPECT_EQ(m.genes, (std::vector<std::string>{"g1", "g2"}));
    EXPECT_EQ(m.enzymes, (std::vector<std::string>{"e1", "e2"}));
    EXPECT_EQ(m.codes, (std::vector<GeneEnzyme>{{"g1", "e1"}, {"g2", "e2"}}));
    ASSERT_EQ(m.reactions.size(), 2u);
    EXPECT_EQ(m.reactions[0].id, "r1");
    EXPECT_EQ(m.reactions[0].enzymes, std::vector<std::string>{"e1"});
    EXPECT_EQ(m.reactions[0].substrates, std::vector<std::string>{"A"});
    EXPECT_EQ(m.reactions[0].products, std::vector<std::string>{"B"});
    EXPECT_FALSE(m.reactions[0].reversible);
    EXPECT_EQ(m.essential, std::vector<std::string>{"E"});
}

TEST(ParseModel, UndeclaredEnzymeIsNamed) {
    const std::string text = "metabolite A\nmetabolite B\nreaction r1 rev=0 enz=e9 sub=A prod=B\n";
    try {
        parse_model(text);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Undeclared);
        EXPECT_EQ(e.line(), 3u);
        EXPECT_NE(std::string(e.what()).find("e9"), std::string::npos);
    }
}

TEST(ParseModel, ForwardReferencesAndComments) {
    const auto m = parse_model("codes g e   # trailing comment\n\n  gene g\nenzyme e\n");
    EXPECT_EQ(m.codes.size(), 1u);
}

TEST(ParseModel, SpontaneousAndSourceReactions) {
    const auto m = parse_model("metabolite A\nreaction src rev=0 enz=- sub=- prod=A\n");
    ASSERT_EQ(m.reactions.size(), 1u);
    EXPECT_TRUE(m.reactions[0].enzymes.empty());
    EXPECT_TRUE(m.reactions[0].substrates.empty());
}

TEST(ParseModel, MalformedFixturesYieldStructuredErrors) {
    struct Case {
        const char* text;
        ErrorKind kind;
    };
    const Case cases[] = {
        {"metabolite A\nmetabolite A\n", ErrorKind::Duplicate},
        {"gene g\nenzyme e\ncodes g e\ncodes g e\n", ErrorKind::Duplicate},
        {"metabolite A\nreaction r rev=0 enz=- sub=- prod=-\n", ErrorKind::Validation},
        {"metabolite A\nreaction r rev=0 enz=- sub=A prod=A\n", ErrorKind::Validation},
        {"metabolite A\nreaction r rev=2 enz=- sub=A prod=-\n", ErrorKind::Syntax},
        {"metabolite A\nreaction r rev=0 enz=- sub=A\n", ErrorKind::Syntax},
        {"metabolite A\nreaction r rev=0 enz=- sub=A foo=B prod=-\n", ErrorKind::Syntax},
        {"metabolite A B\n", ErrorKind::Syntax},
        {"metabolite A$\n", ErrorKind::Syntax},
        {"frobnicate A\n", ErrorKind::Syntax},
        {"essential X\n", ErrorKind::Undeclared},
        {"gene g\ncodes g e\n", ErrorKind::Undeclared},
        {"gene WT\n", ErrorKind::Validation},
        {"metabolite A\nreaction r rev=0 enz=- sub=A,A prod=-\n", ErrorKind::Duplicate},
        {"metabolite A\nmetabolite B\nreaction r rev=0 enz=- sub=A prod=B\nreaction r rev=0 enz=- sub=B prod=A\n",
         ErrorKind::Duplicate},
    };
    for (const auto& c : cases) EXPECT_EQ(kind_of([&] { parse_model(c.text); }), c.kind) << c.text;
}

TEST(ParseModel, RoundTripOnRandomModels) {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 50; ++i) {
        const auto m = gemlearn::testing::random_model(rng);
        EXPECT_EQ(parse_model(serialize_model(m)), m);
    }
    const auto t1 = gemlearn::testing::t1();
    EXPECT_EQ(parse_model(serialize_model(t1)), t1);
}

TEST(ParseEnvironment, OneNutrientMedium) {
    const auto env = parse_environment("base_cost 1.0\nprice A 2.0\nmedium M_A A\n");
    EXPECT_EQ(env.base_cost.cents(), 100);
    ASSERT_EQ(env.media.size(), 1u);
    EXPECT_EQ(env.prices.at("A").cents(), 200);
}

TEST(ParseEnvironment, UnpricedMediumMetaboliteIsNamed) {
    try {
        parse_environment("price A 2.0\nmedium M A,Z\n");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Validation);
        EXPECT_NE(std::string(e.what()).find("'Z'"), std::string::npos);
    }
}

TEST(ParseEnvironment, TwoMediaAndErrors) {
    const auto env = parse_environment("price A 2.0\nprice B 5.0\nmedium M_A A\nmedium M_B B\nprice X 9\n");
    EXPECT_EQ(env.media.size(), 2u);
    EXPECT_EQ(env.base_cost.cents(), 0);
    EXPECT_EQ(kind_of([] { parse_environment("price A -1\n"); }), ErrorKind::Validation);
    EXPECT_EQ(kind_of([] { parse_environment("price A 1\nmedium M A\nmedium M A\n"); }), ErrorKind::Duplicate);
    EXPECT_EQ(kind_of([] { parse_environment("price A 1.005\n"); }), ErrorKind::Syntax);
    EXPECT_EQ(kind_of([] { parse_environment("base_cost x\n"); }), ErrorKind::Syntax);
}

TEST(Cost, FixedPointParsing) {
    EXPECT_EQ(Cost::parse("3")->cents(), 300);
    EXPECT_EQ(Cost::parse("2.5")->cents(), 250);
    EXPECT_EQ(Cost::parse("0.250")->cents(), 25);
    EXPECT_EQ(Cost::parse(".5")->cents(), 50);
    EXPECT_FALSE(Cost::parse("1.234"));
    EXPECT_FALSE(Cost::parse("abc"));
    EXPECT_FALSE(Cost::parse("."));
    EXPECT_EQ(Cost::parse("3.00")->str(), "3.00");
    EXPECT_EQ((*Cost::parse("0.1") + *Cost::parse("0.2")).str(), "0.30");
}

TEST(ParseObservations, RowsAndErrors) {
    const auto model = gemlearn::testing::t1();
    const auto env = gemlearn::testing::t1_env();
    const auto obs = parse_observations("gene,medium,phenotype\ng2,M_A,no_growth\nWT,M_A,growth\n", model, env);
    ASSERT_EQ(obs.size(), 2u);
    EXPECT_EQ(obs[0].trial, Trial::deletion("g2", "M_A"));
    EXPECT_EQ(obs[0].phenotype, Phenotype::NoGrowth);
    EXPECT_TRUE(obs[1].trial.is_wild_type());
    EXPECT_EQ(obs[1].phenotype, Phenotype::Growth);

    try {
        parse_observations("gene,medium,phenotype\ng2,M_A,maybe\n", model, env);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("unknown phenotype label"), std::string::npos);
    }
    EXPECT_EQ(kind_of([&] { parse_observations("gene,medium,phenotype\ng9,M_A,growth\n", model, env); }),
              ErrorKind::Undeclared);
    EXPECT_EQ(kind_of([&] { parse_observations("gene,medium,phenotype\ng1,M_Z,growth\n", model, env); }),
              ErrorKind::UnknownMedium);
    EXPECT_EQ(kind_of([&] { parse_observations("gene,medium,phenotype\ng1,M_A\n", model, env); }),
              ErrorKind::Syntax);
    EXPECT_EQ(kind_of([&] { parse_observations("g1,M_A,growth\n", model, env); }), ErrorKind::Syntax);
    EXPECT_EQ(parse_observations(serialize_observations(obs), model, env), obs);
}

TEST(Trial, OrderingUsesKnockoutToken) {
    EXPECT_LT(Trial::wild_type("M_B"), Trial::deletion("g1", "M_A"));
    EXPECT_LT(Trial::deletion("g1", "M_A"), Trial::deletion("g1", "M_B"));
    EXPECT_LT(Trial::deletion("g1", "M_B"), Trial::deletion("g2", "M_A"));
}
