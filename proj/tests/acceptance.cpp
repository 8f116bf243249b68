// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <set>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "gemlearn/bench.hpp"
#include "gemlearn/campaign.hpp"
#include "gemlearn/synthetic.hpp"
#include "support/test_support.hpp"

using namespace gemlearn;
namespace gt = gemlearn::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
    bool pass = true;
    std::string detail;
    std::vector<std::string> problems;

    void fail(const std::string& why) {
        problems.push_back(why);
        pass = false;
    }

    std::string line() const {
        std::string out = detail;
        for (const auto& p : problems) out += (out.empty() ? "" : "; ") + p;
        return out;
    }
};

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

// Closure vs naive fixpoint ------------------------------------------------

Verdict closure_oracle() {
    Verdict v;
    const auto t0 = Clock::now();
    std::mt19937_64 rng(20240601);
    std::size_t checks = 0, mismatches = 0;
    for (int model_no = 0; model_no < 200; ++model_no) {
        const auto m = gt::random_model(rng);
        const auto env = gt::random_environment(rng, m, 20);
        const auto c = compile(m, env);
        for (const auto& medium : env.media) {
            std::optional<std::string> ko;
            if (rng() % 2) ko = m.genes[rng() % m.genes.size()];
            std::vector<bool> active_naive;
            for (const auto& r : m.reactions) active_naive.push_back(gt::naive_reaction_active(m, r, {}, ko));
            const auto active = active_reactions(c, nullptr, ko ? c.gene_index(*ko) : std::nullopt);
            const auto s = closure(c, active, c.mask_of(medium.metabolites));
            const auto expected = gt::naive_closure(m, active_naive, {medium.metabolites.begin(), medium.metabolites.end()});
            gt::NameSet got;
            for (std::size_t i = 0; i < c.metabolite_count(); ++i)
                if (s.test(i)) got.insert(c.metabolites[i]);
            ++checks;
            mismatches += got != expected;
        }
    }
    const double dt = seconds_since(t0);
    v.detail = std::to_string(checks) + " closures, " + std::to_string(mismatches) + " mismatches, " +
               fmt("%.2f s", dt);
    if (mismatches) v.fail(std::to_string(mismatches) + " closures differ from the naive fixpoint");
    if (dt > 10.0) v.fail(fmt("took %.2f s > 10 s", dt));
    return v;
}

// T1 walkthrough -------------------------------------------------------------

Verdict t1_walkthrough() {
    Verdict v;
    const auto model = gt::t1_incomplete();
    const auto env = gt::t1_env();
    const auto c = compile(model, env);
    auto space = generate_candidates(c);
    if (space.size() != 3) v.fail("expected 3 candidates, got " + std::to_string(space.size()));

    prune(space, c, {Trial::deletion("g2", "M_A"), Phenotype::NoGrowth});
    if (space.alive_count() != 2) v.fail("expected 2 alive after dg2@M_A, got " + std::to_string(space.alive_count()));

    std::set<Trial> tried{Trial::deletion("g2", "M_A")};
    const auto design = design_space(c);
    const auto sel = select_trial(Strategy::ase(), design, tried, space, c, env);
    if (!sel || !(sel->trial == Trial::deletion("g2", "M_B")))
        v.fail("ase did not select dg2@M_B");
    else if (sel->eig_bits != 1.0)
        v.fail(fmt("EIG %.17g != 1.0", sel->eig_bits));

    prune(space, c, {Trial::deletion("g2", "M_B"), Phenotype::NoGrowth});
    const auto alive = space.alive_hypotheses();
    if (alive.size() != 1 || alive[0].id() != "codes(g2,e2)") v.fail("expected exactly {codes(g2,e2)} alive");

    // Accuracy of the recovered model over all six trials, judged by the
    // naive simulator on the complete model.
    const auto full = gt::t1();
    std::size_t correct = 0;
    for (const auto& t : gt::t1_trials())
        correct += gt::naive_simulate(model, env, {{"g2", "e2"}}, t) == gt::naive_simulate(full, env, {}, t);
    if (correct != 6) v.fail("recovered model matches " + std::to_string(correct) + "/6 trials");

    // The same run end to end through a campaign.
    CampaignConfig cfg;
    cfg.model = model;
    cfg.env = env;
    cfg.deleted_codes = {{"g2", "e2"}};
    auto run = run_campaign(cfg);
    const auto& steps = run.steps();
    if (steps.size() != 2 || steps[0].cost.str() != "3.00" || steps[1].cost.str() != "6.00" ||
        run.cumulative_cost().str() != "9.00" || steps.back().accuracy != 1.0)
        v.fail("campaign did not reproduce 3.00 + 6.00 = 9.00 at accuracy 1.0");
    v.detail = "candidates 3 -> 2 -> {codes(g2,e2)}, EIG 1 bit, cost 3.00 + 6.00 = 9.00, accuracy 1.0";
    return v;
}

// Cost reduction on synthetic models ---------------------------------------

Verdict cost_reduction() {
    Verdict v;
    const auto t0 = Clock::now();
    // Final cumulative cost, and the cumulative cost at the first step whose
    // accuracy reached 1.0.
    std::vector<double> ase_costs, random_costs, ase_first, random_first;
    std::size_t not_full = 0, models = 0;
    for (std::uint64_t seed = 1; models < 20; ++seed) {
        if (seed > 200) {
            v.fail("could not build 20 models with a detectable deletion");
            break;
        }
        SyntheticSpec spec;
        spec.genes = 300;
        spec.reactions = 600;
        spec.media = 5;
        spec.seed = seed;
        const auto inst = generate_synthetic(spec);
        auto split = delete_detectable(inst.model, inst.env, seed);
        if (!split) continue;
        ++models;

        CampaignConfig cfg;
        cfg.model = std::move(split->first);
        cfg.env = inst.env;
        cfg.deleted_codes = {split->second};
        auto finish = [&](const Strategy& s, std::vector<double>& costs, std::vector<double>& first) {
            cfg.strategy = s;
            Campaign c(cfg);
            c.run();
            if (c.steps().empty() || c.steps().back().accuracy != 1.0) ++not_full;
            costs.push_back(c.cumulative_cost().value());
            for (const auto& r : c.steps()) {
                if (r.accuracy != 1.0) continue;
                first.push_back(r.cumulative_cost.value());
                break;
            }
        };
        finish(Strategy::ase(), ase_costs, ase_first);
        for (std::uint64_t r = 1; r <= 5; ++r) finish(Strategy::random(r), random_costs, random_first);
    }
    const double dt = seconds_since(t0);
    const double ma = median(ase_costs), mr = median(random_costs);
    const double fa = median(ase_first), fr = median(random_first);
    v.detail = fmt("final cost median ase %.2f vs random %.2f (ratio %.3f)", ma, mr, mr > 0 ? ma / mr : 0) +
               fmt(", first accuracy 1.0 at %.2f vs %.2f (ratio %.3f)", fa, fr, fr > 0 ? fa / fr : 0) +
               fmt(", %.1f s", dt);
    if (not_full) v.fail(std::to_string(not_full) + " runs ended below accuracy 1.0");
    if (!(ma <= 0.5 * mr)) v.fail(fmt("median final ase %.2f > 0.5 x random %.2f", ma, mr));
    if (!(fa <= 0.5 * fr)) v.fail(fmt("median ase cost to accuracy 1.0 %.2f > 0.5 x random %.2f", fa, fr));
    if (dt > 300.0) v.fail(fmt("took %.1f s > 300 s", dt));
    return v;
}

// Throughput -----------------------------------------------------------------

Verdict throughput() {
    Verdict v;
    BenchSpec spec;
    spec.model.genes = 1515;
    spec.model.reactions = 2719;
    spec.model.seed = 1;
    spec.workers = 8;
    spec.trials = 4000;
    spec.repetitions = 3;
    const auto report = run_bench(spec);

    // Hypothesis batches as well as wild-type batches must not depend on
    // the worker count.
    const auto inst = generate_synthetic(spec.model);
    const auto c = compile(inst.model, inst.env);
    const auto trials = bench_trials(c, 500, 7);
    auto space = generate_candidates(c, std::vector<std::string>{c.enzymes[0], c.enzymes[1], c.enzymes[2]});
    std::vector<std::optional<Hypothesis>> hyps{std::nullopt};
    for (const auto& h : space.candidates()) {
        hyps.emplace_back(h);
        if (hyps.size() >= 200) break;
    }
    const auto a = simulate_batch(c, hyps, std::span<const TrialRef>(trials), 1);
    const auto b = simulate_batch(c, hyps, std::span<const TrialRef>(trials), 8);
    const auto d = simulate_batch(c, hyps, std::span<const TrialRef>(trials), 3);
    const bool identical = report.identical && a == b && a == d;

    v.detail = fmt("%.0f sims/s single, %.2fx at 8 workers", report.single.sims_per_second, report.speedup) +
               ", hardware threads " + std::to_string(std::thread::hardware_concurrency()) +
               (identical ? ", identical across workers" : ", results differ across workers");
    if (report.single.sims_per_second < 1000.0)
        v.fail(fmt("%.0f sims/s < 1000", report.single.sims_per_second));
    if (report.speedup < 4.0)
        v.fail(fmt("speedup %.2fx < 4x at 8 workers", report.speedup));
    if (!identical) v.fail("batch results differ across worker counts");
    return v;
}

// Replay determinism ---------------------------------------------------------

struct Logged {
    CampaignConfig cfg;
    std::string log;
    std::vector<StepRecord> steps;
};

Logged record(CampaignConfig cfg) {
    Logged out{cfg, {}, {}};
    Campaign c(std::move(cfg), [&](const std::string& line) { out.log += line + '\n'; });
    try {
        c.run();
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::SpaceExhausted) throw;
    }
    out.steps = c.steps();
    return out;
}

/// Loads the first `k` steps of the log, continues, and compares with the
/// uninterrupted run.
bool resumes_identically(const Logged& full, std::size_t k) {
    std::size_t cut = full.log.find('\n') + 1;
    for (std::size_t i = 0; i < k; ++i) cut = full.log.find('\n', cut) + 1;
    std::string log = full.log.substr(0, cut);
    auto c = Campaign::load(full.cfg, log, [&](const std::string& line) { log += line + '\n'; });
    try {
        c.run();
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::SpaceExhausted) throw;
    }
    return c.steps() == full.steps && log == full.log;
}

Verdict replay_determinism() {
    Verdict v;
    std::vector<Logged> logs;
    auto t1 = [] {
        CampaignConfig cfg;
        cfg.model = gt::t1_incomplete();
        cfg.env = gt::t1_env();
        cfg.deleted_codes = {{"g2", "e2"}};
        return cfg;
    };
    for (auto s : {Strategy::ase(), Strategy::naive(), Strategy::random(1), Strategy::random(2), Strategy::random(3)}) {
        auto cfg = t1();
        cfg.strategy = s;
        logs.push_back(record(cfg));
    }
    for (std::uint64_t seed : {3, 4}) {
        SyntheticSpec spec;
        spec.genes = 120;
        spec.reactions = 240;
        spec.seed = seed;
        const auto inst = generate_synthetic(spec);
        auto split = delete_detectable(inst.model, inst.env, seed);
        if (!split) continue;
        for (auto s : {Strategy::ase(), Strategy::random(seed)}) {
            CampaignConfig cfg;
            cfg.model = split->first;
            cfg.env = inst.env;
            cfg.deleted_codes = {split->second};
            cfg.strategy = s;
            logs.push_back(record(cfg));
        }
    }
    std::size_t resumes = 0, bad = 0;
    for (const auto& l : logs) {
        const std::size_t n = l.steps.size();
        std::vector<std::size_t> cuts;
        if (n <= 12) {
            for (std::size_t k = 0; k <= n; ++k) cuts.push_back(k);
        } else {
            for (std::size_t k : {std::size_t{0}, std::size_t{1}, n / 4, n / 2, n - 1, n}) cuts.push_back(k);
        }
        for (auto k : cuts) {
            ++resumes;
            bad += !resumes_identically(l, k);
        }
    }
    v.detail = std::to_string(logs.size()) + " logs, " + std::to_string(resumes) + " resumes, " +
               std::to_string(bad) + " divergent";
    if (bad) v.fail(std::to_string(bad) + " resumed runs differ from the uninterrupted run");
    if (logs.size() < 7) v.fail("synthetic logs missing");
    return v;
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        std::function<Verdict()> run;
    };
    const Criterion criteria[] = {
        {"closure-oracle", closure_oracle},
        {"t1-walkthrough", t1_walkthrough},
        {"cost-reduction", cost_reduction},
        {"throughput", throughput},
        {"replay-determinism", replay_determinism},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        Verdict v;
        try {
            v = c.run();
        } catch (const std::exception& e) {
            v.fail(std::string("exception: ") + e.what());
        }
        std::printf("%s %s: %s\n", v.pass ? "PASS" : "FAIL", c.name, v.line().c_str());
        std::fflush(stdout);
        failed += !v.pass;
    }
    return failed ? 1 : 0;
}
