#pragma once

// Simulation throughput benchmark on a seeded synthetic model.

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gemlearn/engine.hpp"
#include "gemlearn/synthetic.hpp"

namespace gemlearn {

struct BenchSpec {
    SyntheticSpec model;
    std::size_t trials = 2000;
    unsigned workers = 8;
    std::size_t repetitions = 3;
};

struct BenchRun {
    unsigned workers = 1;
    double seconds = 0.0;  // best repetition
    double sims_per_second = 0.0;
    double ms_per_simulation = 0.0;
};

struct BenchReport {
    BenchSpec spec;
    std::size_t metabolites = 0;
    std::size_t simulations = 0;  // per repetition
    std::size_t growth = 0;
    BenchRun single;
    BenchRun parallel;
    double speedup = 0.0;
    bool identical = false;  // phenotypes equal across worker counts
};

/// Seeded single-knockout and wild-type trials over every medium.
inline std::vector<TrialRef> bench_trials(const CompiledModel& c, std::size_t n, std::uint64_t seed) {
    detail::Rng rng(seed ^ 0x5EEDBE7Cull);
    std::vector<TrialRef> out;
    out.reserve(n);
    const std::size_t genes = c.genes.size();
    for (std::size_t i = 0; i < n; ++i) {
        TrialRef t;
        const std::size_t g = rng.below(genes + 1);
        if (g < genes) t.knockout = static_cast<Index>(g);
        t.medium = static_cast<Index>(rng.below(c.media.size()));
        out.push_back(t);
    }
    return out;
}

inline BenchReport run_bench(const BenchSpec& spec) {
    if (spec.trials == 0 || spec.workers == 0 || spec.repetitions == 0)
        throw Error(ErrorKind::Validation, "bench parameters must be positive");
    const auto inst = generate_synthetic(spec.model);
    const auto c = compile(inst.model, inst.env);
    const auto trials = bench_trials(c, spec.trials, spec.model.seed);
    const std::optional<Hypothesis> none;

    auto measure = [&](unsigned workers, PhenotypeMatrix& result) {
        BenchRun run;
        run.workers = workers;
        for (std::size_t rep = 0; rep < spec.repetitions; ++rep) {
            const auto t0 = std::chrono::steady_clock::now();
            result = simulate_batch(c, std::span(&none, 1), std::span<const TrialRef>(trials), workers);
            const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            if (rep == 0 || dt < run.seconds) run.seconds = dt;
        }
        const double n = static_cast<double>(trials.size());
        run.sims_per_second = run.seconds > 0 ? n / run.seconds : 0.0;
        run.ms_per_simulation = run.seconds * 1e3 / n;
        return run;
    };

    BenchReport report;
    report.spec = spec;
    report.metabolites = inst.model.metabolites.size();
    report.simulations = trials.size();
    PhenotypeMatrix one, many;
    report.single = measure(1, one);
    report.parallel = measure(spec.workers, many);
    report.identical = one == many;
    for (std::size_t t = 0; t < trials.size(); ++t) report.growth += one.at(0, t) == Phenotype::Growth;
    report.speedup = report.parallel.seconds > 0 ? report.single.seconds / report.parallel.seconds : 0.0;
    return report;
}

inline nlohmann::json to_json(const BenchReport& r) {
    auto run = [](const BenchRun& b) {
        return nlohmann::json{{"workers", b.workers},
                              {"seconds", b.seconds},
                              {"simulations_per_second", b.sims_per_second},
                              {"ms_per_simulation", b.ms_per_simulation}};
    };
    return nlohmann::json{
        {"model",
         {{"genes", r.spec.model.genes},
          {"reactions", r.spec.model.reactions},
          {"metabolites", r.metabolites},
          {"media", r.spec.model.media},
          {"seed", r.spec.model.seed}}},
        {"simulations", r.simulations},
        {"repetitions", r.spec.repetitions},
        {"growth", r.growth},
        {"single", run(r.single)},
        {"parallel", run(r.parallel)},
        {"speedup", r.speedup},
        {"identical_across_workers", r.identical},
        // Published single-simulation times for the full-size model, seconds.
        {"reference_seconds_per_simulation", {{"single_cpu", 0.6}, {"twenty_cpus", 0.06}}},
    };
}

}  // namespace gemlearn
