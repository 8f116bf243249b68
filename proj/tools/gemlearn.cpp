// gemlearn command-line driver.
//
// Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure
// (hypothesis space exhausted, replay divergence).

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>

#include "gemlearn/bench.hpp"
#include "gemlearn/campaign.hpp"
#include "gemlearn/service.hpp"
#include "gemlearn/synthetic.hpp"

namespace fs = std::filesystem;
using namespace gemlearn;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Writes via a sibling temp file and rename, so readers never see a
/// partial file.
void write_atomic(const std::string& path, const std::string& content) {
    const fs::path target(path);
    const fs::path tmp = target.parent_path() / ("." + target.filename().string() + ".tmp" + std::to_string(::getpid()));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::Io, "cannot write '" + tmp.string() + "'");
        out << content;
        out.flush();
        if (!out) throw Error(ErrorKind::Io, "write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw Error(ErrorKind::Io, "cannot replace '" + path + "'");
    }
}

void emit(const std::string& out_path, const std::string& content) {
    if (out_path.empty() || out_path == "-")
        std::cout << content;
    else
        write_atomic(out_path, content);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    for (auto part : detail::split(s, ',')) {
        auto t = detail::trim(part);
        if (!t.empty()) out.emplace_back(t);
    }
    return out;
}

std::vector<GeneEnzyme> parse_deleted(const std::string& s) {
    if (detail::trim(s).empty()) throw Error(ErrorKind::Syntax, "--oracle-deleted is empty");
    return Hypothesis::parse_facts(s);
}

/// `all` or a CSV whose header starts with gene,medium.
std::vector<Trial> load_trials(const std::string& spec, const MetabolicModel& model, const Environment& env) {
    if (spec == "all") return design_space(compile(model, env));
    std::vector<Trial> out;
    std::size_t line_no = 0;
    bool header = false;
    const std::string text = read_file(spec);
    for (auto raw : detail::split(text, '\n')) {
        ++line_no;
        const auto line = detail::trim(raw);
        if (line.empty()) continue;
        const auto fields = detail::split(line, ',');
        if (!header) {
            if (fields.size() < 2 || detail::trim(fields[0]) != "gene" || detail::trim(fields[1]) != "medium")
                throw Error(ErrorKind::Syntax, "expected header 'gene,medium'", line_no);
            header = true;
            continue;
        }
        if (fields.size() < 2) throw Error(ErrorKind::Syntax, "expected gene,medium", line_no);
        Trial t = trial_from_tokens(detail::trim(fields[0]), detail::trim(fields[1]));
        validate_trial(t, model, env, line_no);
        out.push_back(std::move(t));
    }
    return out;
}

struct Common {
    std::string model, env;
    unsigned workers = 1;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--model", c.model, "model file (.gem)")->required();
    cmd->add_option("--env", c.env, "environment file (.env)")->required();
    cmd->add_option("--workers", c.workers, "worker threads")->check(CLI::PositiveNumber);
}

// simulate -----------------------------------------------------------------

struct SimulateArgs {
    Common common;
    std::string trials = "all";
    std::string hypothesis;
    std::string out;
};

int run_simulate(const SimulateArgs& a) {
    const auto model = parse_model(read_file(a.common.model));
    const auto env = parse_environment(read_file(a.common.env));
    const auto c = compile(model, env);
    const auto trials = load_trials(a.trials, model, env);
    std::optional<Hypothesis> h;
    if (!a.hypothesis.empty()) h = Hypothesis::make(c, Hypothesis::parse_facts(a.hypothesis));
    const auto m = simulate_batch(c, std::span(&h, 1), std::span<const Trial>(trials), a.common.workers);
    std::vector<Observation> rows;
    for (std::size_t t = 0; t < trials.size(); ++t) rows.push_back({trials[t], m.at(0, t)});
    emit(a.out, serialize_observations(rows));
    return 0;
}

// abduce -------------------------------------------------------------------

struct AbduceArgs {
    Common common;
    std::string observations;
    std::string enzyme_scope;
    std::string out;
};

int run_abduce(const AbduceArgs& a) {
    const auto model = parse_model(read_file(a.common.model));
    const auto env = parse_environment(read_file(a.common.env));
    const auto obs = parse_observations(read_file(a.observations), model, env);
    const auto c = compile(model, env);
    std::optional<std::vector<std::string>> scope;
    if (!a.enzyme_scope.empty()) scope = split_list(a.enzyme_scope);
    auto space = generate_candidates(c, scope);
    const std::size_t initial = space.size();
    int code = 0;
    try {
        for (const auto& o : obs) prune(space, c, o, a.common.workers);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::SpaceExhausted) throw;
        std::cerr << "gemlearn: " << e.what() << "\n";
        code = 2;
    }
    std::string csv = "hypothesis,status,refuted_by\n";
    for (std::size_t i = 0; i < space.size(); ++i) {
        csv += space.candidates()[i].id() + ',';
        if (space.alive(i)) {
            csv += "alive,\n";
        } else {
            const auto& r = *space.refuted_by(i);
            csv += "refuted," + r.trial.str() + '=' + to_string(r.phenotype) + '\n';
        }
    }
    emit(a.out, csv);
    std::cerr << "candidates " << initial << ", alive " << space.alive_count() << " after " << obs.size()
              << " observations\n";
    return code;
}

// campaign -----------------------------------------------------------------

struct CampaignArgs {
    Common common;
    std::string deleted;
    std::string strategy = "ase";
    std::optional<std::uint64_t> seed;
    std::string budget;
    std::optional<std::size_t> max_trials;
    std::string enzyme_scope;
    std::string log;
    std::string metrics;
};

CampaignConfig build_config(const CampaignArgs& a, const MetabolicModel& model, const Environment& env,
                            const std::vector<GeneEnzyme>& deleted, const Strategy& strategy) {
    CampaignConfig cfg;
    cfg.model = model;
    cfg.env = env;
    cfg.deleted_codes = deleted;
    cfg.strategy = strategy;
    cfg.workers = a.common.workers;
    if (!a.budget.empty()) {
        cfg.budget.max_cost = Cost::parse(a.budget);
        if (!cfg.budget.max_cost) throw Error(ErrorKind::Syntax, "invalid --budget '" + a.budget + "'");
    }
    cfg.budget.max_trials = a.max_trials;
    if (!a.enzyme_scope.empty()) cfg.enzyme_scope = split_list(a.enzyme_scope);
    return cfg;
}

int run_campaign_cmd(const CampaignArgs& a) {
    const auto model = parse_model(read_file(a.common.model));
    const auto env = parse_environment(read_file(a.common.env));
    const auto cfg = build_config(a, model, env, parse_deleted(a.deleted), Strategy::parse(a.strategy, a.seed));

    std::string log_text;
    auto sink = [&](const std::string& line) { log_text += line + '\n'; };
    std::optional<Campaign> campaign;
    bool resumed = false;
    if (!a.log.empty() && fs::exists(a.log) && fs::file_size(a.log) > 0) {
        log_text = read_file(a.log);
        campaign.emplace(Campaign::load(cfg, log_text, sink));
        resumed = true;
    } else {
        campaign.emplace(cfg, sink);
    }

    int code = 0;
    try {
        campaign->run();
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::SpaceExhausted) throw;
        std::cerr << "gemlearn: " << e.what() << "\n";
        code = 2;
    }
    if (!a.log.empty()) write_atomic(a.log, log_text);
    if (!a.metrics.empty()) write_atomic(a.metrics, campaign->metrics_csv());

    const Hypothesis* rep = campaign->recovered_hypothesis();
    std::cout << "status " << to_string(campaign->status()) << (resumed ? " (resumed)" : "") << "\n"
              << "steps " << campaign->steps().size() << "\n"
              << "cumulative_cost " << campaign->cumulative_cost().str() << "\n"
              << "alive " << campaign->space().alive_count() << "\n"
              << "recovered " << (rep ? rep->id() : "-") << "\n"
              << "accuracy "
              << (campaign->steps().empty() ? std::string("-")
                                            : detail::format_fixed(campaign->steps().back().accuracy))
              << "\n";
    return code;
}

// compare ------------------------------------------------------------------

struct CompareArgs {
    CampaignArgs campaign;
    std::string strategies = "ase,random";
    std::string seeds = "1,2,3,4,5";
    std::string out;
};

struct RunOutcome {
    std::string strategy;
    std::optional<std::uint64_t> seed;
    std::optional<Cost> cost_to_full_accuracy;
    bool exhausted = false;
};

std::optional<Cost> cost_at_full_accuracy(const Campaign& c) {
    for (const auto& r : c.steps())
        if (r.accuracy == 1.0) return r.cumulative_cost;
    return std::nullopt;
}

std::optional<double> median(std::vector<double> v) {
    if (v.empty()) return std::nullopt;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

int run_compare(const CompareArgs& a) {
    const auto& ca = a.campaign;
    const auto model = parse_model(read_file(ca.common.model));
    const auto env = parse_environment(read_file(ca.common.env));
    const auto deleted = parse_deleted(ca.deleted);
    std::vector<std::uint64_t> seeds;
    for (const auto& s : split_list(a.seeds)) {
        try {
            seeds.push_back(std::stoull(s));
        } catch (const std::exception&) {
            throw Error(ErrorKind::Syntax, "invalid seed '" + s + "'");
        }
    }

    std::string metrics;
    bool first = true;
    std::vector<RunOutcome> runs;
    for (const auto& name : split_list(a.strategies)) {
        std::vector<std::optional<std::uint64_t>> run_seeds;
        if (name == "random") {
            if (seeds.empty()) throw Error(ErrorKind::Validation, "random strategy needs at least one seed");
            for (auto s : seeds) run_seeds.push_back(s);
        } else {
            run_seeds.push_back(std::nullopt);
        }
        for (const auto& seed : run_seeds) {
            Campaign c(build_config(ca, model, env, deleted, Strategy::parse(name, seed)));
            RunOutcome r{name, seed, std::nullopt, false};
            try {
                c.run();
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::SpaceExhausted) throw;
                r.exhausted = true;
            }
            r.cost_to_full_accuracy = cost_at_full_accuracy(c);
            metrics += c.metrics_csv(first);
            first = false;
            runs.push_back(r);
        }
    }
    if (!ca.metrics.empty()) write_atomic(ca.metrics, metrics);

    Json summary{{"strategies", Json::array()}};
    std::map<std::string, std::optional<double>> medians;
    for (const auto& name : split_list(a.strategies)) {
        std::vector<double> costs;
        std::size_t n = 0, exhausted = 0;
        Json per_run = Json::array();
        for (const auto& r : runs) {
            if (r.strategy != name) continue;
            ++n;
            exhausted += r.exhausted;
            if (r.cost_to_full_accuracy) costs.push_back(r.cost_to_full_accuracy->value());
            per_run.push_back({{"seed", r.seed ? Json(*r.seed) : Json(nullptr)},
                               {"cost_to_full_accuracy",
                                r.cost_to_full_accuracy ? Json(r.cost_to_full_accuracy->str()) : Json(nullptr)},
                               {"exhausted", r.exhausted}});
        }
        medians[name] = median(costs);
        summary["strategies"].push_back({{"strategy", name},
                                         {"runs", n},
                                         {"reached_full_accuracy", costs.size()},
                                         {"exhausted", exhausted},
                                         {"median_cost_to_full_accuracy",
                                          medians[name] ? Json(*medians[name]) : Json(nullptr)},
                                         {"runs_detail", per_run}});
    }
    const auto ase = medians.find("ase");
    const auto rnd = medians.find("random");
    Json ratio = nullptr;
    if (ase != medians.end() && rnd != medians.end() && ase->second && rnd->second && *rnd->second > 0)
        ratio = *ase->second / *rnd->second;
    summary["ase_random_cost_ratio"] = ratio;
    emit(a.out, summary.dump(2) + "\n");
    const bool any_exhausted = std::any_of(runs.begin(), runs.end(), [](const RunOutcome& r) { return r.exhausted; });
    return any_exhausted ? 2 : 0;
}

// bench --------------------------------------------------------------------

struct BenchArgs {
    BenchSpec spec;
    std::string out;
};

int run_bench_cmd(const BenchArgs& a) {
    const auto report = run_bench(a.spec);
    std::fprintf(stderr,
                 "model: %zu genes, %zu reactions, %zu metabolites, %zu media\n"
                 "workers=1: %.0f sims/s (%.4f ms/sim)\n"
                 "workers=%u: %.0f sims/s (%.4f ms/sim)\n"
                 "speedup %.2fx, identical results: %s\n"
                 "reference: 0.6 s/sim on 1 CPU, 0.06 s/sim on 20 CPUs\n",
                 a.spec.model.genes, a.spec.model.reactions, report.metabolites, a.spec.model.media,
                 report.single.sims_per_second, report.single.ms_per_simulation, report.parallel.workers,
                 report.parallel.sims_per_second, report.parallel.ms_per_simulation, report.speedup,
                 report.identical ? "yes" : "no");
    emit(a.out, to_json(report).dump(2) + "\n");
    return report.identical ? 0 : 2;
}

// synth --------------------------------------------------------------------

struct SynthArgs {
    SyntheticSpec spec;
    std::string model_out, env_out;
    bool delete_one = false;
};

int run_synth(const SynthArgs& a) {
    auto inst = generate_synthetic(a.spec);
    if (a.delete_one) {
        auto split = delete_detectable(inst.model, inst.env, a.spec.seed);
        if (!split) throw Error(ErrorKind::Validation, "no codes fact has a detectable deletion in this model");
        inst.model = std::move(split->first);
        std::cout << Hypothesis::fact_id(split->second) << "\n";
    }
    write_atomic(a.model_out, serialize_model(inst.model));
    write_atomic(a.env_out, serialize_environment(inst.env));
    return 0;
}

// serve --------------------------------------------------------------------

httplib::Server* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

int run_serve(const std::string& addr, const std::string& data, unsigned workers) {
    const auto colon = addr.rfind(':');
    if (colon == std::string::npos) throw Error(ErrorKind::Syntax, "--addr must be HOST:PORT");
    const std::string host = addr.substr(0, colon);
    int port = 0;
    try {
        port = std::stoi(addr.substr(colon + 1));
    } catch (const std::exception&) {
        throw Error(ErrorKind::Syntax, "invalid port in --addr '" + addr + "'");
    }
    Service service(data, workers);
    for (const auto& e : service.restore_errors()) std::cerr << "gemlearn: not restored: " << e << "\n";
    httplib::Server server;
    service.mount(server);
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    if (port == 0) {
        port = server.bind_to_any_port(host);
        if (port < 0) throw Error(ErrorKind::Io, "cannot bind " + host);
    } else if (!server.bind_to_port(host, port)) {
        throw Error(ErrorKind::Io, "cannot bind " + addr);
    }
    std::cout << "listening on " << host << ":" << port << std::endl;
    server.listen_after_bind();
    g_server = nullptr;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gene function learning by abduction and active trial selection"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "predict growth phenotypes for trials");
    add_common(simulate, sim.common);
    simulate->add_option("--trials", sim.trials, "'all' or a gene,medium CSV")->capture_default_str();
    simulate->add_option("--hypothesis", sim.hypothesis, "extra facts, codes(g,e)[;...]");
    simulate->add_option("--out", sim.out, "output CSV (default stdout)");

    AbduceArgs abd;
    auto* abduce = app.add_subcommand("abduce", "prune candidate codes facts against observations");
    add_common(abduce, abd.common);
    abduce->add_option("--observations", abd.observations, "gene,medium,phenotype CSV")->required();
    abduce->add_option("--enzyme-scope", abd.enzyme_scope, "comma-separated enzymes");
    abduce->add_option("--out", abd.out, "output CSV (default stdout)");

    CampaignArgs camp;
    auto add_campaign_opts = [](CLI::App* cmd, CampaignArgs& c, bool single) {
        add_common(cmd, c.common);
        cmd->add_option("--oracle-deleted", c.deleted, "ground-truth facts missing from the model")->required();
        if (single) {
            cmd->add_option("--strategy", c.strategy, "ase, naive or random")
                ->check(CLI::IsMember({"ase", "naive", "random"}))
                ->capture_default_str();
            cmd->add_option("--seed", c.seed, "seed for the random strategy");
            cmd->add_option("--log", c.log, "event log; resumed when it exists");
        }
        cmd->add_option("--budget", c.budget, "maximum cumulative cost");
        cmd->add_option("--max-trials", c.max_trials, "maximum number of trials")->check(CLI::PositiveNumber);
        cmd->add_option("--enzyme-scope", c.enzyme_scope, "comma-separated enzymes");
        cmd->add_option("--metrics", c.metrics, "metrics CSV");
    };
    auto* campaign = app.add_subcommand("campaign", "run an oracle-mode learning campaign");
    add_campaign_opts(campaign, camp, true);

    CompareArgs cmp;
    auto* compare = app.add_subcommand("compare", "compare strategies on one oracle campaign");
    add_campaign_opts(compare, cmp.campaign, false);
    compare->add_option("--strategies", cmp.strategies, "comma-separated strategies")->capture_default_str();
    compare->add_option("--seeds", cmp.seeds, "comma-separated seeds for random")->capture_default_str();
    compare->add_option("--out", cmp.out, "summary JSON (default stdout)");

    BenchArgs bench;
    auto* bench_cmd = app.add_subcommand("bench", "simulation throughput on a synthetic model");
    bench_cmd->add_option("--genes", bench.spec.model.genes)->capture_default_str()->check(CLI::PositiveNumber);
    bench_cmd->add_option("--reactions", bench.spec.model.reactions)->capture_default_str()->check(CLI::PositiveNumber);
    bench_cmd->add_option("--metabolites", bench.spec.model.metabolites, "0 derives from reactions")
        ->capture_default_str();
    bench_cmd->add_option("--media", bench.spec.model.media)->capture_default_str()->check(CLI::PositiveNumber);
    bench_cmd->add_option("--trials", bench.spec.trials)->capture_default_str()->check(CLI::PositiveNumber);
    bench_cmd->add_option("--workers", bench.spec.workers)->capture_default_str()->check(CLI::PositiveNumber);
    bench_cmd->add_option("--repetitions", bench.spec.repetitions)->capture_default_str()->check(CLI::PositiveNumber);
    bench_cmd->add_option("--seed", bench.spec.model.seed)->capture_default_str();
    bench_cmd->add_option("--out", bench.out, "report JSON (default stdout)");

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "write a seeded synthetic model and environment");
    synth_cmd->add_option("--genes", synth.spec.genes)->capture_default_str()->check(CLI::PositiveNumber);
    synth_cmd->add_option("--reactions", synth.spec.reactions)->capture_default_str()->check(CLI::PositiveNumber);
    synth_cmd->add_option("--metabolites", synth.spec.metabolites)->capture_default_str();
    synth_cmd->add_option("--media", synth.spec.media)->capture_default_str()->check(CLI::PositiveNumber);
    synth_cmd->add_option("--seed", synth.spec.seed)->capture_default_str();
    synth_cmd->add_option("--model-out", synth.model_out)->required();
    synth_cmd->add_option("--env-out", synth.env_out)->required();
    synth_cmd->add_flag("--delete-detectable", synth.delete_one,
                        "drop one codes fact whose loss changes a knockout phenotype and print it");

    std::string addr = "127.0.0.1:8080", data = "data";
    unsigned serve_workers = 1;
    auto* serve = app.add_subcommand("serve", "run the HTTP service");
    serve->add_option("--addr", addr, "HOST:PORT")->capture_default_str();
    serve->add_option("--data", data, "data directory")->capture_default_str();
    serve->add_option("--workers", serve_workers)->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*simulate) return run_simulate(sim);
        if (*abduce) return run_abduce(abd);
        if (*campaign) return run_campaign_cmd(camp);
        if (*compare) return run_compare(cmp);
        if (*bench_cmd) return run_bench_cmd(bench);
        if (*synth_cmd) return run_synth(synth);
        if (*serve) return run_serve(addr, data, serve_workers);
    } catch (const Error& e) {
        std::cerr << "gemlearn: " << to_string(e.kind()) << ": " << e.what() << "\n";
        return is_runtime(e.kind()) ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "gemlearn: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
