#pragma once

// Closed-loop active learning campaign: select a trial, obtain its outcome
// (from a ground-truth oracle or an external submitter), prune, record.
// Every step is appended to a JSON-lines event log that can be replayed to
// reconstruct the exact state.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gemlearn/abduction.hpp"
#include "gemlearn/engine.hpp"
#include "gemlearn/facts.hpp"
#include "gemlearn/selection.hpp"

namespace gemlearn {

using Json = nlohmann::json;

/// FNV-1a 64-bit, hex encoded. Used as a content digest in log headers.
inline std::string content_hash(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : data) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Ground truth used to answer trials in synthetic mode.
class Oracle {
public:
    Oracle(const MetabolicModel& working, std::span<const GeneEnzyme> deleted, const Environment& env) {
        MetabolicModel truth = working;
        for (const auto& f : deleted) {
            if (truth.has_codes(f.first, f.second))
                throw Error(ErrorKind::Validation, Hypothesis::fact_id(f) + " is not missing from the model");
            truth.codes.push_back(f);
        }
        ground_truth_ = compile(truth, env);
    }

    const CompiledModel& ground_truth() const noexcept { return ground_truth_; }

    Phenotype observe(const Trial& t) const { return simulate(ground_truth_, nullptr, t); }

private:
    CompiledModel ground_truth_;
};

/// Noise-free outcomes of the trials under the oracle's ground truth.
inline std::vector<Observation> synth_outcomes(const Oracle& oracle, std::span<const Trial> trials,
                                               unsigned workers = 1) {
    std::vector<Observation> out;
    if (trials.empty()) return out;
    const std::optional<Hypothesis> none;
    const auto m = simulate_batch(oracle.ground_truth(), std::span(&none, 1), trials, workers);
    out.reserve(trials.size());
    for (std::size_t t = 0; t < trials.size(); ++t) out.push_back({trials[t], m.at(0, t)});
    return out;
}

struct Budget {
    std::optional<Cost> max_cost;
    std::optional<std::size_t> max_trials;
};

struct CampaignConfig {
    MetabolicModel model;  // incomplete working model
    Environment env;
    std::vector<GeneEnzyme> deleted_codes;  // oracle mode
    bool external = false;
    Strategy strategy;
    Budget budget;
    std::optional<std::vector<std::string>> enzyme_scope;
    std::optional<std::vector<Trial>> design;      // default: full design space
    std::optional<std::vector<Trial>> evaluation;  // default: the design
    unsigned workers = 1;
    Json labels = Json::object();  // opaque metadata carried in the log header
};

enum class CampaignStatus { Selecting, AwaitingOutcome, Done, Exhausted, BudgetExhausted };

inline const char* to_string(CampaignStatus s) noexcept {
    switch (s) {
        case CampaignStatus::Selecting: return "selecting";
        case CampaignStatus::AwaitingOutcome: return "awaiting_outcome";
        case CampaignStatus::Done: return "done";
        case CampaignStatus::Exhausted: return "exhausted";
        case CampaignStatus::BudgetExhausted: return "budget_exhausted";
    }
    return "?";
}

inline bool is_terminal(CampaignStatus s) noexcept {
    return s == CampaignStatus::Done || s == CampaignStatus::Exhausted || s == CampaignStatus::BudgetExhausted;
}

struct StepRecord {
    std::size_t step = 0;  // 1-based
    Trial trial;
    std::string strategy;
    double eig_bits = 0.0;
    Cost cost;
    Cost cumulative_cost;
    Phenotype outcome = Phenotype::NoGrowth;
    std::size_t alive_before = 0;
    std::size_t alive = 0;
    double accuracy = 0.0;

    friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

inline Json to_json(const StepRecord& r) {
    return Json{{"type", "step"},
                {"step", r.step},
                {"gene", std::string(r.trial.knockout_token())},
                {"medium", r.trial.medium},
                {"strategy", r.strategy},
                {"eig_bits", r.eig_bits},
                {"cost", r.cost.str()},
                {"cumulative_cost", r.cumulative_cost.str()},
                {"outcome", to_string(r.outcome)},
                {"alive_before", r.alive_before},
                {"alive", r.alive},
                {"accuracy", r.accuracy}};
}

inline StepRecord step_from_json(const Json& j) {
    auto cost = [](const Json& v) {
        auto c = Cost::parse(v.get<std::string>());
        if (!c) throw Error(ErrorKind::CorruptLog, "bad cost field");
        return *c;
    };
    StepRecord r;
    r.step = j.at("step").get<std::size_t>();
    r.trial = trial_from_tokens(j.at("gene").get<std::string>(), j.at("medium").get<std::string>());
    r.strategy = j.at("strategy").get<std::string>();
    r.eig_bits = j.at("eig_bits").get<double>();
    r.cost = cost(j.at("cost"));
    r.cumulative_cost = cost(j.at("cumulative_cost"));
    auto outcome = parse_phenotype(j.at("outcome").get<std::string>());
    if (!outcome) throw Error(ErrorKind::CorruptLog, "bad outcome field");
    r.outcome = *outcome;
    r.alive_before = j.at("alive_before").get<std::size_t>();
    r.alive = j.at("alive").get<std::size_t>();
    r.accuracy = j.at("accuracy").get<double>();
    return r;
}

namespace detail {

inline Json trials_to_json(const std::optional<std::vector<Trial>>& trials) {
    if (!trials) return nullptr;
    Json out = Json::array();
    for (const auto& t : *trials) out.push_back({std::string(t.knockout_token()), t.medium});
    return out;
}

inline std::optional<std::vector<Trial>> trials_from_json(const Json& j) {
    if (j.is_null()) return std::nullopt;
    std::vector<Trial> out;
    for (const auto& t : j) out.push_back(trial_from_tokens(t.at(0).get<std::string>(), t.at(1).get<std::string>()));
    return out;
}

inline std::string format_fixed(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace detail

/// Log header: config digest plus everything needed to rebuild the config
/// given the model and environment files.
inline Json header_json(const CampaignConfig& cfg) {
    Json deleted = Json::array();
    for (const auto& f : cfg.deleted_codes) deleted.push_back(Hypothesis::fact_id(f));
    return Json{{"type", "header"},
                {"version", 1},
                {"model_hash", content_hash(serialize_model(cfg.model))},
                {"environment_hash", content_hash(serialize_environment(cfg.env))},
                {"strategy", to_string(cfg.strategy.kind)},
                {"seed", cfg.strategy.seed ? Json(*cfg.strategy.seed) : Json(nullptr)},
                {"mode", cfg.external ? "external" : "oracle"},
                {"deleted_codes", deleted},
                {"budget_cost", cfg.budget.max_cost ? Json(cfg.budget.max_cost->str()) : Json(nullptr)},
                {"budget_trials", cfg.budget.max_trials ? Json(*cfg.budget.max_trials) : Json(nullptr)},
                {"enzyme_scope", cfg.enzyme_scope ? Json(*cfg.enzyme_scope) : Json(nullptr)},
                {"design", detail::trials_to_json(cfg.design)},
                {"evaluation", detail::trials_to_json(cfg.evaluation)},
                {"labels", cfg.labels}};
}

/// Rebuilds a config from a header and the model/environment it refers to.
inline CampaignConfig config_from_header(const Json& h, MetabolicModel model, Environment env, unsigned workers = 1) {
    CampaignConfig cfg;
    cfg.model = std::move(model);
    cfg.env = std::move(env);
    std::optional<std::uint64_t> seed;
    if (!h.at("seed").is_null()) seed = h.at("seed").get<std::uint64_t>();
    cfg.strategy = Strategy::parse(h.at("strategy").get<std::string>(), seed);
    cfg.external = h.at("mode").get<std::string>() == "external";
    for (const auto& f : h.at("deleted_codes")) {
        auto facts = Hypothesis::parse_facts(f.get<std::string>());
        cfg.deleted_codes.insert(cfg.deleted_codes.end(), facts.begin(), facts.end());
    }
    if (!h.at("budget_cost").is_null()) cfg.budget.max_cost = Cost::parse(h.at("budget_cost").get<std::string>());
    if (!h.at("budget_trials").is_null()) cfg.budget.max_trials = h.at("budget_trials").get<std::size_t>();
    if (!h.at("enzyme_scope").is_null()) cfg.enzyme_scope = h.at("enzyme_scope").get<std::vector<std::string>>();
    cfg.design = detail::trials_from_json(h.at("design"));
    cfg.evaluation = detail::trials_from_json(h.at("evaluation"));
    cfg.labels = h.value("labels", Json::object());
    cfg.workers = workers;
    return cfg;
}

struct ParsedLog {
    Json header;
    std::vector<StepRecord> steps;
};

/// Splits a log into header and step records. Every record must be a
/// complete newline-terminated JSON object; the first bad record is
/// reported with its byte offset.
inline ParsedLog parse_log(std::string_view text) {
    ParsedLog out;
    std::size_t offset = 0;
    bool have_header = false;
    while (offset < text.size()) {
        const auto nl = text.find('\n', offset);
        if (nl == std::string_view::npos)
            throw Error(ErrorKind::CorruptLog, "truncated record at byte offset " + std::to_string(offset));
        const auto line = text.substr(offset, nl - offset);
        try {
            const Json j = Json::parse(line);
            const auto type = j.at("type").get<std::string>();
            if (!have_header) {
                if (type != "header") throw Error(ErrorKind::CorruptLog, "first record is not a header");
                out.header = j;
                have_header = true;
            } else if (type == "step") {
                out.steps.push_back(step_from_json(j));
                if (out.steps.back().step != out.steps.size())
                    throw Error(ErrorKind::CorruptLog, "step numbers out of sequence");
            } else {
                throw Error(ErrorKind::CorruptLog, "unexpected record type '" + type + "'");
            }
        } catch (const Error& e) {
            throw Error(ErrorKind::CorruptLog,
                        "corrupt record at byte offset " + std::to_string(offset) + ": " + e.what());
        } catch (const std::exception& e) {
            throw Error(ErrorKind::CorruptLog,
                        "corrupt record at byte offset " + std::to_string(offset) + ": " + e.what());
        }
        offset = nl + 1;
    }
    if (!have_header) throw Error(ErrorKind::CorruptLog, "empty log");
    return out;
}

/// Receives each serialized record (one line, no trailing newline).
using EventSink = std::function<void(const std::string&)>;

class Campaign {
public:
    explicit Campaign(CampaignConfig cfg, EventSink sink = {}) : cfg_(std::move(cfg)), sink_(std::move(sink)) {
        init();
        emit(header_json(cfg_));
    }

    /// Rebuilds a campaign from its event log, re-deriving every selection,
    /// outcome and pruning step. Any disagreement with the recorded values is
    /// a ReplayDivergence. The sink only sees records appended after replay.
    /// An external campaign comes back with its next suggestion pending.
    static Campaign load(CampaignConfig cfg, std::string_view log_text, EventSink sink = {}) {
        const auto parsed = parse_log(log_text);
        Campaign c(std::move(cfg), Replay{});
        const auto expected = header_json(c.cfg_);
        for (const char* key : {"model_hash", "environment_hash", "strategy", "seed", "mode", "deleted_codes",
                                "enzyme_scope", "design", "evaluation"})
            if (parsed.header.value(key, Json()) != expected.at(key))
                throw Error(ErrorKind::ReplayDivergence, std::string("log header field '") + key +
                                                             "' does not match the supplied configuration");
        for (const auto& rec : parsed.steps) c.replay(rec);
        c.sink_ = std::move(sink);
        if (c.cfg_.external) c.advance();
        return c;
    }

    const CampaignConfig& config() const noexcept { return cfg_; }
    const CompiledModel& compiled() const noexcept { return *compiled_; }
    const HypothesisSpace& space() const noexcept { return space_; }
    const std::vector<StepRecord>& steps() const noexcept { return steps_; }
    const std::set<Trial>& tried() const noexcept { return tried_; }
    const std::vector<Trial>& design() const noexcept { return design_; }
    Cost cumulative_cost() const noexcept { return cumulative_; }
    CampaignStatus status() const noexcept { return status_; }
    const std::optional<TrialScore>& suggestion() const noexcept { return pending_; }
    const std::optional<Oracle>& oracle() const noexcept { return oracle_; }

    /// Moves the campaign forward by one selection. In oracle mode the trial
    /// is answered and recorded immediately; in external mode the campaign
    /// then waits for submit(). Returns false once terminal or while an
    /// outcome is pending.
    bool advance() {
        if (is_terminal(status_) || status_ == CampaignStatus::AwaitingOutcome) return false;
        auto next = next_selection();
        if (!next) return false;
        if (cfg_.external) {
            pending_ = std::move(next);
            status_ = CampaignStatus::AwaitingOutcome;
            return false;
        }
        apply(*next, oracle_->observe(next->trial));
        return !is_terminal(status_);
    }

    /// Runs an oracle-mode campaign to a terminal status. Propagates
    /// SpaceExhausted after recording the step that emptied the space.
    void run() {
        while (advance()) {
        }
    }

    /// Records the outcome of the pending suggestion (external mode).
    const StepRecord& submit(const Trial& trial, Phenotype outcome) {
        if (is_terminal(status_)) throw Error(ErrorKind::Validation, "campaign is finished");
        if (!pending_) throw Error(ErrorKind::Validation, "no suggestion is pending");
        if (!(pending_->trial == trial))
            throw Error(ErrorKind::Validation,
                        "outcome is for " + trial.str() + " but the pending suggestion is " + pending_->trial.str());
        auto sel = *pending_;
        pending_.reset();
        status_ = CampaignStatus::Selecting;
        apply(sel, outcome);
        if (!is_terminal(status_)) advance();
        return steps_.back();
    }

    const Hypothesis* recovered_hypothesis() const {
        if (space_.alive_count() == 0) return nullptr;
        return &representative(space_);
    }

    /// `step,strategy,seed,cost,cumulative_cost,log10_cumulative_cost,alive,accuracy`
    std::string metrics_csv(bool header = true) const {
        std::string out;
        if (header) out = "step,strategy,seed,cost,cumulative_cost,log10_cumulative_cost,alive,accuracy\n";
        const std::string seed = cfg_.strategy.seed ? std::to_string(*cfg_.strategy.seed) : "";
        for (const auto& r : steps_) {
            out += std::to_string(r.step) + ',' + r.strategy + ',' + seed + ',' + r.cost.str() + ',' +
                   r.cumulative_cost.str() + ',' + detail::format_fixed(std::log10(r.cumulative_cost.value())) + ',' +
                   std::to_string(r.alive) + ',' + detail::format_fixed(r.accuracy) + '\n';
        }
        return out;
    }

private:
    struct Replay {};
    Campaign(CampaignConfig cfg, Replay) : cfg_(std::move(cfg)) { init(); }

    void init() {
        if (cfg_.external == !cfg_.deleted_codes.empty())
            throw Error(ErrorKind::Validation, "campaign needs exactly one of: deleted codes (oracle) or external mode");
        if (cfg_.budget.max_cost && cfg_.budget.max_cost->cents() <= 0)
            throw Error(ErrorKind::Validation, "budget must be positive");
        if (cfg_.budget.max_trials && *cfg_.budget.max_trials == 0)
            throw Error(ErrorKind::Validation, "trial budget must be positive");
        if (cfg_.strategy.kind == StrategyKind::Random && !cfg_.strategy.seed)
            throw Error(ErrorKind::Validation, "random strategy requires a seed");
        if (cfg_.strategy.kind != StrategyKind::Random) cfg_.strategy.seed.reset();

        compiled_ = std::make_shared<const CompiledModel>(compile(cfg_.model, cfg_.env));
        const auto& c = *compiled_;
        space_ = generate_candidates(c, cfg_.enzyme_scope);
        design_ = cfg_.design ? *cfg_.design : design_space(c);
        for (const auto& t : design_) validate_trial(t, cfg_.model, cfg_.env);
        if (cfg_.strategy.kind == StrategyKind::Ase)
            table_ = std::make_shared<const PredictionTable>(space_, c, design_, cfg_.workers);

        if (!cfg_.external) {
            oracle_.emplace(cfg_.model, cfg_.deleted_codes, cfg_.env);
            for (const auto& f : cfg_.deleted_codes)
                if (!space_.find(Hypothesis::fact_id(f)))
                    throw Error(ErrorKind::Validation,
                                "deleted fact " + Hypothesis::fact_id(f) + " is outside the candidate space");
            const auto& eval = cfg_.evaluation ? *cfg_.evaluation : design_;
            for (const auto& t : eval) validate_trial(t, cfg_.model, cfg_.env);
            const auto truth = synth_outcomes(*oracle_, eval, cfg_.workers);
            std::vector<TrialRef> refs;
            for (const auto& o : truth) {
                refs.push_back(resolve(c, o.trial));
                eval_truth_.push_back(o.phenotype);
            }
            if (!refs.empty()) eval_plan_ = std::make_shared<const BatchPlan>(c, refs, cfg_.workers);
            eval_on_table_ = table_ && eval == design_;
        }
    }

    void emit(const Json& j) {
        if (sink_) sink_(j.dump());
    }

    /// Applies the stop rules and asks the strategy for the next trial.
    std::optional<TrialScore> next_selection() {
        status_ = CampaignStatus::Selecting;
        if (space_.alive_count() <= 1) {
            status_ = CampaignStatus::Done;
            return std::nullopt;
        }
        if (cfg_.budget.max_trials && steps_.size() >= *cfg_.budget.max_trials) {
            status_ = CampaignStatus::BudgetExhausted;
            return std::nullopt;
        }
        auto sel = select_trial(cfg_.strategy, design_, tried_, space_, *compiled_, cfg_.env, steps_.size(),
                                cfg_.workers, table_.get());
        if (!sel) {
            status_ = CampaignStatus::Done;
            return std::nullopt;
        }
        if (cfg_.budget.max_cost && cumulative_ + sel->cost > *cfg_.budget.max_cost) {
            status_ = CampaignStatus::BudgetExhausted;
            return std::nullopt;
        }
        return sel;
    }

    double accuracy() {
        if (space_.alive_count() == 0) return 0.0;
        const std::size_t rep = representative_index(space_);
        const Hypothesis& h = space_.candidates()[rep];
        if (cfg_.external) {
            // No ground truth: score against everything observed so far.
            std::vector<TrialRef> refs;
            std::vector<Phenotype> truth;
            for (const auto& r : steps_) {
                refs.push_back(resolve(*compiled_, r.trial));
                truth.push_back(r.outcome);
            }
            return predictive_accuracy(*compiled_, &h, refs, truth, cfg_.workers);
        }
        if (!eval_plan_) return 0.0;
        if (cached_rep_ == rep) return cached_accuracy_;
        std::size_t hits = 0;
        if (eval_on_table_) {
            for (std::size_t t = 0; t < eval_truth_.size(); ++t) hits += table_->predict(rep, t) == eval_truth_[t];
        } else {
            std::vector<Phenotype> pred(eval_truth_.size());
            for (std::size_t t = 0; t < pred.size(); ++t) pred[t] = eval_plan_->baseline(t);
            ClosureWorkspace ws;
            eval_plan_->evaluate(h, ws, [&](std::size_t t, Phenotype p) { pred[t] = p; });
            for (std::size_t t = 0; t < pred.size(); ++t) hits += pred[t] == eval_truth_[t];
        }
        cached_rep_ = rep;
        cached_accuracy_ = static_cast<double>(hits) / static_cast<double>(eval_truth_.size());
        return cached_accuracy_;
    }

    StepRecord& record(const TrialScore& sel, Phenotype outcome, std::size_t before, std::size_t after) {
        cumulative_ += sel.cost;
        tried_.insert(sel.trial);
        StepRecord r;
        r.step = steps_.size() + 1;
        r.trial = sel.trial;
        r.strategy = to_string(cfg_.strategy.kind);
        r.eig_bits = sel.eig_bits;
        r.cost = sel.cost;
        r.cumulative_cost = cumulative_;
        r.outcome = outcome;
        r.alive_before = before;
        r.alive = after;
        steps_.push_back(std::move(r));
        steps_.back().accuracy = accuracy();
        return steps_.back();
    }

    void apply(const TrialScore& sel, Phenotype outcome) {
        const Observation obs{sel.trial, outcome};
        const std::size_t before = space_.alive_count();
        try {
            prune(space_, *compiled_, obs, cfg_.workers, table_.get());
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::SpaceExhausted) throw;
            emit(to_json(record(sel, outcome, before, 0)));
            status_ = CampaignStatus::Exhausted;
            throw;
        }
        emit(to_json(record(sel, outcome, before, space_.alive_count())));
        if (space_.alive_count() <= 1) status_ = CampaignStatus::Done;
    }

    void replay(const StepRecord& rec) {
        if (is_terminal(status_))
            throw Error(ErrorKind::ReplayDivergence, "log continues after the campaign terminated");
        auto diverged = [&](const std::string& what) {
            throw Error(ErrorKind::ReplayDivergence, "step " + std::to_string(rec.step) + ": " + what);
        };
        auto sel = next_selection();
        if (!sel) diverged("the campaign stops here but the log has more steps");
        if (!(sel->trial == rec.trial))
            diverged("log records " + rec.trial.str() + " but selection yields " + sel->trial.str());
        if (oracle_ && oracle_->observe(rec.trial) != rec.outcome) diverged("outcome differs from the oracle");
        try {
            apply(*sel, rec.outcome);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::SpaceExhausted) throw;
        }
        const auto& got = steps_.back();
        if (!(got == rec)) diverged("recomputed record differs from the log");
    }

    CampaignConfig cfg_;
    EventSink sink_;
    // Shared so the plan's reference to the model survives moves.
    std::shared_ptr<const CompiledModel> compiled_;
    HypothesisSpace space_;
    std::vector<Trial> design_;
    std::shared_ptr<const PredictionTable> table_;  // ase only
    std::optional<Oracle> oracle_;
    std::shared_ptr<const BatchPlan> eval_plan_;
    std::vector<Phenotype> eval_truth_;
    bool eval_on_table_ = false;

    std::set<Trial> tried_;
    std::vector<StepRecord> steps_;
    Cost cumulative_;
    CampaignStatus status_ = CampaignStatus::Selecting;
    std::optional<TrialScore> pending_;
    std::optional<std::size_t> cached_rep_;
    double cached_accuracy_ = 0.0;
};

/// Runs until terminal (oracle mode) or until the first suggestion is
/// pending (external mode). SpaceExhausted propagates.
inline Campaign run_campaign(CampaignConfig cfg, EventSink sink = {}) {
    Campaign c(std::move(cfg), std::move(sink));
    c.run();
    return c;
}

}  // namespace gemlearn
