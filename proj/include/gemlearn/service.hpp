#pragma once

// HTTP/JSON front end for campaigns. State lives in event-log files under a
// data directory:
//
//   <data>/models/<name>.gem
//   <data>/environments/<name>.env
//   <data>/campaigns/<id>.jsonl
//
// Handlers are plain member functions returning (status, body) so they can
// be driven without a socket; mount() attaches them to an httplib server.

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "gemlearn/campaign.hpp"
#include "gemlearn/facts.hpp"
#include "gemlearn/selection.hpp"

namespace gemlearn {

struct ServiceResponse {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
};

namespace detail {

class HttpError : public std::runtime_error {
public:
    HttpError(int status, std::string code, const std::string& message)
        : std::runtime_error(message), status_(status), code_(std::move(code)) {}
    int status() const noexcept { return status_; }
    const std::string& code() const noexcept { return code_; }

private:
    int status_;
    std::string code_;
};

inline ServiceResponse json_response(int status, const Json& body) { return {status, body.dump(), "application/json"}; }

inline ServiceResponse error_response(int status, const std::string& code, const std::string& message) {
    return json_response(status, Json{{"error", code}, {"message", message}});
}

/// Appends newline-terminated records with one write(2) each, so a crash
/// leaves at most one partial trailing record.
class AppendFile {
public:
    AppendFile(const std::filesystem::path& path, bool create) {
        const int flags = O_WRONLY | O_APPEND | O_CLOEXEC | (create ? O_CREAT | O_EXCL : 0);
        fd_ = ::open(path.c_str(), flags, 0644);
        if (fd_ < 0) throw Error(ErrorKind::Io, "cannot open " + path.string() + ": " + std::strerror(errno));
    }
    AppendFile(const AppendFile&) = delete;
    AppendFile& operator=(const AppendFile&) = delete;
    ~AppendFile() {
        if (fd_ >= 0) ::close(fd_);
    }

    void append(const std::string& line) {
        const std::string record = line + '\n';
        std::size_t done = 0;
        while (done < record.size()) {
            const auto n = ::write(fd_, record.data() + done, record.size() - done);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw Error(ErrorKind::Io, std::string("log write failed: ") + std::strerror(errno));
            }
            done += static_cast<std::size_t>(n);
        }
    }

private:
    int fd_ = -1;
};

inline std::optional<Phenotype> parse_phenotype_loose(const std::string& s) {
    if (s == "growth" || s == "Growth") return Phenotype::Growth;
    if (s == "no_growth" || s == "NoGrowth") return Phenotype::NoGrowth;
    return std::nullopt;
}

inline Json trial_json(const Trial& t) {
    return Json{{"gene", std::string(t.knockout_token())}, {"medium", t.medium}, {"trial", t.str()}};
}

}  // namespace detail

class Service {
public:
    explicit Service(std::filesystem::path data_dir, unsigned workers = 1)
        : root_(std::move(data_dir)), workers_(workers) {
        for (const char* sub : {"models", "environments", "campaigns"}) std::filesystem::create_directories(root_ / sub);
        restore();
    }

    /// Campaign logs that could not be restored at startup, with the reason.
    const std::vector<std::string>& restore_errors() const noexcept { return restore_errors_; }

    ServiceResponse upload_model(const std::string& body, const std::string& name = {}) {
        return guarded([&] { return upload(body, name, "models", ".gem", true); });
    }

    ServiceResponse upload_environment(const std::string& body, const std::string& name = {}) {
        return guarded([&] { return upload(body, name, "environments", ".env", false); });
    }

    ServiceResponse create_campaign(const std::string& body) {
        return guarded([&] { return create(parse_body(body)); });
    }

    ServiceResponse list_campaigns() const {
        return guarded([&] {
            Json out = Json::array();
            std::shared_lock lock(registry_mutex_);
            for (const auto& [id, entry] : campaigns_) out.push_back(entry->snapshot()->summary);
            return detail::json_response(200, out);
        });
    }

    ServiceResponse get_campaign(const std::string& id) const {
        return guarded([&] { return ServiceResponse{200, find(id)->snapshot()->resource, "application/json"}; });
    }

    ServiceResponse list_hypotheses(const std::string& id) const {
        return guarded([&] { return ServiceResponse{200, find(id)->snapshot()->hypotheses, "application/json"}; });
    }

    ServiceResponse metrics(const std::string& id) const {
        return guarded([&] { return ServiceResponse{200, find(id)->snapshot()->metrics, "text/csv"}; });
    }

    ServiceResponse submit_outcome(const std::string& id, const std::string& body) {
        return guarded([&] { return submit(id, parse_body(body)); });
    }

    void mount(httplib::Server& server) {
        auto send = [](httplib::Response& res, const ServiceResponse& r) {
            res.status = r.status;
            res.set_content(r.body, r.content_type);
        };
        server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                    {"Access-Control-Allow-Headers", "Content-Type"},
                                    {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
        server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
        server.Post("/models", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, upload_model(req.body, req.get_param_value("name")));
        });
        server.Post("/environments", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, upload_environment(req.body, req.get_param_value("name")));
        });
        server.Post("/campaigns", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, create_campaign(req.body));
        });
        server.Get("/campaigns", [this, send](const httplib::Request&, httplib::Response& res) {
            send(res, list_campaigns());
        });
        server.Get(R"(/campaigns/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, get_campaign(req.matches[1]));
        });
        server.Post(R"(/campaigns/([^/]+)/outcome)",
                    [this, send](const httplib::Request& req, httplib::Response& res) {
                        send(res, submit_outcome(req.matches[1], req.body));
                    });
        server.Get(R"(/campaigns/([^/]+)/hypotheses)",
                   [this, send](const httplib::Request& req, httplib::Response& res) {
                       send(res, list_hypotheses(req.matches[1]));
                   });
        server.Get(R"(/campaigns/([^/]+)/metrics)", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, metrics(req.matches[1]));
        });
        server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
            if (!res.body.empty()) return;
            const auto r = detail::error_response(res.status, res.status == 404 ? "not_found" : "http_error",
                                                  "no route for " + req.method + " " + req.path);
            res.set_content(r.body, r.content_type);
        });
    }

private:
    struct Snapshot {
        Json summary;
        std::string resource;
        std::string hypotheses;
        std::string metrics;
    };

    struct Entry {
        std::string id, model_ref, env_ref;
        std::mutex write;  // serializes mutations of this campaign
        std::unique_ptr<detail::AppendFile> log;
        std::optional<Campaign> campaign;

        std::shared_ptr<const Snapshot> snapshot() const {
            std::lock_guard lock(snap_mutex);
            return snap;
        }
        void publish(std::shared_ptr<const Snapshot> s) {
            std::lock_guard lock(snap_mutex);
            snap = std::move(s);
        }

    private:
        mutable std::mutex snap_mutex;
        std::shared_ptr<const Snapshot> snap;
    };

    template <class F>
    static ServiceResponse guarded(F&& f) {
        try {
            return f();
        } catch (const detail::HttpError& e) {
            return detail::error_response(e.status(), e.code(), e.what());
        } catch (const Error& e) {
            const int status = e.kind() == ErrorKind::Io ? 500 : 400;
            return detail::error_response(status, to_string(e.kind()), e.what());
        } catch (const Json::exception& e) {
            return detail::error_response(400, "invalid_request", e.what());
        } catch (const std::exception& e) {
            return detail::error_response(500, "internal", e.what());
        }
    }

    static Json parse_body(const std::string& body) {
        Json j = Json::parse(body, nullptr, false);
        if (j.is_discarded() || !j.is_object())
            throw detail::HttpError(400, "invalid_request", "request body must be a JSON object");
        return j;
    }

    static void check_name(const std::string& name, const char* what) {
        if (!detail::is_identifier(name) || name.front() == '.')
            throw detail::HttpError(400, "invalid_request", std::string("invalid ") + what + " name '" + name + "'");
    }

    static std::optional<std::string> read_text(const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        if (!in) return std::nullopt;
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    /// Body is either {"name": ..., "content": ...} or the raw file with the
    /// name given separately (query parameter).
    ServiceResponse upload(const std::string& body, std::string name, const char* dir, const char* ext, bool model) {
        std::string content = body;
        const Json j = Json::parse(body, nullptr, false);
        if (!j.is_discarded() && j.is_object()) {
            name = j.at("name").get<std::string>();
            content = j.at("content").get<std::string>();
        }
        check_name(name, model ? "model" : "environment");
        std::string digest;
        if (model)
            digest = content_hash(serialize_model(parse_model(content)));
        else
            digest = content_hash(serialize_environment(parse_environment(content)));

        std::lock_guard lock(files_mutex_);
        const auto path = root_ / dir / (name + ext);
        if (auto existing = read_text(path)) {
            if (*existing != content)
                throw detail::HttpError(409, "conflict",
                                        std::string(model ? "model" : "environment") + " '" + name +
                                            "' already exists with different content");
            return detail::json_response(200, Json{{"name", name}, {"hash", digest}, {"created", false}});
        }
        const auto tmp = root_ / dir / ("." + name + ext + ".tmp");
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            out << content;
            if (!out) throw Error(ErrorKind::Io, "cannot write " + tmp.string());
        }
        std::filesystem::rename(tmp, path);
        return detail::json_response(201, Json{{"name", name}, {"hash", digest}, {"created", true}});
    }

    std::pair<MetabolicModel, Environment> load_refs(const std::string& model_ref, const std::string& env_ref) const {
        check_name(model_ref, "model");
        check_name(env_ref, "environment");
        auto model_text = read_text(root_ / "models" / (model_ref + ".gem"));
        if (!model_text) throw detail::HttpError(404, "model_not_found", "no model named '" + model_ref + "'");
        auto env_text = read_text(root_ / "environments" / (env_ref + ".env"));
        if (!env_text) throw detail::HttpError(404, "environment_not_found", "no environment named '" + env_ref + "'");
        return {parse_model(*model_text), parse_environment(*env_text)};
    }

    static std::vector<std::string> string_list(const Json& v) {
        if (v.is_string()) {
            std::vector<std::string> out;
            for (auto part : detail::split(v.get<std::string>(), ',')) out.emplace_back(detail::trim(part));
            return out;
        }
        return v.get<std::vector<std::string>>();
    }

    ServiceResponse create(const Json& req) {
        const auto model_ref = req.at("model").get<std::string>();
        const auto env_ref = req.at("environment").get<std::string>();
        auto [model, env] = load_refs(model_ref, env_ref);

        CampaignConfig cfg;
        cfg.model = std::move(model);
        cfg.env = std::move(env);
        cfg.workers = workers_;
        const auto mode = req.value("mode", std::string("external"));
        if (mode != "external" && mode != "oracle")
            throw detail::HttpError(400, "invalid_request", "mode must be 'external' or 'oracle'");
        cfg.external = mode == "external";
        std::optional<std::uint64_t> seed;
        if (req.contains("seed") && !req.at("seed").is_null()) seed = req.at("seed").get<std::uint64_t>();
        cfg.strategy = Strategy::parse(req.value("strategy", std::string("ase")), seed);
        if (req.contains("deleted_codes") && !req.at("deleted_codes").is_null()) {
            const auto& d = req.at("deleted_codes");
            std::vector<std::string> parts;
            if (d.is_string())
                parts.push_back(d.get<std::string>());
            else
                parts = d.get<std::vector<std::string>>();
            for (const auto& p : parts) {
                auto facts = Hypothesis::parse_facts(p);
                cfg.deleted_codes.insert(cfg.deleted_codes.end(), facts.begin(), facts.end());
            }
        }
        if (req.contains("budget") && !req.at("budget").is_null()) {
            const auto& b = req.at("budget");
            const std::string text = b.is_string() ? b.get<std::string>() : b.dump();
            cfg.budget.max_cost = Cost::parse(text);
            if (!cfg.budget.max_cost) throw detail::HttpError(400, "invalid_request", "invalid budget '" + text + "'");
        }
        if (req.contains("max_trials") && !req.at("max_trials").is_null())
            cfg.budget.max_trials = req.at("max_trials").get<std::size_t>();
        if (req.contains("enzyme_scope") && !req.at("enzyme_scope").is_null())
            cfg.enzyme_scope = string_list(req.at("enzyme_scope"));

        auto entry = std::make_shared<Entry>();
        entry->model_ref = model_ref;
        entry->env_ref = env_ref;
        {
            std::unique_lock lock(registry_mutex_);
            entry->id = next_id();
        }
        cfg.labels = Json{{"id", entry->id}, {"model", model_ref}, {"environment", env_ref}};
        const auto path = log_path(entry->id);
        try {
            entry->log = std::make_unique<detail::AppendFile>(path, true);
            auto* log = entry->log.get();
            entry->campaign.emplace(std::move(cfg), [log](const std::string& line) { log->append(line); });
        } catch (...) {
            entry->log.reset();
            std::error_code ec;
            std::filesystem::remove(path, ec);
            throw;
        }
        drive(*entry);
        publish(*entry);
        {
            std::unique_lock lock(registry_mutex_);
            campaigns_.emplace(entry->id, entry);
        }
        return ServiceResponse{201, entry->snapshot()->resource, "application/json"};
    }

    /// Oracle campaigns run to a terminal status; external ones stop at the
    /// first pending suggestion.
    static void drive(Entry& e) {
        try {
            e.campaign->run();
        } catch (const Error& err) {
            if (err.kind() != ErrorKind::SpaceExhausted) throw;
        }
    }

    ServiceResponse submit(const std::string& id, const Json& req) {
        auto entry = find(id);
        const auto phenotype_text = req.value("phenotype", req.value("outcome", std::string()));
        const auto phenotype = detail::parse_phenotype_loose(phenotype_text);
        if (!phenotype) throw detail::HttpError(422, "unknown_phenotype", "unknown phenotype '" + phenotype_text + "'");
        const Trial trial = trial_from_tokens(req.at("gene").get<std::string>(), req.at("medium").get<std::string>());

        std::lock_guard lock(entry->write);
        Campaign& c = *entry->campaign;
        if (req.contains("step") && !req.at("step").is_null()) {
            const auto step = req.at("step").get<std::size_t>();
            if (step >= 1 && step <= c.steps().size()) {
                const auto& done = c.steps()[step - 1];
                if (done.trial == trial && done.outcome == *phenotype) {
                    Json out = submit_payload(*entry, done);
                    out["duplicate"] = true;
                    return detail::json_response(200, out);
                }
                throw detail::HttpError(409, "stale_step", "step " + std::to_string(step) + " is already recorded");
            }
            if (step != c.steps().size() + 1 && !is_terminal(c.status()))
                throw detail::HttpError(409, "stale_step",
                                        "next step is " + std::to_string(c.steps().size() + 1) + ", got " +
                                            std::to_string(step));
        }
        if (is_terminal(c.status()))
            throw detail::HttpError(410, "campaign_terminal",
                                    "campaign " + id + " is " + to_string(c.status()) + "; no outcome is expected");
        if (!c.suggestion())
            throw detail::HttpError(409, "no_pending_suggestion", "campaign " + id + " has no pending suggestion");
        if (!(c.suggestion()->trial == trial))
            throw detail::HttpError(409, "trial_mismatch",
                                    "outcome is for " + trial.str() + " but the pending suggestion is " +
                                        c.suggestion()->trial.str());
        try {
            c.submit(trial, *phenotype);
        } catch (const Error& err) {
            if (err.kind() != ErrorKind::SpaceExhausted) throw;
        }
        publish(*entry);
        return detail::json_response(200, submit_payload(*entry, c.steps().back()));
    }

    Json submit_payload(const Entry& e, const StepRecord& rec) const {
        return Json{{"campaign", Json::parse(e.snapshot()->resource)},
                    {"record", to_json(rec)},
                    {"alive_before", rec.alive_before},
                    {"alive_after", rec.alive}};
    }

    std::shared_ptr<Entry> find(const std::string& id) const {
        std::shared_lock lock(registry_mutex_);
        auto it = campaigns_.find(id);
        if (it == campaigns_.end()) throw detail::HttpError(404, "campaign_not_found", "no campaign '" + id + "'");
        return it->second;
    }

    std::filesystem::path log_path(const std::string& id) const { return root_ / "campaigns" / (id + ".jsonl"); }

    // Caller holds registry_mutex_ exclusively.
    std::string next_id() {
        ++last_id_;
        std::string digits = std::to_string(last_id_);
        if (digits.size() < 6) digits.insert(0, 6 - digits.size(), '0');
        return "c" + digits;
    }

    Json resource_json(const Entry& e) const {
        const Campaign& c = *e.campaign;
        const auto& cfg = c.config();
        Json deleted = Json::array();
        for (const auto& f : cfg.deleted_codes) deleted.push_back(Hypothesis::fact_id(f));
        Json config{{"model", e.model_ref},
                    {"environment", e.env_ref},
                    {"mode", cfg.external ? "external" : "oracle"},
                    {"strategy", to_string(cfg.strategy.kind)},
                    {"seed", cfg.strategy.seed ? Json(*cfg.strategy.seed) : Json(nullptr)},
                    {"budget_cost", cfg.budget.max_cost ? Json(cfg.budget.max_cost->str()) : Json(nullptr)},
                    {"budget_trials", cfg.budget.max_trials ? Json(*cfg.budget.max_trials) : Json(nullptr)},
                    {"enzyme_scope", cfg.enzyme_scope ? Json(*cfg.enzyme_scope) : Json(nullptr)},
                    {"deleted_codes", deleted}};
        Json suggestion = nullptr;
        if (c.suggestion()) {
            const auto& s = *c.suggestion();
            suggestion = detail::trial_json(s.trial);
            suggestion["cost"] = s.cost.str();
            suggestion["eig_bits"] = s.eig_bits;
            suggestion["step"] = c.steps().size() + 1;
            Json recipe = Json::array();
            if (const Medium* m = cfg.env.find_medium(s.trial.medium))
                for (const auto& met : m->metabolites) {
                    auto it = cfg.env.prices.find(met);
                    recipe.push_back({{"metabolite", met},
                                      {"price", it == cfg.env.prices.end() ? Json(nullptr) : Json(it->second.str())}});
                }
            suggestion["medium_recipe"] = recipe;
            suggestion["base_cost"] = cfg.env.base_cost.str();
        }
        Json steps = Json::array();
        for (const auto& r : c.steps()) steps.push_back(to_json(r));
        const Hypothesis* rep = c.recovered_hypothesis();
        return Json{{"id", e.id},
                    {"status", to_string(c.status())},
                    {"config", config},
                    {"candidate_count", c.space().size()},
                    {"alive_count", c.space().alive_count()},
                    {"step", c.steps().size()},
                    {"cumulative_cost", c.cumulative_cost().str()},
                    {"accuracy", c.steps().empty() ? Json(nullptr) : Json(c.steps().back().accuracy)},
                    {"suggestion", suggestion},
                    {"recovered_hypothesis",
                     rep && is_terminal(c.status()) ? Json(rep->id()) : Json(nullptr)},
                    {"steps", steps}};
    }

    static Json hypotheses_json(const Campaign& c) {
        std::map<Trial, std::size_t> step_of;
        for (const auto& r : c.steps()) step_of.emplace(r.trial, r.step);
        const auto& space = c.space();
        Json alive = Json::array();
        std::vector<std::pair<std::size_t, Json>> refuted;
        for (std::size_t i = 0; i < space.size(); ++i) {
            const auto& h = space.candidates()[i];
            Json facts = Json::array();
            for (const auto& [g, e] : h.facts()) facts.push_back({g, e});
            if (space.alive(i)) {
                alive.push_back({{"id", h.id()}, {"facts", facts}});
                continue;
            }
            const auto& obs = *space.refuted_by(i);
            auto it = step_of.find(obs.trial);
            const std::size_t step = it == step_of.end() ? 0 : it->second;
            Json by = detail::trial_json(obs.trial);
            by["phenotype"] = to_string(obs.phenotype);
            by["step"] = step;
            refuted.emplace_back(step, Json{{"id", h.id()}, {"facts", facts}, {"refuted_by", by}});
        }
        std::stable_sort(refuted.begin(), refuted.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        Json dead = Json::array();
        for (auto& [step, j] : refuted) dead.push_back(std::move(j));
        return Json{{"alive_count", alive.size()}, {"alive", alive}, {"refuted", dead}};
    }

    void publish(Entry& e) const {
        auto snap = std::make_shared<Snapshot>();
        const Json resource = resource_json(e);
        snap->resource = resource.dump();
        snap->summary = Json{{"id", e.id},
                             {"status", resource["status"]},
                             {"model", e.model_ref},
                             {"environment", e.env_ref},
                             {"strategy", resource["config"]["strategy"]},
                             {"mode", resource["config"]["mode"]},
                             {"step", resource["step"]},
                             {"alive_count", resource["alive_count"]},
                             {"cumulative_cost", resource["cumulative_cost"]}};
        snap->hypotheses = hypotheses_json(*e.campaign).dump();
        snap->metrics = e.campaign->metrics_csv();
        e.publish(std::move(snap));
    }

    /// Rebuilds every campaign from its log.
    void restore() {
        std::vector<std::filesystem::path> logs;
        for (const auto& de : std::filesystem::directory_iterator(root_ / "campaigns"))
            if (de.is_regular_file() && de.path().extension() == ".jsonl") logs.push_back(de.path());
        std::sort(logs.begin(), logs.end());
        for (const auto& path : logs) {
            const auto id = path.stem().string();
            try {
                const auto text = read_text(path).value_or("");
                const auto parsed = parse_log(text);
                const auto& labels = parsed.header.at("labels");
                auto entry = std::make_shared<Entry>();
                entry->id = id;
                entry->model_ref = labels.at("model").get<std::string>();
                entry->env_ref = labels.at("environment").get<std::string>();
                auto [model, env] = load_refs(entry->model_ref, entry->env_ref);
                auto cfg = config_from_header(parsed.header, std::move(model), std::move(env), workers_);
                entry->log = std::make_unique<detail::AppendFile>(path, false);
                auto* log = entry->log.get();
                entry->campaign.emplace(
                    Campaign::load(std::move(cfg), text, [log](const std::string& line) { log->append(line); }));
                drive(*entry);
                publish(*entry);
                campaigns_.emplace(id, entry);
            } catch (const std::exception& e) {
                restore_errors_.push_back(id + ": " + e.what());
            }
            if (id.size() == 7 && id[0] == 'c' && std::all_of(id.begin() + 1, id.end(), ::isdigit))
                last_id_ = std::max<std::uint64_t>(last_id_, std::stoull(id.substr(1)));
        }
    }

    std::filesystem::path root_;
    unsigned workers_;
    mutable std::shared_mutex registry_mutex_;
    std::map<std::string, std::shared_ptr<Entry>> campaigns_;
    std::uint64_t last_id_ = 0;
    std::mutex files_mutex_;
    std::vector<std::string> restore_errors_;
};

}  // namespace gemlearn
