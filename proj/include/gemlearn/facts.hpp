#pragma once

// Logical fact model: genes, enzymes, metabolites, codes/2 facts and
// reactions, plus growth media with nutrient prices and phenotype
// observations. All parsers are pure and return fully validated values or
// throw gemlearn::Error.

#include <algorithm>
#include <compare>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gemlearn/cost.hpp"
#include "gemlearn/error.hpp"

namespace gemlearn {

/// Sentinel used in place of a gene id for wild-type trials.
inline constexpr std::string_view kWildType = "WT";

enum class Phenotype : unsigned char { NoGrowth = 0, Growth = 1 };

inline const char* to_string(Phenotype p) noexcept {
    return p == Phenotype::Growth ? "growth" : "no_growth";
}

inline std::optional<Phenotype> parse_phenotype(std::string_view s) {
    if (s == "growth") return Phenotype::Growth;
    if (s == "no_growth") return Phenotype::NoGrowth;
    return std::nullopt;
}

using GeneEnzyme = std::pair<std::string, std::string>;

struct Reaction {
    std::string id;
    std::vector<std::string> enzymes;  // empty => spontaneous
    std::vector<std::string> substrates;
    std::vector<std::string> products;
    bool reversible = false;

    friend bool operator==(const Reaction&, const Reaction&) = default;
};

struct MetabolicModel {
    std::vector<std::string> metabolites;
    std::vector<std::string> genes;
    std::vector<std::string> enzymes;
    std::vector<GeneEnzyme> codes;
    std::vector<Reaction> reactions;
    std::vector<std::string> essential;

    bool has_codes(const std::string& gene, const std::string& enzyme) const {
        return std::find(codes.begin(), codes.end(), GeneEnzyme{gene, enzyme}) != codes.end();
    }

    friend bool operator==(const MetabolicModel&, const MetabolicModel&) = default;
};

struct Medium {
    std::string id;
    std::vector<std::string> metabolites;

    friend bool operator==(const Medium&, const Medium&) = default;
};

struct Environment {
    std::vector<Medium> media;  // declaration order
    std::map<std::string, Cost> prices;
    Cost base_cost;

    const Medium* find_medium(std::string_view id) const {
        for (const auto& m : media)
            if (m.id == id) return &m;
        return nullptr;
    }

    friend bool operator==(const Environment&, const Environment&) = default;
};

struct Trial {
    std::optional<std::string> knockout;  // nullopt => wild-type
    std::string medium;

    static Trial wild_type(std::string medium) { return Trial{std::nullopt, std::move(medium)}; }
    static Trial deletion(std::string gene, std::string medium) {
        return Trial{std::move(gene), std::move(medium)};
    }

    bool is_wild_type() const noexcept { return !knockout.has_value(); }
    std::string_view knockout_token() const noexcept {
        return knockout ? std::string_view(*knockout) : kWildType;
    }
    std::string str() const {
        return (knockout ? "d" + *knockout : std::string(kWildType)) + "@" + medium;
    }

    friend bool operator==(const Trial&, const Trial&) = default;
    /// Lexicographic on (knockout token, medium).
    friend std::strong_ordering operator<=>(const Trial& a, const Trial& b) {
        if (auto c = a.knockout_token() <=> b.knockout_token(); c != 0) return c;
        return a.medium <=> b.medium;
    }
};

struct Observation {
    Trial trial;
    Phenotype phenotype = Phenotype::NoGrowth;

    friend bool operator==(const Observation&, const Observation&) = default;
};

namespace detail {

inline bool is_identifier(std::string_view s) {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
        return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
               c == '_' || c == '.' || c == '-';
    });
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(sep, start);
        out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

/// Splits content into lines, strips comments, tokenizes on whitespace.
/// Calls f(line_no, tokens) for non-blank lines.
template <class F>
void for_each_fact_line(std::string_view text, F&& f) {
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto end = text.find('\n', start);
        std::string_view line = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        std::vector<std::string_view> tokens;
        std::size_t i = 0;
        while (i < line.size()) {
            while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
            const std::size_t b = i;
            while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
            if (i > b) tokens.push_back(line.substr(b, i - b));
        }
        if (!tokens.empty()) f(line_no, tokens);
        if (end == std::string_view::npos) break;
        start = end + 1;
    }
}

inline std::string require_id(std::string_view tok, std::size_t line) {
    if (!is_identifier(tok))
        throw Error(ErrorKind::Syntax, "invalid identifier '" + std::string(tok) + "'", line);
    return std::string(tok);
}

/// Comma list with `-` meaning empty.
inline std::vector<std::string> parse_id_list(std::string_view value, std::size_t line, std::string_view what) {
    std::vector<std::string> out;
    if (value == "-") return out;
    if (value.empty()) throw Error(ErrorKind::Syntax, "empty " + std::string(what) + " list (use '-')", line);
    for (auto part : split(value, ',')) {
        auto id = require_id(part, line);
        if (std::find(out.begin(), out.end(), id) != out.end())
            throw Error(ErrorKind::Duplicate, "duplicate '" + id + "' in " + std::string(what) + " list", line);
        out.push_back(std::move(id));
    }
    return out;
}

inline std::string join(const std::vector<std::string>& v, std::string_view sep, std::string_view empty = "-") {
    if (v.empty()) return std::string(empty);
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += sep;
        out += v[i];
    }
    return out;
}

class DeclSet {
public:
    explicit DeclSet(const char* kind) : kind_(kind) {}
    void declare(const std::string& id, std::size_t line) {
        if (!seen_.insert(id).second)
            throw Error(ErrorKind::Duplicate, std::string(kind_) + " '" + id + "' declared twice", line);
    }
    void require(const std::string& id, std::size_t line) const {
        if (!seen_.count(id))
            throw Error(ErrorKind::Undeclared, "undeclared " + std::string(kind_) + " '" + id + "'", line);
    }
    bool contains(const std::string& id) const { return seen_.count(id) != 0; }

private:
    const char* kind_;
    std::unordered_set<std::string> seen_;
};

}  // namespace detail

/// Parses a `.gem` fact file. Identifiers may be referenced before they are
/// declared; references are checked once the whole file has been read.
inline MetabolicModel parse_model(std::string_view text) {
    MetabolicModel model;
    detail::DeclSet metabolites("metabolite"), genes("gene"), enzymes("enzyme"), reactions("reaction");
    std::set<GeneEnzyme> codes_seen;
    std::unordered_set<std::string> essential_seen;
    std::vector<std::size_t> codes_lines, reaction_lines, essential_lines;

    detail::for_each_fact_line(text, [&](std::size_t line, const std::vector<std::string_view>& tok) {
        const auto kw = tok[0];
        auto arity = [&](std::size_t n) {
            if (tok.size() != n)
                throw Error(ErrorKind::Syntax,
                            "'" + std::string(kw) + "' expects " + std::to_string(n - 1) + " argument(s)", line);
        };
        if (kw == "metabolite") {
            arity(2);
            auto id = detail::require_id(tok[1], line);
            metabolites.declare(id, line);
            model.metabolites.push_back(std::move(id));
        } else if (kw == "gene") {
            arity(2);
            auto id = detail::require_id(tok[1], line);
            if (id == kWildType)
                throw Error(ErrorKind::Validation, "gene id 'WT' is reserved for wild-type", line);
            genes.declare(id, line);
            model.genes.push_back(std::move(id));
        } else if (kw == "enzyme") {
            arity(2);
            auto id = detail::require_id(tok[1], line);
            enzymes.declare(id, line);
            model.enzymes.push_back(std::move(id));
        } else if (kw == "essential") {
            arity(2);
            auto id = detail::require_id(tok[1], line);
            if (!essential_seen.insert(id).second)
                throw Error(ErrorKind::Duplicate, "essential '" + id + "' declared twice", line);
            model.essential.push_back(std::move(id));
            essential_lines.push_back(line);
        } else if (kw == "codes") {
            arity(3);
            GeneEnzyme ge{detail::require_id(tok[1], line), detail::require_id(tok[2], line)};
            if (!codes_seen.insert(ge).second)
                throw Error(ErrorKind::Duplicate, "duplicate codes(" + ge.first + "," + ge.second + ")", line);
            model.codes.push_back(std::move(ge));
            codes_lines.push_back(line);
        } else if (kw == "reaction") {
            arity(6);
            Reaction r;
            r.id = detail::require_id(tok[1], line);
            reactions.declare(r.id, line);
            bool have_rev = false, have_enz = false, have_sub = false, have_prod = false;
            for (std::size_t i = 2; i < tok.size(); ++i) {
                const auto eq = tok[i].find('=');
                if (eq == std::string_view::npos)
                    throw Error(ErrorKind::Syntax, "expected key=value, got '" + std::string(tok[i]) + "'", line);
                const auto key = tok[i].substr(0, eq);
                const auto value = tok[i].substr(eq + 1);
                auto once = [&](bool& flag) {
                    if (flag) throw Error(ErrorKind::Syntax, "repeated field '" + std::string(key) + "'", line);
                    flag = true;
                };
                if (key == "rev") {
                    once(have_rev);
                    if (value != "0" && value != "1")
                        throw Error(ErrorKind::Syntax, "rev must be 0 or 1", line);
                    r.reversible = value == "1";
                } else if (key == "enz") {
                    once(have_enz);
                    r.enzymes = detail::parse_id_list(value, line, "enzyme");
                } else if (key == "sub") {
                    once(have_sub);
                    r.substrates = detail::parse_id_list(value, line, "substrate");
                } else if (key == "prod") {
                    once(have_prod);
                    r.products = detail::parse_id_list(value, line, "product");
                } else {
                    throw Error(ErrorKind::Syntax, "unknown reaction field '" + std::string(key) + "'", line);
                }
            }
            if (r.substrates.empty() && r.products.empty())
                throw Error(ErrorKind::Validation, "reaction '" + r.id + "' has no substrates or products", line);
            for (const auto& s : r.substrates)
                if (std::find(r.products.begin(), r.products.end(), s) != r.products.end())
                    throw Error(ErrorKind::Validation,
                                "reaction '" + r.id + "' lists '" + s + "' as both substrate and product", line);
            model.reactions.push_back(std::move(r));
            reaction_lines.push_back(line);
        } else {
            throw Error(ErrorKind::Syntax, "unknown fact '" + std::string(kw) + "'", line);
        }
    });

    for (std::size_t i = 0; i < model.codes.size(); ++i) {
        genes.require(model.codes[i].first, codes_lines[i]);
        enzymes.require(model.codes[i].second, codes_lines[i]);
    }
    for (std::size_t i = 0; i < model.reactions.size(); ++i) {
        const auto& r = model.reactions[i];
        for (const auto& e : r.enzymes) enzymes.require(e, reaction_lines[i]);
        for (const auto& m : r.substrates) metabolites.require(m, reaction_lines[i]);
        for (const auto& m : r.products) metabolites.require(m, reaction_lines[i]);
    }
    for (std::size_t i = 0; i < model.essential.size(); ++i)
        metabolites.require(model.essential[i], essential_lines[i]);
    return model;
}

/// Writes a model back in fact-file form; parse_model(serialize_model(m)) == m.
inline std::string serialize_model(const MetabolicModel& model) {
    std::ostringstream out;
    for (const auto& m : model.metabolites) out << "metabolite " << m << '\n';
    for (const auto& g : model.genes) out << "gene " << g << '\n';
    for (const auto& e : model.enzymes) out << "enzyme " << e << '\n';
    for (const auto& [g, e] : model.codes) out << "codes " << g << ' ' << e << '\n';
    for (const auto& r : model.reactions) {
        out << "reaction " << r.id << " rev=" << (r.reversible ? 1 : 0) << " enz=" << detail::join(r.enzymes, ",")
            << " sub=" << detail::join(r.substrates, ",") << " prod=" << detail::join(r.products, ",") << '\n';
    }
    for (const auto& m : model.essential) out << "essential " << m << '\n';
    return out.str();
}

inline Environment parse_environment(std::string_view text) {
    Environment env;
    bool have_base = false;
    std::vector<std::size_t> medium_lines;
    detail::DeclSet media("medium");

    auto parse_cost = [](std::string_view tok, std::size_t line) {
        auto c = Cost::parse(tok);
        if (!c) throw Error(ErrorKind::Syntax, "invalid amount '" + std::string(tok) + "'", line);
        if (c->cents() < 0) throw Error(ErrorKind::Validation, "negative amount " + std::string(tok), line);
        return *c;
    };

    detail::for_each_fact_line(text, [&](std::size_t line, const std::vector<std::string_view>& tok) {
        const auto kw = tok[0];
        if (kw == "base_cost") {
            if (tok.size() != 2) throw Error(ErrorKind::Syntax, "'base_cost' expects 1 argument", line);
            if (have_base) throw Error(ErrorKind::Duplicate, "base_cost declared twice", line);
            have_base = true;
            env.base_cost = parse_cost(tok[1], line);
        } else if (kw == "price") {
            if (tok.size() != 3) throw Error(ErrorKind::Syntax, "'price' expects 2 arguments", line);
            auto id = detail::require_id(tok[1], line);
            const auto cost = parse_cost(tok[2], line);
            if (!env.prices.emplace(id, cost).second)
                throw Error(ErrorKind::Duplicate, "price for '" + id + "' declared twice", line);
        } else if (kw == "medium") {
            if (tok.size() != 3) throw Error(ErrorKind::Syntax, "'medium' expects 2 arguments", line);
            Medium m;
            m.id = detail::require_id(tok[1], line);
            media.declare(m.id, line);
            m.metabolites = detail::parse_id_list(tok[2], line, "medium");
            env.media.push_back(std::move(m));
            medium_lines.push_back(line);
        } else {
            throw Error(ErrorKind::Syntax, "unknown directive '" + std::string(kw) + "'", line);
        }
    });

    for (std::size_t i = 0; i < env.media.size(); ++i)
        for (const auto& m : env.media[i].metabolites)
            if (!env.prices.count(m))
                throw Error(ErrorKind::Validation,
                            "medium '" + env.media[i].id + "' uses unpriced metabolite '" + m + "'", medium_lines[i]);
    return env;
}

inline std::string serialize_environment(const Environment& env) {
    std::ostringstream out;
    out << "base_cost " << env.base_cost.str() << '\n';
    for (const auto& [m, c] : env.prices) out << "price " << m << ' ' << c.str() << '\n';
    for (const auto& m : env.media) out << "medium " << m.id << ' ' << detail::join(m.metabolites, ",") << '\n';
    return out.str();
}

/// Checks a trial's identifiers against a model and environment.
inline void validate_trial(const Trial& t, const MetabolicModel& model, const Environment& env, std::size_t line = 0) {
    if (t.knockout && std::find(model.genes.begin(), model.genes.end(), *t.knockout) == model.genes.end())
        throw Error(ErrorKind::Undeclared, "unknown gene '" + *t.knockout + "'", line);
    if (!env.find_medium(t.medium)) throw Error(ErrorKind::UnknownMedium, "unknown medium '" + t.medium + "'", line);
}

inline Trial trial_from_tokens(std::string_view gene, std::string_view medium) {
    if (gene == kWildType) return Trial::wild_type(std::string(medium));
    return Trial::deletion(std::string(gene), std::string(medium));
}

/// Parses a `gene,medium,phenotype` CSV. Line numbers in errors count the
/// header as line 1.
inline std::vector<Observation> parse_observations(std::string_view text, const MetabolicModel& model,
                                                   const Environment& env) {
    std::vector<Observation> out;
    bool header = false;
    std::size_t line_no = 0;
    for (auto raw : detail::split(text, '\n')) {
        ++line_no;
        const auto line = detail::trim(raw);
        if (line.empty()) continue;
        const auto fields = detail::split(line, ',');
        if (!header) {
            if (fields.size() != 3 || detail::trim(fields[0]) != "gene" || detail::trim(fields[1]) != "medium" ||
                detail::trim(fields[2]) != "phenotype")
                throw Error(ErrorKind::Syntax, "expected header 'gene,medium,phenotype'", line_no);
            header = true;
            continue;
        }
        if (fields.size() != 3) throw Error(ErrorKind::Syntax, "malformed row: expected 3 fields", line_no);
        const auto gene = detail::trim(fields[0]);
        const auto medium = detail::trim(fields[1]);
        const auto label = detail::trim(fields[2]);
        if (!detail::is_identifier(gene) || !detail::is_identifier(medium))
            throw Error(ErrorKind::Syntax, "malformed row: invalid identifier", line_no);
        const auto phenotype = parse_phenotype(label);
        if (!phenotype)
            throw Error(ErrorKind::Validation, "unknown phenotype label '" + std::string(label) + "'", line_no);
        Observation obs{trial_from_tokens(gene, medium), *phenotype};
        validate_trial(obs.trial, model, env, line_no);
        out.push_back(std::move(obs));
    }
    if (!header && !out.empty()) throw Error(ErrorKind::Syntax, "missing header");
    return out;
}

inline std::string serialize_observations(const std::vector<Observation>& obs) {
    std::string out = "gene,medium,phenotype\n";
    for (const auto& o : obs) {
        out += o.trial.knockout_token();
        out += ',';
        out += o.trial.medium;
        out += ',';
        out += to_string(o.phenotype);
        out += '\n';
    }
    return out;
}

}  // namespace gemlearn
