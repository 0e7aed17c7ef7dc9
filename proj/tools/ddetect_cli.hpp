#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <unistd.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "ddetect/decision_rules.hpp"
#include "ddetect/exponents.hpp"
#include "ddetect/grid_oracle.hpp"
#include "ddetect/proportion_optimizer.hpp"
#include "ddetect/simulator.hpp"

namespace ddetect::cli {

using nlohmann::json;

enum ExitCode : int { kOk = 0, kConfigError = 1, kNotConverged = 2 };

/// Invalid configuration; the message starts with the offending field path.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& path, const std::string& what)
        : std::runtime_error(path.empty() ? what : path + ": " + what) {}
};

struct SimulationBlock {
    std::int64_t n = 0;
    std::int64_t trials = 0;
    std::uint64_t seed = 0;
    std::optional<std::size_t> truth;  // 0-based
    std::string test;
    std::optional<std::vector<double>> other;
};

struct OracleBlock {
    std::size_t instances = 10;
    std::uint64_t seed = 1;
    double grid_resolution = 1e-4;
    double tolerance = 2e-3;
};

struct RunConfig {
    std::vector<Distribution> distributions;
    std::vector<Channel> channels;
    std::vector<double> a;
    std::vector<double> b;
    std::vector<double> alphas;
    std::vector<double> lambdas;
    bool vi_assumption = false;
    ThresholdMode::Kind threshold = ThresholdMode::Kind::adjusted;
    double resolution = 0.05;
    std::string selector;  // empty: command default
    std::size_t hypothesis = 0;
    std::optional<SimulationBlock> simulation;
    std::optional<OracleBlock> oracle;
    std::string output;
    json effective;  // the parsed document with command-line overrides applied

    [[nodiscard]] bool has_instance() const { return !distributions.empty(); }
    [[nodiscard]] std::size_t m() const { return distributions.size(); }
    [[nodiscard]] double alpha() const { return alphas.front(); }
    [[nodiscard]] double lambda() const { return lambdas.front(); }

    [[nodiscard]] BinaryInstance binary() const {
        require_instance();
        if (m() != 2) throw ConfigError("distributions", "this command needs exactly two hypotheses");
        return {distributions[0], distributions[1], ChannelBank(channels), Proportions(a), Proportions(b), alpha(),
                lambda()};
    }
    [[nodiscard]] MaryInstance mary() const {
        require_instance();
        return {distributions, ChannelBank(channels), Proportions(a), Proportions(b), alpha(), lambda()};
    }
    void require_instance() const {
        if (!has_instance()) throw ConfigError("distributions", "missing (this command needs an instance)");
    }
};

struct Overrides {
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> threshold;
    std::optional<double> resolution;
};

namespace detail {

inline std::string at(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }
inline std::string at(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

inline void only_keys(const json& j, const std::string& path, const std::set<std::string>& allowed) {
    if (!j.is_object()) throw ConfigError(path, "expected an object");
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) throw ConfigError(at(path, k), "unknown key");
}

inline double number(const json& j, const std::string& path) {
    if (!j.is_number()) throw ConfigError(path, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) throw ConfigError(path, "expected a finite number");
    return v;
}

inline double positive(const json& j, const std::string& path) {
    const double v = number(j, path);
    if (!(v > 0.0)) throw ConfigError(path, "must be positive");
    return v;
}

inline std::uint64_t unsigned_int(const json& j, const std::string& path) {
    if (!j.is_number_integer() || (!j.is_number_unsigned() && j.get<std::int64_t>() < 0))
        throw ConfigError(path, "expected a nonnegative integer");
    return j.get<std::uint64_t>();
}

inline std::vector<double> simplex(const json& j, const std::string& path, std::size_t min_size = 1) {
    if (!j.is_array() || j.empty()) throw ConfigError(path, "expected a nonempty array of probabilities");
    std::vector<double> v;
    double s = 0.0;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const double x = number(j[i], at(path, i));
        if (x < 0.0) throw ConfigError(at(path, i), "probability must be nonnegative");
        v.push_back(x);
        s += x;
    }
    if (std::abs(s - 1.0) > kRenormalizeTol) {
        std::ostringstream os;
        os.precision(12);
        os << "entries must sum to 1 (sum = " << s << ")";
        throw ConfigError(path, os.str());
    }
    if (v.size() < min_size) throw ConfigError(path, "needs at least " + std::to_string(min_size) + " entries");
    return v;
}

inline std::vector<double> number_or_list(const json& j, const std::string& path) {
    std::vector<double> v;
    if (j.is_array()) {
        if (j.empty()) throw ConfigError(path, "empty list");
        for (std::size_t i = 0; i < j.size(); ++i) v.push_back(positive(j[i], at(path, i)));
    } else {
        v.push_back(positive(j, path));
    }
    return v;
}

inline std::string string_of(const json& j, const std::string& path, const std::set<std::string>& choices) {
    if (!j.is_string()) throw ConfigError(path, "expected a string");
    const std::string s = j.get<std::string>();
    if (!choices.count(s)) {
        std::string list;
        for (const auto& c : choices) list += (list.empty() ? "" : ", ") + c;
        throw ConfigError(path, "'" + s + "' is not one of {" + list + "}");
    }
    return s;
}

inline ThresholdMode::Kind threshold_kind(const std::string& s) {
    return s == "raw" ? ThresholdMode::Kind::raw : ThresholdMode::Kind::adjusted;
}

inline const std::set<std::string>& selectors() {
    static const std::set<std::string> s{"f_alpha", "f_alpha_vi", "f_infinity", "rejection", "f_infinity_j"};
    return s;
}

inline const std::set<std::string>& simulation_tests() {
    static const std::set<std::string> s{"binary", "gutman", "vi", "unnikrishnan"};
    return s;
}

inline SimulationBlock parse_simulation(const json& j, const std::string& path, std::size_t m, std::size_t inputs) {
    only_keys(j, path, {"n", "trials", "seed", "truth", "test", "other"});
    SimulationBlock s;
    for (const char* k : {"n", "trials"})
        if (!j.contains(k)) throw ConfigError(at(path, k), "missing");
    s.n = static_cast<std::int64_t>(unsigned_int(j["n"], at(path, "n")));
    if (s.n < 1) throw ConfigError(at(path, "n"), "must be at least 1");
    s.trials = static_cast<std::int64_t>(unsigned_int(j["trials"], at(path, "trials")));
    if (s.trials < 1) throw ConfigError(at(path, "trials"), "must be at least 1");
    if (j.contains("seed")) s.seed = unsigned_int(j["seed"], at(path, "seed"));
    if (j.contains("truth")) {
        const std::uint64_t t = unsigned_int(j["truth"], at(path, "truth"));
        if (t < 1 || t > m) throw ConfigError(at(path, "truth"), "must be a hypothesis label in 1.." + std::to_string(m));
        s.truth = static_cast<std::size_t>(t - 1);
    }
    if (j.contains("other")) {
        if (s.truth) throw ConfigError(at(path, "other"), "cannot be combined with truth");
        s.other = simplex(j["other"], at(path, "other"), 2);
        if (s.other->size() != inputs) throw ConfigError(at(path, "other"), "size must match the channel input alphabet");
    }
    s.test = j.contains("test") ? string_of(j["test"], at(path, "test"), simulation_tests()) : (m == 2 ? "binary" : "unnikrishnan");
    if (s.test != "unnikrishnan" && m != 2) throw ConfigError(at(path, "test"), "'" + s.test + "' needs exactly two hypotheses");
    return s;
}

inline OracleBlock parse_oracle(const json& j, const std::string& path) {
    only_keys(j, path, {"instances", "seed", "grid_resolution", "tolerance"});
    OracleBlock o;
    if (j.contains("instances")) o.instances = static_cast<std::size_t>(unsigned_int(j["instances"], at(path, "instances")));
    if (j.contains("seed")) o.seed = unsigned_int(j["seed"], at(path, "seed"));
    if (j.contains("grid_resolution")) o.grid_resolution = positive(j["grid_resolution"], at(path, "grid_resolution"));
    if (j.contains("tolerance")) o.tolerance = positive(j["tolerance"], at(path, "tolerance"));
    return o;
}

}  // namespace detail

/// Validates a JSON document (after overrides) into a RunConfig.
inline RunConfig parse_config(json j, const Overrides& ov = {}) {
    using namespace detail;
    if (!j.is_object()) throw ConfigError("", "the configuration must be a JSON object");
    only_keys(j, "", {"distributions", "channels", "a", "b", "alpha", "lambda", "m", "vi_assumption", "threshold",
                      "resolution", "selector", "hypothesis", "simulation", "oracle", "output"});
    if (ov.threshold) j["threshold"] = *ov.threshold;
    if (ov.resolution) j["resolution"] = *ov.resolution;
    if (ov.out) j["output"] = *ov.out;
    if (ov.seed) {
        if (j.contains("simulation") && j["simulation"].is_object()) j["simulation"]["seed"] = *ov.seed;
        if (j.contains("oracle") && j["oracle"].is_object()) j["oracle"]["seed"] = *ov.seed;
    }

    RunConfig c;
    const bool instance = j.contains("distributions");
    if (instance) {
        const json& d = j["distributions"];
        if (!d.is_array() || d.size() < 2) throw ConfigError("distributions", "expected an array of at least two distributions");
        for (std::size_t i = 0; i < d.size(); ++i)
            c.distributions.emplace_back(simplex(d[i], at("distributions", i), 2));
        for (std::size_t i = 1; i < d.size(); ++i)
            if (c.distributions[i].size() != c.distributions[0].size())
                throw ConfigError(at("distributions", i), "alphabet size differs from distributions[0]");
        if (j.contains("m")) {
            const std::uint64_t m = unsigned_int(j["m"], "m");
            if (m != c.m()) throw ConfigError("m", "does not match the number of distributions (" + std::to_string(c.m()) + ")");
        }

        if (!j.contains("channels")) throw ConfigError("channels", "missing");
        const json& ch = j["channels"];
        if (!ch.is_array() || ch.empty()) throw ConfigError("channels", "expected a nonempty array of channel matrices");
        for (std::size_t k = 0; k < ch.size(); ++k) {
            const std::string pk = at("channels", k);
            if (!ch[k].is_array() || ch[k].empty()) throw ConfigError(pk, "expected an array of rows");
            if (ch[k].size() != c.distributions[0].size())
                throw ConfigError(pk, "needs one row per input symbol (" + std::to_string(c.distributions[0].size()) + ")");
            std::vector<std::vector<double>> rows;
            for (std::size_t x = 0; x < ch[k].size(); ++x) rows.push_back(simplex(ch[k][x], at(pk, x), 2));
            for (std::size_t x = 1; x < rows.size(); ++x)
                if (rows[x].size() != rows[0].size()) throw ConfigError(at(pk, x), "row length differs from row 0");
            if (k > 0 && rows[0].size() != c.channels[0].outputs())
                throw ConfigError(pk, "output alphabet differs from channels[0]");
            c.channels.push_back(Channel::from_rows(rows));
        }
        const std::size_t K = c.channels.size();
        for (const char* key : {"a", "b"}) {
            std::vector<double>& dst = key[0] == 'a' ? c.a : c.b;
            if (j.contains(key)) dst = simplex(j[key], key);
            else if (K == 1) dst = {1.0};
            else throw ConfigError(key, "missing (required when there is more than one channel)");
            if (dst.size() != K) throw ConfigError(key, "needs one proportion per channel (" + std::to_string(K) + ")");
        }
        if (!j.contains("alpha")) throw ConfigError("alpha", "missing");
        c.alphas = number_or_list(j["alpha"], "alpha");
        if (!j.contains("lambda")) throw ConfigError("lambda", "missing");
        c.lambdas = number_or_list(j["lambda"], "lambda");
    } else {
        for (const char* key : {"channels", "a", "b", "alpha", "lambda", "m", "simulation"})
            if (j.contains(key)) throw ConfigError(key, "given without distributions");
    }

    if (j.contains("vi_assumption")) {
        if (!j["vi_assumption"].is_boolean()) throw ConfigError("vi_assumption", "expected true or false");
        c.vi_assumption = j["vi_assumption"].get<bool>();
    }
    if (j.contains("threshold")) c.threshold = threshold_kind(string_of(j["threshold"], "threshold", {"raw", "adjusted"}));
    if (j.contains("resolution")) {
        c.resolution = positive(j["resolution"], "resolution");
        try {
            (void)SweepGrid(c.resolution, 1);
        } catch (const std::invalid_argument&) {
            throw ConfigError("resolution", "must lie in (0, 0.5] with 1/resolution an integer");
        }
    }
    if (j.contains("selector")) c.selector = string_of(j["selector"], "selector", selectors());
    if (j.contains("hypothesis")) {
        const std::uint64_t h = unsigned_int(j["hypothesis"], "hypothesis");
        if (h < 1 || (instance && h > c.m()))
            throw ConfigError("hypothesis", "must be a hypothesis label in 1.." + std::to_string(c.m()));
        c.hypothesis = static_cast<std::size_t>(h - 1);
    }
    if (j.contains("simulation"))
        c.simulation = parse_simulation(j["simulation"], "simulation", c.m(), c.distributions[0].size());
    if (j.contains("oracle")) c.oracle = parse_oracle(j["oracle"], "oracle");
    if (j.contains("output")) {
        if (!j["output"].is_string() || j["output"].get<std::string>().empty())
            throw ConfigError("output", "expected a nonempty path string");
        c.output = j["output"].get<std::string>();
    }
    c.effective = std::move(j);
    return c;
}

inline RunConfig load_config(const std::string& path, const Overrides& ov = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("", "cannot open config file '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("", std::string("invalid JSON: ") + e.what());
    }
    return parse_config(std::move(j), ov);
}

// ---------------------------------------------------------------------------
// Output

/// FNV-1a over the command, its switches and the canonical effective config (output path excluded).
inline std::string config_hash(const RunConfig& c, const std::string& command) {
    json j = c.effective;
    j.erase("output");
    const std::string text = command + "\n" + j.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string num(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline std::string num(const ExtendedReal& v) { return num(v.to_double()); }

inline std::string vec(const std::vector<double>& v, const char* sep = ",") {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + num(v[i]);
    return s;
}

/// Writes to a sibling temp file, then renames over the target.
inline void atomic_write(const std::string& path, const std::string& content) {
    const std::filesystem::path target(path);
    std::filesystem::path tmp = target;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write '" + tmp.string() + "'");
        f << content;
        f.flush();
        if (!f) throw std::runtime_error("write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, target, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw std::runtime_error("cannot rename onto '" + path + "': " + ec.message());
    }
}

struct Streams {
    std::ostream& out;
    std::ostream& err;
};

/// CSV sink: to the output path when set, else to stdout. The summary goes to stdout
/// in the first case and to stderr in the second.
class Report {
public:
    Report(const RunConfig& c, std::string command, Streams io) : c_(c), command_(std::move(command)), io_(io) {}

    std::ostringstream csv;
    std::ostream& summary() { return c_.output.empty() ? io_.err : io_.out; }

    void finish() {
        csv << "# config_hash=" << config_hash(c_, command_) << "\n";
        if (c_.output.empty()) io_.out << csv.str();
        else atomic_write(c_.output, csv.str());
    }

private:
    const RunConfig& c_;
    std::string command_;
    Streams io_;
};

// ---------------------------------------------------------------------------
// Commands

inline std::string default_selector(const RunConfig& c) {
    if (!c.selector.empty()) return c.selector == "f_alpha" && c.vi_assumption ? "f_alpha_vi" : c.selector;
    if (c.m() > 2) return "rejection";
    return c.vi_assumption ? "f_alpha_vi" : "f_alpha";
}

inline ExponentSelector to_selector(const std::string& s) {
    if (s == "f_alpha") return ExponentSelector::f_alpha;
    if (s == "f_alpha_vi") return ExponentSelector::f_alpha_vi;
    if (s == "f_infinity") return ExponentSelector::f_infinity;
    if (s == "rejection") return ExponentSelector::rejection;
    return ExponentSelector::f_infinity_j;
}

inline bool is_rejection(const std::string& s) { return s == "rejection" || s == "f_infinity_j"; }

inline ExponentResult evaluate(const RunConfig& c, const std::string& s, std::size_t j) {
    if (is_rejection(s)) {
        const MaryInstance inst = c.mary();
        return s == "rejection" ? rejection_exponent(inst, j) : f_infinity_j(inst, j);
    }
    if (c.m() != 2) throw ConfigError("selector", "'" + s + "' needs exactly two hypotheses");
    const BinaryInstance inst = c.binary();
    if (s == "f_alpha") return f_alpha(inst);
    if (s == "f_alpha_vi") return f_alpha_vi(inst);
    return f_infinity(inst);
}

inline int cmd_exponent(const RunConfig& c, bool gutman, Streams io) {
    if (c.alphas.size() != 1 || c.lambdas.size() != 1)
        throw ConfigError(c.alphas.size() != 1 ? "alpha" : "lambda", "exponent needs a single value");
    const std::string label = gutman ? "gutman" : default_selector(c);
    if (!gutman && is_rejection(label) && c.hypothesis >= c.m()) throw ConfigError("hypothesis", "out of range");
    const ExponentResult r = gutman ? gutman_exponent(c.binary()) : evaluate(c, label, c.hypothesis);

    Report rep(c, gutman ? "exponent --gutman" : "exponent", io);
    rep.csv << "exponent,hypothesis,value,feasible,converged,residual,duals\n";
    const std::string hyp = is_rejection(label) ? "H" + std::to_string(c.hypothesis + 1) : "";
    rep.csv << label << "," << hyp << "," << num(r.value) << "," << r.feasible << "," << r.converged << ","
            << num(r.residual) << "," << vec(r.duals, ";") << "\n";
    rep.finish();

    std::ostream& s = rep.summary();
    s << label << (hyp.empty() ? "" : "(" + hyp + ")") << " = " << num(r.value) << "  ["
      << (r.feasible ? "feasible" : "infeasible") << ", " << (r.converged ? "converged" : "NOT converged") << "]\n";
    if (!r.duals.empty()) s << "duals: " << vec(r.duals, ", ") << "\n";
    if (r.pair) s << "minimizing pair: (H" << r.pair->first + 1 << ", H" << r.pair->second + 1 << ")\n";
    for (const auto& o : r.optimizers) s << o.role << " = (" << vec(o.probs, ", ") << ")\n";
    return r.converged ? kOk : kNotConverged;
}

inline int cmd_sweep_alpha(const RunConfig& c, Streams io) {
    if (c.lambdas.size() != 1) throw ConfigError("lambda", "sweep-alpha needs a single value");
    const AlphaSweep sw = sweep_alpha(c.binary(), c.alphas);
    const double finf = sw.f_infinity.value.to_double();
    Report rep(c, "sweep-alpha", io);
    rep.csv << "alpha,f_alpha,f_infinity,alpha0_flag,converged\n";
    bool ok = sw.f_infinity.converged;
    bool monotone = true;
    for (std::size_t i = 0; i < sw.rows.size(); ++i) {
        const AlphaRow& r = sw.rows[i];
        const bool conv = r.converged && sw.f_infinity.converged;
        ok = ok && conv;
        if (i > 0 && r.f_alpha.to_double() < sw.rows[i - 1].f_alpha.to_double() - 1e-9) monotone = false;
        rep.csv << num(r.alpha) << "," << num(r.f_alpha) << "," << num(finf) << "," << r.below_alpha0 << "," << conv
                << "\n";
    }
    rep.finish();
    std::ostream& s = rep.summary();
    s << "f_infinity = " << num(finf) << "\n";
    s << "alpha0 = " << num(sw.alpha0.value) << (sw.alpha0.bracketed ? "" : "  (not bracketed)") << "\n";
    s << "f_alpha nondecreasing in alpha: " << (monotone ? "yes" : "no") << "\n";
    return ok ? kOk : kNotConverged;
}

inline int cmd_sweep_ab(const RunConfig& c, Streams io) {
    if (c.alphas.size() != 1 || c.lambdas.size() != 1)
        throw ConfigError(c.alphas.size() != 1 ? "alpha" : "lambda", "sweep-ab needs a single value");
    const std::string label = default_selector(c);
    SweepOptions opt;
    opt.hypothesis = c.hypothesis;
    SweepResult sw;
    if (c.m() == 2) {
        sw = sweep_ab(c.binary(), c.resolution, to_selector(label), {}, opt);
    } else {
        if (!is_rejection(label)) throw ConfigError("selector", "'" + label + "' needs exactly two hypotheses");
        sw = sweep_ab(c.mary(), c.resolution, to_selector(label), {}, opt);
    }
    const std::size_t K = sw.K;
    Report rep(c, "sweep-ab", io);
    for (std::size_t k = 0; k < K; ++k) rep.csv << "a" << k + 1 << ",";
    for (std::size_t k = 0; k < K; ++k) rep.csv << "b" << k + 1 << ",";
    rep.csv << "value,converged\n";
    for (const SweepRow& r : sw.rows)
        rep.csv << vec(r.a) << "," << vec(r.b) << "," << (r.feasible ? num(r.value) : "inf") << "," << r.converged
                << "\n";
    rep.finish();

    std::ostream& s = rep.summary();
    s << label << " over " << sw.rows.size() << " lattice pairs at resolution " << num(c.resolution) << "\n";
    if (sw.all_infeasible) {
        s << "no feasible converged point\n";
    } else {
        const SweepRow& w = sw.rows[sw.witness];
        s << "max = " << num(sw.max_value) << " at a = (" << vec(w.a, ", ") << "), b = (" << vec(w.b, ", ") << ")";
        if (sw.argmax.size() > 1) s << "  [" << sw.argmax.size() << " tied points]";
        s << "\n";
        if (sw.corner) s << "corner: a = e" << sw.corner->first + 1 << ", b = e" << sw.corner->second + 1 << "\n";
        else s << "the maximum is not at a corner point\n";
    }
    if (sw.failures) s << sw.failures << " points did not converge\n";
    return sw.failures == 0 ? kOk : kNotConverged;
}

inline int cmd_mary_reject(const RunConfig& c, Streams io) {
    if (c.alphas.size() != 1) throw ConfigError("alpha", "mary-reject needs a single value");
    std::string label = c.selector.empty() ? "rejection" : c.selector;
    if (!is_rejection(label)) throw ConfigError("selector", "mary-reject supports rejection and f_infinity_j");
    const MaryInstance base = c.mary();
    Report rep(c, "mary-reject", io);
    rep.csv << "lambda,j,exponent,feasible\n";
    bool ok = true;
    std::vector<double> below;
    for (double lam : c.lambdas) {
        const MaryInstance inst = base.with_lambda(lam);
        bool all_below = true;
        for (std::size_t j = 0; j < inst.m(); ++j) {
            const ExponentResult r = label == "rejection" ? rejection_exponent(inst, j) : f_infinity_j(inst, j);
            ok = ok && r.converged;
            all_below = all_below && r.feasible && r.value < ExtendedReal(lam);
            rep.csv << num(lam) << "," << j + 1 << "," << (r.feasible ? num(r.value) : "inf") << "," << r.feasible
                    << "\n";
        }
        if (all_below) below.push_back(lam);
    }
    rep.finish();
    std::ostream& s = rep.summary();
    s << label << " exponents for m = " << base.m() << " over " << c.lambdas.size() << " lambda values\n";
    if (below.empty()) s << "no scanned lambda has E_j < lambda for every j\n";
    else s << "lambda values with E_j < lambda for every j: " << vec(below, ", ") << "\n";
    if (!ok) s << "some exponents did not converge\n";
    return ok ? kOk : kNotConverged;
}

inline TestFn make_test(const RunConfig& c, const std::string& name) {
    if (name == "unnikrishnan") return unnikrishnan_test_fn(c.mary(), c.threshold);
    const BinaryInstance inst = c.binary();
    if (name == "gutman") {
        if (inst.bank.size() != 1) throw ConfigError("simulation.test", "gutman needs a single channel");
        return gutman_binary_fn(inst, c.threshold);
    }
    if (name == "vi") return vi_test_fn(inst, c.threshold);
    return binary_test_fn(inst, c.threshold);
}

inline TrialConfig trial_config(const RunConfig& c, const SimulationBlock& sb) {
    TrialConfig t;
    t.n = sb.n;
    t.alpha = c.alpha();
    t.trials = sb.trials;
    t.seed = sb.seed;
    if (sb.other) t.other = Distribution(*sb.other);
    else t.true_hypothesis = sb.truth.value_or(c.m() == 2 ? 1 : 0);
    return t;
}

inline int cmd_simulate(const RunConfig& c, Streams io) {
    if (!c.simulation) throw ConfigError("simulation", "missing (simulate needs n and trials)");
    if (c.alphas.size() != 1 || c.lambdas.size() != 1)
        throw ConfigError(c.alphas.size() != 1 ? "alpha" : "lambda", "simulate needs a single value");
    const SimulationBlock& sb = *c.simulation;
    const TrialConfig tc = trial_config(c, sb);
    const SimulationModel model = SimulationModel::of(c.mary());
    const EmpiricalRates r = run_trials(model, make_test(c, sb.test), tc);

    Report rep(c, "simulate", io);
    rep.csv << "outcome,count,prob,ci_lo,ci_hi\n";
    for (std::size_t s = 0; s < r.outcomes(); ++s) {
        const Interval ci = r.interval(s);
        rep.csv << (s < model.m() ? TestOutcome::hypothesis(s) : TestOutcome::reject()).label() << "," << r.counts[s]
                << "," << num(r.probability(s)) << "," << num(ci.lo) << "," << num(ci.hi) << "\n";
    }
    const Interval fi = wilson_interval(r.failures, r.trials);
    rep.csv << "failed," << r.failures << "," << num(static_cast<double>(r.failures) / static_cast<double>(r.trials))
            << "," << num(fi.lo) << "," << num(fi.hi) << "\n";
    rep.finish();

    std::ostream& s = rep.summary();
    s << sb.test << " test, n = " << tc.n << ", N = " << tc.training_length() << ", " << tc.trials << " trials, "
      << (c.threshold == ThresholdMode::Kind::raw ? "raw" : "adjusted") << " threshold\n";
    s << "data drawn from " << (tc.other ? std::string("the 'other' distribution") : "H" + std::to_string(tc.true_hypothesis + 1))
      << "\n";
    if (!tc.other) {
        const Interval ei = r.error_interval();
        const ExponentEstimate e = r.error_exponent();
        s << "error probability = " << num(r.error_probability()) << "  (95% CI " << num(ei.lo) << " .. " << num(ei.hi)
          << ")\n";
        s << "empirical exponent = " << num(e.value) << (e.lower_bound ? "  (no errors: lower bound)" : "") << "\n";
    }
    if (r.failures) s << r.failures << " trials failed to converge\n";
    return r.failures == 0 ? kOk : kNotConverged;
}

namespace detail {

inline std::vector<double> random_simplex(Stream& rng, std::size_t n) {
    std::vector<double> v(n);
    double s = 0.0;
    for (double& x : v) s += (x = 0.02 - std::log(1.0 - rng.uniform()));
    for (double& x : v) x /= s;
    return v;
}

inline std::vector<double> binary_law(Stream& rng, double lo, double hi) {
    const double p = lo + (hi - lo) * rng.uniform();
    return {p, 1.0 - p};
}

// L = M = 2, K in {1, 2}. The two laws put most mass on different symbols and each
// channel row leans toward its own input, so most instances have a positive exponent.
// alpha in [1, 10], lambda in [0.005, 0.03].
inline MaryInstance random_guarded(std::uint64_t seed, std::uint64_t i) {
    Stream rng(seed, i, 0);
    const std::size_t K = 1 + static_cast<std::size_t>(i % 2);
    std::vector<Channel> ch;
    for (std::size_t k = 0; k < K; ++k) ch.push_back(Channel::from_rows({binary_law(rng, 0.6, 1.0), binary_law(rng, 0.0, 0.4)}));
    std::vector<Distribution> P{Distribution(binary_law(rng, 0.55, 0.95)), Distribution(binary_law(rng, 0.05, 0.45))};
    const Proportions a(random_simplex(rng, K)), b(random_simplex(rng, K));
    const double alpha = 1.0 + 9.0 * rng.uniform();
    const double lambda = 0.005 + 0.025 * rng.uniform();
    return {P, ChannelBank(ch), a, b, alpha, lambda};
}

struct Check {
    std::string instance;
    std::string quantity;
    double engine;
    double oracle;
    bool converged;
};

inline void oracle_checks(const std::string& id, const MaryInstance& inst, double res, std::vector<Check>& out) {
    const BinaryInstance bi = inst.binary();
    const ExponentResult e = f_alpha(bi);
    out.push_back({id, "f_alpha", e.value.to_double(), oracle::f_alpha(bi, res).value.to_double(), e.converged});
    if (inst.bank.size() == 1) {
        for (std::size_t j = 0; j < 2; ++j) {
            const ExponentResult r = rejection_exponent(inst, j);
            out.push_back({id, "rejection_H" + std::to_string(j + 1), r.value.to_double(),
                           oracle::rejection(inst, j, res).value.to_double(), r.converged});
        }
    }
}

}  // namespace detail

inline int cmd_oracle_check(const RunConfig& c, Streams io) {
    const OracleBlock ob = c.oracle.value_or(OracleBlock{c.has_instance() ? 0u : 10u, 1, 1e-4, 2e-3});
    std::vector<detail::Check> checks;
    if (c.has_instance()) {
        if (c.m() != 2) throw ConfigError("distributions", "oracle-check needs exactly two hypotheses");
        detail::oracle_checks("config", c.mary(), ob.grid_resolution, checks);
    }
    for (std::size_t i = 0; i < ob.instances; ++i)
        detail::oracle_checks("random" + std::to_string(i + 1), detail::random_guarded(ob.seed, i), ob.grid_resolution,
                              checks);

    // Exact enumeration against Monte Carlo, when the config's instance is small enough.
    struct McCheck {
        std::string quantity;
        double mc, exact, z;
    };
    std::vector<McCheck> mc;
    if (c.has_instance() && c.simulation && c.simulation->n <= 12 && c.channels.size() == 1 &&
        c.channels[0].outputs() == 2) {
        const SimulationBlock& sb = *c.simulation;
        const SimulationModel model = SimulationModel::of(c.mary());
        const TestFn test = make_test(c, sb.test);
        const ExactRates ex = exact_error_probs(model, test, sb.n, c.alpha());
        for (std::size_t nu = 0; nu < 2; ++nu) {
            TrialConfig tc = trial_config(c, sb);
            tc.other.reset();
            tc.true_hypothesis = nu;
            const EmpiricalRates r = run_trials(model, test, tc);
            const double p = ex.error(nu);
            const double sd = std::sqrt(std::max(p * (1.0 - p), 1e-300) / static_cast<double>(r.trials));
            mc.push_back({"beta" + std::to_string(nu + 1), r.error_probability(), p,
                          (r.error_probability() - p) / sd});
        }
    }

    Report rep(c, "oracle-check", io);
    rep.csv << "instance,quantity,engine,oracle,abs_diff,converged\n";
    double worst = 0.0;
    bool ok = true;
    for (const auto& k : checks) {
        const double d = std::abs(k.engine - k.oracle);
        worst = std::max(worst, d);
        ok = ok && k.converged;
        rep.csv << k.instance << "," << k.quantity << "," << num(k.engine) << "," << num(k.oracle) << "," << num(d)
                << "," << k.converged << "\n";
    }
    for (const auto& k : mc)
        rep.csv << "config," << k.quantity << "_monte_carlo," << num(k.mc) << "," << num(k.exact) << ","
                << num(std::abs(k.mc - k.exact)) << ",1\n";
    rep.finish();

    std::ostream& s = rep.summary();
    if (!checks.empty())
        s << "max |engine - oracle| = " << num(worst) << " over " << checks.size() << " comparisons (tolerance "
          << num(ob.tolerance) << "): " << (worst <= ob.tolerance ? "PASS" : "FAIL") << "\n";
    for (const auto& k : mc)
        s << k.quantity << ": Monte Carlo " << num(k.mc) << " vs exact " << num(k.exact) << "  (z = " << num(k.z)
          << ")\n";
    if (!ok) s << "some engine evaluations did not converge\n";
    return ok ? kOk : kNotConverged;
}

// ---------------------------------------------------------------------------
// Entry point

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Error and rejection exponents for distributed detection with empirically observed statistics"};
    app.require_subcommand(1);
    std::string config_path;
    Overrides ov;
    bool gutman = false;

    struct Flags {
        std::string out, threshold;
        std::uint64_t seed = 0;
        double resolution = 0.0;
    } f;
    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON run configuration")->required();
        sub->add_option("--out", f.out, "CSV output path (default: stdout)");
        sub->add_option("--seed", f.seed, "seed for simulations and random oracle instances");
        sub->add_option("--threshold", f.threshold, "threshold mode")->check(CLI::IsMember({"raw", "adjusted"}));
        sub->add_option("--resolution", f.resolution, "lattice resolution for sweep-ab");
    };
    CLI::App* exponent = app.add_subcommand("exponent", "one exponent with duals and feasibility");
    common(exponent);
    exponent->add_flag("--gutman", gutman, "closed-form Gutman exponent (single identity channel)");
    const std::vector<std::pair<std::string, std::string>> others{
        {"sweep-alpha", "f_alpha over the alpha list with the f_infinity asymptote"},
        {"sweep-ab", "the selected exponent over the lattice of proportion pairs (a, b)"},
        {"mary-reject", "rejection exponents of every hypothesis over the lambda list"},
        {"simulate", "Monte Carlo outcome tallies of a fusion-center test"},
        {"oracle-check", "engine against the grid oracle (and exact enumeration)"}};
    for (const auto& [name, help] : others) common(app.add_subcommand(name, help));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kConfigError;
    }
    CLI::App* sub = app.get_subcommands().front();
    if (sub->count("--out")) ov.out = f.out;
    if (sub->count("--seed")) ov.seed = f.seed;
    if (sub->count("--threshold")) ov.threshold = f.threshold;
    if (sub->count("--resolution")) ov.resolution = f.resolution;

    const Streams io{out, err};
    try {
        const RunConfig c = load_config(config_path, ov);
        const std::string name = sub->get_name();
        if (name == "exponent") return cmd_exponent(c, gutman, io);
        if (name == "sweep-alpha") return cmd_sweep_alpha(c, io);
        if (name == "sweep-ab") return cmd_sweep_ab(c, io);
        if (name == "mary-reject") return cmd_mary_reject(c, io);
        if (name == "simulate") return cmd_simulate(c, io);
        return cmd_oracle_check(c, io);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::invalid_argument& e) {
        err << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const SolverError& e) {
        err << "solver error: " << e.what() << "\n";
        return kNotConverged;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kNotConverged;
    }
}

}  // namespace ddetect::cli
