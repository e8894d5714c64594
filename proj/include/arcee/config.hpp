#pragma once

// Experiment configuration: a small TOML-style document (sections, key = value,
// '#' comments) with a canonical serialization and a stable digest.
//
//   seed = 0
//   [network]
//   depth = 6
//   arcee = true
//
// Values are integers, floats, booleans, double-quoted strings, or flat arrays
// of integers. Canonical form: sections and keys sorted, floats written in
// shortest round-trip form (always carrying '.' or an exponent).

#include "arcee/flow_matching.hpp"
#include "arcee/network.hpp"
#include "arcee/ode_sampler.hpp"

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace arcee {

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

using ConfigValue = std::variant<std::int64_t, double, bool, std::string, std::vector<std::int64_t>>;

// section name ("" for top level) -> key -> value
using ConfigDocument = std::map<std::string, std::map<std::string, ConfigValue>>;

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::string strip_comment(const std::string& line) {
    bool in_str = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_str = !in_str;
        if (line[i] == '#' && !in_str) return line.substr(0, i);
    }
    return line;
}

inline std::int64_t parse_int(const std::string& s, int line_no) {
    std::int64_t v = 0;
    const char* first = s.data() + (s.size() > 0 && s[0] == '+' ? 1 : 0);
    auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw ConfigError("line " + std::to_string(line_no) + ": bad integer '" + s + "'");
    return v;
}

inline ConfigValue parse_value(const std::string& raw, int line_no) {
    if (raw.empty()) throw ConfigError("line " + std::to_string(line_no) + ": missing value");
    if (raw == "true") return true;
    if (raw == "false") return false;
    if (raw.front() == '"') {
        if (raw.size() < 2 || raw.back() != '"')
            throw ConfigError("line " + std::to_string(line_no) + ": unterminated string");
        std::string out;
        for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
            if (raw[i] == '\\' && i + 2 < raw.size()) ++i;
            out.push_back(raw[i]);
        }
        return out;
    }
    if (raw.front() == '[') {
        if (raw.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": unterminated array");
        std::vector<std::int64_t> items;
        std::stringstream ss(raw.substr(1, raw.size() - 2));
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (!item.empty()) items.push_back(parse_int(item, line_no));
        }
        return items;
    }
    std::string s;
    for (char ch : raw)
        if (ch != '_') s.push_back(ch);
    if (s.find_first_of(".eEn") != std::string::npos) {
        double v = 0;
        const char* first = s.data() + (s[0] == '+' ? 1 : 0);
        auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size())
            throw ConfigError("line " + std::to_string(line_no) + ": bad number '" + raw + "'");
        return v;
    }
    return parse_int(s, line_no);
}

inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    std::string s(buf, ptr);
    if (s.find_first_of(".en") == std::string::npos) s += ".0";
    return s;
}

inline bool valid_name(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
    return true;
}

}  // namespace detail

inline ConfigDocument parse_config(const std::string& text) {
    ConfigDocument doc;
    doc[""];
    std::string section;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string s = detail::trim(detail::strip_comment(line));
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": bad section header");
            section = detail::trim(s.substr(1, s.size() - 2));
            if (!detail::valid_name(section))
                throw ConfigError("line " + std::to_string(line_no) + ": bad section name");
            doc[section];
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = detail::trim(s.substr(0, eq));
        if (!detail::valid_name(key)) throw ConfigError("line " + std::to_string(line_no) + ": bad key '" + key + "'");
        auto& sec = doc[section];
        if (sec.count(key)) throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
        sec[key] = detail::parse_value(detail::trim(s.substr(eq + 1)), line_no);
    }
    return doc;
}

inline std::string format_value(const ConfigValue& v) {
    struct Visitor {
        std::string operator()(std::int64_t x) const { return std::to_string(x); }
        std::string operator()(double x) const { return detail::format_double(x); }
        std::string operator()(bool x) const { return x ? "true" : "false"; }
        std::string operator()(const std::string& x) const {
            std::string out = "\"";
            for (char c : x) {
                if (c == '"' || c == '\\') out.push_back('\\');
                out.push_back(c);
            }
            return out + "\"";
        }
        std::string operator()(const std::vector<std::int64_t>& xs) const {
            std::string out = "[";
            for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? ", " : "") + std::to_string(xs[i]);
            return out + "]";
        }
    };
    return std::visit(Visitor{}, v);
}

// Sorted sections and keys; top-level keys first.
inline std::string serialize_config(const ConfigDocument& doc) {
    std::string out;
    if (auto it = doc.find(""); it != doc.end())
        for (const auto& [k, v] : it->second) out += k + " = " + format_value(v) + "\n";
    for (const auto& [name, sec] : doc) {
        if (name.empty()) continue;
        out += "\n[" + name + "]\n";
        for (const auto& [k, v] : sec) out += k + " = " + format_value(v) + "\n";
    }
    return out;
}

// FNV-1a 64 of the canonical serialization, as 16 hex digits.
inline std::string config_hash(const ConfigDocument& doc) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : serialize_config(doc)) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

struct DataConfig {
    std::string generator = "gauss_blobs";
    Index height = 8;
    Index width = 8;
    std::int64_t n_train = 4096;
    std::int64_t n_heldout = 512;
    std::uint64_t seed = 1234;
};

struct TrainerConfig {
    std::int64_t steps = 3000;
    std::int64_t batch = 64;
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.0;
    double ema_decay = 0.999;
    double grad_clip = 0.0;  // 0 disables
    std::int64_t log_every = 100;
    std::int64_t eval_every = 0;  // 0: evaluate samples at the final step only
    std::int64_t n_eval = 256;
    std::int64_t eval_batch = 64;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::string precision = "f32";
    NetworkConfig network;
    ScheduleKind schedule = ScheduleKind::gvp;
    double t_eps = 1e-3;
    SamplerConfig sampler;
    TrainerConfig trainer;
    DataConfig data;
    std::vector<std::int64_t> ablate_k = {1, 2, 4, 8};

    ConfigDocument to_document() const;
    static ExperimentConfig from_document(const ConfigDocument& doc);

    std::string hash() const { return config_hash(to_document()); }

    // Digest of everything except the arcee switch: equal for matched on/off runs.
    std::string budget_hash() const {
        ConfigDocument doc = to_document();
        doc["network"].erase("arcee");
        return config_hash(doc);
    }

    std::string canonical() const { return serialize_config(to_document()); }

    void validate() const {
        network.validate();
        sampler.validate();
        require(precision == "f32" || precision == "f64", "config: precision must be f32 or f64");
        require(t_eps > 0 && t_eps < 1, "config: flow.t_eps must lie in (0, 1)");
        require(trainer.steps >= 0 && trainer.batch >= 1, "config: trainer.steps >= 0 and trainer.batch >= 1");
        require(trainer.log_every >= 1, "config: trainer.log_every must be >= 1");
        require(trainer.ema_decay >= 0 && trainer.ema_decay <= 1, "config: trainer.ema_decay must lie in [0, 1]");
        require(trainer.n_eval >= 2 && data.n_heldout >= 2, "config: need at least 2 eval and held-out samples");
        require(data.n_train >= 1, "config: data.n_train must be >= 1");
        require(trainer.eval_batch >= 1, "config: trainer.eval_batch must be >= 1");
    }
};

inline ConfigDocument ExperimentConfig::to_document() const {
    using I = std::int64_t;
    ConfigDocument d;
    d[""]["seed"] = static_cast<I>(seed);
    d[""]["precision"] = precision;
    auto& n = d["network"];
    n["depth"] = I(network.depth);
    n["d_model"] = I(network.d_model);
    n["expand"] = I(network.expand);
    n["d_state"] = I(network.d_state);
    n["arcee"] = network.arcee_enabled;
    n["boundary_map"] = std::string("identity");
    n["k"] = I(network.k_orders);
    n["time_freq_dim"] = I(network.time_freq_dim);
    n["time_hidden"] = I(network.time_hidden);
    n["readout"] = std::string(network.readout == Readout::pre ? "pre" : "post");
    n["scan_chunk"] = I(network.scan_chunk);
    n["delta_min"] = network.delta_min;
    n["delta_max"] = network.delta_max;
    auto& f = d["flow"];
    f["schedule"] = std::string(schedule_name(schedule));
    f["t_eps"] = t_eps;
    auto& s = d["sampler"];
    s["method"] = std::string(sampler_name(sampler.method));
    s["nfe"] = I(sampler.nfe_budget);
    s["rtol"] = sampler.rtol;
    s["atol"] = sampler.atol;
    auto& t = d["trainer"];
    t["steps"] = trainer.steps;
    t["batch"] = trainer.batch;
    t["lr"] = trainer.lr;
    t["beta1"] = trainer.beta1;
    t["beta2"] = trainer.beta2;
    t["adam_eps"] = trainer.adam_eps;
    t["weight_decay"] = trainer.weight_decay;
    t["ema_decay"] = trainer.ema_decay;
    t["grad_clip"] = trainer.grad_clip;
    t["log_every"] = trainer.log_every;
    t["eval_every"] = trainer.eval_every;
    t["n_eval"] = trainer.n_eval;
    t["eval_batch"] = trainer.eval_batch;
    auto& a = d["data"];
    a["generator"] = data.generator;
    a["height"] = I(data.height);
    a["width"] = I(data.width);
    a["n_train"] = data.n_train;
    a["n_heldout"] = data.n_heldout;
    a["seed"] = static_cast<I>(data.seed);
    d["ablate"]["k"] = ablate_k;
    return d;
}

namespace detail {

class SectionReader {
   public:
    SectionReader(const ConfigDocument& doc, const std::string& section) : section_(section) {
        if (auto it = doc.find(section); it != doc.end()) values_ = &it->second;
    }

    template <typename T>
    void read(const std::string& key, T& out) {
        seen_.insert(key);
        if (!values_) return;
        auto it = values_->find(key);
        if (it == values_->end()) return;
        const ConfigValue& v = it->second;
        if constexpr (std::is_same_v<T, bool>) {
            if (auto p = std::get_if<bool>(&v)) { out = *p; return; }
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (auto p = std::get_if<std::string>(&v)) { out = *p; return; }
        } else if constexpr (std::is_same_v<T, std::vector<std::int64_t>>) {
            if (auto p = std::get_if<std::vector<std::int64_t>>(&v)) { out = *p; return; }
        } else if constexpr (std::is_floating_point_v<T>) {
            if (auto p = std::get_if<double>(&v)) { out = T(*p); return; }
            if (auto p = std::get_if<std::int64_t>(&v)) { out = T(*p); return; }
        } else if constexpr (std::is_integral_v<T>) {
            if (auto p = std::get_if<std::int64_t>(&v)) { out = T(*p); return; }
        }
        throw ConfigError("config: wrong type for " + where(key));
    }

    void reject_unknown() const {
        if (!values_) return;
        for (const auto& [k, v] : *values_)
            if (!seen_.count(k)) throw ConfigError("config: unknown key " + where(k));
    }

   private:
    std::string where(const std::string& key) const { return section_.empty() ? key : section_ + "." + key; }

    std::string section_;
    const std::map<std::string, ConfigValue>* values_ = nullptr;
    std::set<std::string> seen_;
};

}  // namespace detail

inline ExperimentConfig ExperimentConfig::from_document(const ConfigDocument& doc) {
    static const std::set<std::string> known = {"", "network", "flow", "sampler", "trainer", "data", "ablate"};
    for (const auto& [name, sec] : doc)
        if (!known.count(name)) throw ConfigError("config: unknown section [" + name + "]");

    ExperimentConfig c;
    detail::SectionReader top(doc, "");
    std::int64_t seed = 0;
    top.read("seed", seed);
    c.seed = static_cast<std::uint64_t>(seed);
    top.read("precision", c.precision);
    top.reject_unknown();

    detail::SectionReader n(doc, "network");
    std::string boundary = "identity", readout = "pre";
    n.read("depth", c.network.depth);
    n.read("d_model", c.network.d_model);
    n.read("expand", c.network.expand);
    n.read("d_state", c.network.d_state);
    n.read("arcee", c.network.arcee_enabled);
    n.read("boundary_map", boundary);
    n.read("k", c.network.k_orders);
    n.read("time_freq_dim", c.network.time_freq_dim);
    n.read("time_hidden", c.network.time_hidden);
    n.read("readout", readout);
    n.read("scan_chunk", c.network.scan_chunk);
    n.read("delta_min", c.network.delta_min);
    n.read("delta_max", c.network.delta_max);
    n.reject_unknown();
    if (boundary != "identity") throw ConfigError("config: network.boundary_map must be \"identity\"");
    if (readout != "pre" && readout != "post") throw ConfigError("config: network.readout must be \"pre\" or \"post\"");
    c.network.readout = readout == "pre" ? Readout::pre : Readout::post;

    detail::SectionReader f(doc, "flow");
    std::string schedule = "gvp";
    f.read("schedule", schedule);
    f.read("t_eps", c.t_eps);
    f.reject_unknown();
    c.schedule = schedule_from_name(schedule);

    detail::SectionReader s(doc, "sampler");
    std::string method = "rk4";
    s.read("method", method);
    s.read("nfe", c.sampler.nfe_budget);
    s.read("rtol", c.sampler.rtol);
    s.read("atol", c.sampler.atol);
    s.reject_unknown();
    c.sampler.method = sampler_from_name(method);
    c.sampler.t_eps = c.t_eps;

    detail::SectionReader t(doc, "trainer");
    t.read("steps", c.trainer.steps);
    t.read("batch", c.trainer.batch);
    t.read("lr", c.trainer.lr);
    t.read("beta1", c.trainer.beta1);
    t.read("beta2", c.trainer.beta2);
    t.read("adam_eps", c.trainer.adam_eps);
    t.read("weight_decay", c.trainer.weight_decay);
    t.read("ema_decay", c.trainer.ema_decay);
    t.read("grad_clip", c.trainer.grad_clip);
    t.read("log_every", c.trainer.log_every);
    t.read("eval_every", c.trainer.eval_every);
    t.read("n_eval", c.trainer.n_eval);
    t.read("eval_batch", c.trainer.eval_batch);
    t.reject_unknown();

    detail::SectionReader a(doc, "data");
    std::int64_t data_seed = static_cast<std::int64_t>(c.data.seed);
    a.read("generator", c.data.generator);
    a.read("height", c.data.height);
    a.read("width", c.data.width);
    a.read("n_train", c.data.n_train);
    a.read("n_heldout", c.data.n_heldout);
    a.read("seed", data_seed);
    a.reject_unknown();
    c.data.seed = static_cast<std::uint64_t>(data_seed);

    detail::SectionReader ab(doc, "ablate");
    ab.read("k", c.ablate_k);
    ab.reject_unknown();

    c.network.height = c.data.height;
    c.network.width = c.data.width;
    c.network.channels = 1;
    c.validate();
    return c;
}

inline ExperimentConfig parse_experiment_config(const std::string& text) {
    return ExperimentConfig::from_document(parse_config(text));
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_experiment_config(ss.str());
}

}  // namespace arcee
