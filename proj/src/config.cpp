#include "pom/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace pom {

ConfigError::ConfigError(std::size_t line_, const std::string& message_, const std::string& source)
    : std::runtime_error((source.empty() ? "" : source + ": ") +
                         (line_ == 0 ? "" : "line " + std::to_string(line_) + ": ") + message_),
      line(line_),
      message(message_) {}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& v) {
    std::size_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw std::invalid_argument("expected a non-negative integer");
    return out;
}

std::uint64_t to_u64(const std::string& v) {
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw std::invalid_argument("expected a non-negative integer");
    return out;
}

double to_double(const std::string& v) {
    double out = 0.0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw std::invalid_argument("expected a number");
    return out;
}

std::vector<std::size_t> to_size_list(const std::string& v) {
    std::vector<std::size_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_size(trim(item)));
    if (out.empty()) throw std::invalid_argument("expected a comma-separated list");
    return out;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"dataset", [](RunConfig& c, const std::string& v) { c.train.data.kind = parse_dataset_kind(v); }},
        {"classes", [](RunConfig& c, const std::string& v) { c.train.data.classes = to_size(v); }},
        {"mixture_radius", [](RunConfig& c, const std::string& v) { c.train.data.mixture_radius = to_double(v); }},
        {"mixture_std", [](RunConfig& c, const std::string& v) { c.train.data.mixture_std = to_double(v); }},
        {"pattern_noise", [](RunConfig& c, const std::string& v) { c.train.data.pattern_noise = to_double(v); }},
        {"dim", [](RunConfig& c, const std::string& v) { c.train.model.dim = to_size(v); }},
        {"depth", [](RunConfig& c, const std::string& v) { c.train.model.depth = to_size(v); }},
        {"degree", [](RunConfig& c, const std::string& v) { c.train.model.degree = to_size(v); }},
        {"expand", [](RunConfig& c, const std::string& v) { c.train.model.expand = to_size(v); }},
        {"ffw_expand", [](RunConfig& c, const std::string& v) { c.train.model.ffw_expand = to_size(v); }},
        {"patch", [](RunConfig& c, const std::string& v) { c.train.model.patch = to_size(v); }},
        {"loss", [](RunConfig& c, const std::string& v) { c.train.loss = parse_loss_kind(v); }},
        {"lr", [](RunConfig& c, const std::string& v) { c.train.lr = to_double(v); }},
        {"steps", [](RunConfig& c, const std::string& v) { c.train.steps = to_size(v); }},
        {"cooldown", [](RunConfig& c, const std::string& v) { c.train.cooldown = to_double(v); }},
        {"batch", [](RunConfig& c, const std::string& v) { c.train.batch = to_size(v); }},
        {"seed", [](RunConfig& c, const std::string& v) { c.train.seed = to_u64(v); }},
        {"cond_dropout", [](RunConfig& c, const std::string& v) { c.train.cond_dropout = to_double(v); }},
        {"beta1", [](RunConfig& c, const std::string& v) { c.train.optimizer.beta1 = to_double(v); }},
        {"beta2", [](RunConfig& c, const std::string& v) { c.train.optimizer.beta2 = to_double(v); }},
        {"adam_eps", [](RunConfig& c, const std::string& v) { c.train.optimizer.eps = to_double(v); }},
        {"weight_decay", [](RunConfig& c, const std::string& v) { c.train.optimizer.weight_decay = to_double(v); }},
        {"clip_norm", [](RunConfig& c, const std::string& v) { c.train.optimizer.clip_norm = to_double(v); }},
        {"sampler", [](RunConfig& c, const std::string& v) { c.train.sampling.method = parse_sampler_kind(v); }},
        {"sample_steps", [](RunConfig& c, const std::string& v) { c.train.sampling.steps = to_size(v); }},
        {"cfg_weight", [](RunConfig& c, const std::string& v) { c.train.sampling.cfg_weight = to_double(v); }},
        {"ddim_t_max", [](RunConfig& c, const std::string& v) { c.train.sampling.ddim_t_max = to_double(v); }},
        {"eval_samples", [](RunConfig& c, const std::string& v) { c.train.eval_samples = to_size(v); }},
        {"ablation_budget", [](RunConfig& c, const std::string& v) { c.ablation.budget = to_size(v); }},
        {"ablation_degrees", [](RunConfig& c, const std::string& v) { c.ablation.degrees = to_size_list(v); }},
    };
    return table;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
    RunConfig config;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        if (line_no == 1 && raw.rfind("\xEF\xBB\xBF", 0) == 0) raw.erase(0, 3);
        const std::string line = trim(raw.substr(0, raw.find('#')));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(line_no, "expected `key = value`, got `" + line + "`");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto it = setters().find(key);
        if (it == setters().end()) throw ConfigError(line_no, "unknown key `" + key + "`");
        if (!seen.insert(key).second) throw ConfigError(line_no, "key `" + key + "` given twice");
        if (value.empty()) throw ConfigError(line_no, "missing value for `" + key + "`");
        try {
            it->second(config, value);
        } catch (const std::exception& e) {
            throw ConfigError(line_no, "bad value `" + value + "` for `" + key + "`: " + e.what());
        }
    }
    try {
        config.train.validate();
    } catch (const std::exception& e) {
        throw ConfigError(0, std::string("invalid configuration: ") + e.what());
    }
    return config;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(0, "cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config(ss.str());
    } catch (const ConfigError& e) {
        throw ConfigError(e.line, e.message, path);
    }
}

namespace {

void write_train(std::ostream& os, const TrainConfig& t) {
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    os << "dataset = " << to_string(t.data.kind) << '\n'
       << "classes = " << t.data.classes << '\n'
       << "mixture_radius = " << t.data.mixture_radius << '\n'
       << "mixture_std = " << t.data.mixture_std << '\n'
       << "pattern_noise = " << t.data.pattern_noise << '\n'
       << "dim = " << t.model.dim << '\n'
       << "depth = " << t.model.depth << '\n'
       << "degree = " << t.model.degree << '\n'
       << "expand = " << t.model.expand << '\n'
       << "ffw_expand = " << t.model.ffw_expand << '\n'
       << "patch = " << t.model.patch << '\n'
       << "loss = " << to_string(t.loss) << '\n'
       << "lr = " << t.lr << '\n'
       << "steps = " << t.steps << '\n'
       << "cooldown = " << t.cooldown << '\n'
       << "batch = " << t.batch << '\n'
       << "seed = " << t.seed << '\n'
       << "cond_dropout = " << t.cond_dropout << '\n'
       << "beta1 = " << t.optimizer.beta1 << '\n'
       << "beta2 = " << t.optimizer.beta2 << '\n'
       << "adam_eps = " << t.optimizer.eps << '\n'
       << "weight_decay = " << t.optimizer.weight_decay << '\n'
       << "clip_norm = " << t.optimizer.clip_norm << '\n'
       << "sampler = " << to_string(t.sampling.method) << '\n'
       << "sample_steps = " << t.sampling.steps << '\n'
       << "cfg_weight = " << t.sampling.cfg_weight << '\n'
       << "ddim_t_max = " << t.sampling.ddim_t_max << '\n'
       << "eval_samples = " << t.eval_samples << '\n';
}

}  // namespace

std::string to_config_text(const TrainConfig& config) {
    std::ostringstream os;
    write_train(os, config);
    return os.str();
}

std::string to_config_text(const RunConfig& config) {
    std::ostringstream os;
    write_train(os, config.train);
    os << "ablation_budget = " << config.ablation.budget << '\n' << "ablation_degrees = ";
    for (std::size_t i = 0; i < config.ablation.degrees.size(); ++i) {
        os << (i ? "," : "") << config.ablation.degrees[i];
    }
    os << '\n';
    return os.str();
}

}  // namespace pom
