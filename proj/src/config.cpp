#include "hiertask/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace hiertask {

// ---- value accessors -----------------------------------------------------------

const std::string& ConfigValue::as_string() const {
    if (kind != Kind::string) throw ConfigError("expected a string value");
    return str;
}

double ConfigValue::as_double() const {
    if (kind != Kind::number) throw ConfigError("expected a numeric value");
    return num;
}

std::int64_t ConfigValue::as_int() const {
    const double v = as_double();
    if (std::floor(v) != v) throw ConfigError("expected an integer, got " + std::to_string(v));
    return static_cast<std::int64_t>(v);
}

std::uint64_t ConfigValue::as_uint() const {
    const std::int64_t v = as_int();
    if (v < 0) throw ConfigError("expected a non-negative integer, got " + std::to_string(v));
    return static_cast<std::uint64_t>(v);
}

bool ConfigValue::as_bool() const {
    if (kind != Kind::boolean) throw ConfigError("expected a boolean value");
    return flag;
}

const std::vector<ConfigValue>& ConfigValue::as_array() const {
    if (kind != Kind::array) throw ConfigError("expected an array value");
    return items;
}

std::vector<double> ConfigValue::as_double_array() const {
    std::vector<double> out;
    for (const ConfigValue& v : as_array()) out.push_back(v.as_double());
    return out;
}

// ---- parser ---------------------------------------------------------------------

namespace {

struct Cursor {
    const std::string& text;
    std::size_t pos = 0;
    std::size_t line = 1;
    const std::string& origin;

    [[noreturn]] void fail(const std::string& msg) const {
        throw ConfigError(origin + ":" + std::to_string(line) + ": " + msg);
    }

    bool done() const { return pos >= text.size(); }
    char peek() const { return text[pos]; }
    char take() {
        const char c = text[pos++];
        if (c == '\n') ++line;
        return c;
    }

    void skip_inline_ws() {
        while (!done() && (peek() == ' ' || peek() == '\t')) ++pos;
    }
    void skip_ws_and_comments() {
        while (!done()) {
            const char c = peek();
            if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                take();
            } else if (c == '#') {
                while (!done() && peek() != '\n') ++pos;
            } else {
                break;
            }
        }
    }
};

ConfigValue parse_value(Cursor& cur);

ConfigValue parse_array(Cursor& cur) {
    cur.take();  // '['
    ConfigValue out;
    out.kind = ConfigValue::Kind::array;
    cur.skip_ws_and_comments();
    if (!cur.done() && cur.peek() == ']') {
        cur.take();
        return out;
    }
    while (true) {
        out.items.push_back(parse_value(cur));
        cur.skip_ws_and_comments();
        if (cur.done()) cur.fail("unterminated array");
        const char c = cur.take();
        if (c == ']') return out;
        if (c != ',') cur.fail(std::string("expected ',' or ']' in array, got '") + c + "'");
        cur.skip_ws_and_comments();
        if (!cur.done() && cur.peek() == ']') {  // trailing comma
            cur.take();
            return out;
        }
    }
}

ConfigValue parse_value(Cursor& cur) {
    cur.skip_ws_and_comments();
    if (cur.done()) cur.fail("expected a value");
    const char c = cur.peek();
    ConfigValue out;
    if (c == '[') return parse_array(cur);
    if (c == '"') {
        cur.take();
        out.kind = ConfigValue::Kind::string;
        while (!cur.done() && cur.peek() != '"') {
            if (cur.peek() == '\n') cur.fail("newline inside string");
            out.str += cur.take();
        }
        if (cur.done()) cur.fail("unterminated string");
        cur.take();
        return out;
    }
    std::string token;
    while (!cur.done() && (std::isalnum(static_cast<unsigned char>(cur.peek())) ||
                           std::string("+-._").find(cur.peek()) != std::string::npos))
        token += cur.take();
    if (token.empty()) cur.fail(std::string("unexpected character '") + c + "'");
    if (token == "true" || token == "false") {
        out.kind = ConfigValue::Kind::boolean;
        out.flag = token == "true";
        return out;
    }
    try {
        std::size_t used = 0;
        out.num = std::stod(token, &used);
        if (used != token.size()) throw std::invalid_argument(token);
    } catch (const std::exception&) {
        cur.fail("cannot parse value '" + token + "'");
    }
    out.kind = ConfigValue::Kind::number;
    return out;
}

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text, const std::string& origin) {
    ConfigFile file;
    file.origin_ = origin;
    Cursor cur{text, 0, 1, file.origin_};
    std::string section;
    while (true) {
        cur.skip_ws_and_comments();
        if (cur.done()) break;
        if (cur.peek() == '[') {
            cur.take();
            section.clear();
            while (!cur.done() && cur.peek() != ']' && cur.peek() != '\n') section += cur.take();
            if (cur.done() || cur.peek() != ']') cur.fail("unterminated section header");
            cur.take();
            if (section.empty()) cur.fail("empty section name");
            file.sections_[section];
            continue;
        }
        std::string key;
        while (!cur.done() && (std::isalnum(static_cast<unsigned char>(cur.peek())) ||
                               cur.peek() == '_'))
            key += cur.take();
        if (key.empty()) cur.fail(std::string("unexpected character '") + cur.peek() + "'");
        cur.skip_inline_ws();
        if (cur.done() || cur.take() != '=') cur.fail("expected '=' after key '" + key + "'");
        ConfigValue value = parse_value(cur);
        auto& sec = file.sections_[section];
        if (sec.count(key)) cur.fail("duplicate key '" + key + "'");
        sec.emplace(std::move(key), std::move(value));
    }
    return file;
}

ConfigFile ConfigFile::parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), path.string());
}

bool ConfigFile::has_section(const std::string& section) const {
    return sections_.count(section) > 0;
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
    return find(section, key) != nullptr;
}

const ConfigValue* ConfigFile::find(const std::string& section, const std::string& key) const {
    auto sec = sections_.find(section);
    if (sec == sections_.end()) return nullptr;
    auto it = sec->second.find(key);
    return it == sec->second.end() ? nullptr : &it->second;
}

const ConfigValue& ConfigFile::get(const std::string& section, const std::string& key) const {
    const ConfigValue* v = find(section, key);
    if (!v)
        throw ConfigError(origin_ + ": missing key '" + key + "' in section [" + section + "]");
    return *v;
}

void ConfigFile::require_known_keys(const std::string& section,
                                    const std::vector<std::string>& allowed) const {
    auto sec = sections_.find(section);
    if (sec == sections_.end()) return;
    for (const auto& [key, value] : sec->second) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ConfigError(origin_ + ": unknown key '" + key + "' in section [" + section +
                              "]");
    }
}

// ---- experiment configs ------------------------------------------------------------

Dataset DatasetConfig::load() const {
    if (source == Source::manifest) return load_manifest(manifest);
    return generate_synthetic(synthetic);
}

namespace {

std::string fmt_g(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

}  // namespace

std::string ExperimentConfig::run_id() const {
    std::ostringstream os;
    os << to_string(encoder.family) << '-' << to_string(mode) << "-w" << fmt_g(weights.lambda1)
       << 'x' << fmt_g(weights.lambda2) << "-d" << fmt_g(dropout) << "-s" << seed;
    return os.str();
}

TrainConfig ExperimentConfig::train_config() const {
    TrainConfig cfg;
    cfg.weights = weights;
    cfg.epochs = epochs;
    cfg.batch_size = batch_size;
    cfg.base_lr = base_lr;
    cfg.lr_is_max = lr_is_max;
    cfg.div_factor = div_factor;
    cfg.final_div_factor = final_div_factor;
    cfg.pct_up = pct_up;
    cfg.seed = seed;
    return cfg;
}

MtlNetworkConfig ExperimentConfig::network_config() const {
    MtlNetworkConfig cfg;
    cfg.encoder = encoder;
    cfg.mode = mode;
    cfg.dropout_rate = dropout;
    cfg.dropout_on_make_logits = dropout_on_make_logits;
    return cfg;
}

void ExperimentConfig::validate() const {
    weights.validate();
    encoder.validate();
    if (dropout < 0.0 || dropout >= 1.0)
        throw ConfigError("dropout " + std::to_string(dropout) + " outside [0, 1)");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    if (dataset.source == DatasetConfig::Source::manifest && dataset.manifest.empty())
        throw ConfigError("manifest dataset needs a path");
}

std::vector<ExperimentConfig> SweepSpec::expand() const {
    if (encoders.empty() || modes.empty() || weight_pairs.empty() || dropouts.empty() ||
        seeds.empty())
        throw ConfigError("sweep axes must all be nonempty");
    std::vector<ExperimentConfig> points;
    for (EncoderFamily family : encoders)
        for (ArchitectureMode m : modes)
            for (const LossWeights& w : weight_pairs)
                for (double drop : dropouts)
                    for (std::uint64_t s : seeds) {
                        ExperimentConfig cfg = base;
                        cfg.encoder.family = family;
                        cfg.mode = m;
                        cfg.weights = w;
                        cfg.dropout = drop;
                        cfg.seed = s;
                        cfg.validate();
                        points.push_back(std::move(cfg));
                    }
    return points;
}

// ---- section readers ---------------------------------------------------------------

namespace {

DatasetConfig read_dataset(const ConfigFile& file) {
    file.require_known_keys(
        "dataset", {"source", "manifest", "ratios", "seed", "makes", "models_per_make", "dim",
                    "n_per_model", "make_separation", "model_separation", "noise_sigma"});
    DatasetConfig cfg;
    if (const ConfigValue* v = file.find("dataset", "source")) {
        const std::string& s = v->as_string();
        if (s == "synthetic") cfg.source = DatasetConfig::Source::synthetic;
        else if (s == "manifest") cfg.source = DatasetConfig::Source::manifest;
        else throw ConfigError("dataset source must be 'synthetic' or 'manifest', got '" + s + "'");
    }
    if (const ConfigValue* v = file.find("dataset", "manifest")) cfg.manifest = v->as_string();
    if (const ConfigValue* v = file.find("dataset", "ratios")) {
        const std::vector<double> r = v->as_double_array();
        if (r.size() != 3) throw ConfigError("ratios must have exactly 3 entries");
        cfg.ratios = {r[0], r[1], r[2]};
    }
    if (const ConfigValue* v = file.find("dataset", "seed")) {
        cfg.split_seed = v->as_uint();
        cfg.synthetic.seed = cfg.split_seed;
    }
    auto set_size = [&file](const char* key, std::size_t& field) {
        if (const ConfigValue* v = file.find("dataset", key))
            field = static_cast<std::size_t>(v->as_uint());
    };
    set_size("makes", cfg.synthetic.makes);
    set_size("models_per_make", cfg.synthetic.models_per_make);
    set_size("dim", cfg.synthetic.dim);
    set_size("n_per_model", cfg.synthetic.n_per_model);
    if (const ConfigValue* v = file.find("dataset", "make_separation"))
        cfg.synthetic.make_separation = v->as_double();
    if (const ConfigValue* v = file.find("dataset", "model_separation"))
        cfg.synthetic.model_separation = v->as_double();
    if (const ConfigValue* v = file.find("dataset", "noise_sigma"))
        cfg.synthetic.noise_sigma = v->as_double();
    return cfg;
}

EncoderSpec read_encoder(const ConfigFile& file, const DatasetConfig& dataset) {
    file.require_known_keys(
        "encoder", {"family", "input_shape", "feature_dim", "hidden", "tokens", "attn_dim"});
    EncoderSpec spec;
    if (const ConfigValue* v = file.find("encoder", "family"))
        spec.family = encoder_family_from_string(v->as_string());
    if (const ConfigValue* v = file.find("encoder", "input_shape")) {
        spec.input_shape.clear();
        for (const ConfigValue& e : v->as_array())
            spec.input_shape.push_back(static_cast<std::size_t>(e.as_uint()));
    } else if (dataset.source == DatasetConfig::Source::synthetic) {
        spec.input_shape = {dataset.synthetic.dim};
    }
    if (const ConfigValue* v = file.find("encoder", "feature_dim"))
        spec.feature_dim = static_cast<std::size_t>(v->as_uint());
    if (const ConfigValue* v = file.find("encoder", "hidden")) {
        spec.hidden.clear();
        for (const ConfigValue& e : v->as_array())
            spec.hidden.push_back(static_cast<std::size_t>(e.as_uint()));
    }
    if (const ConfigValue* v = file.find("encoder", "tokens"))
        spec.tokens = static_cast<std::size_t>(v->as_uint());
    if (const ConfigValue* v = file.find("encoder", "attn_dim"))
        spec.attn_dim = static_cast<std::size_t>(v->as_uint());
    return spec;
}

LossWeights weights_from_value(const ConfigValue& v) {
    const std::vector<double> pair = v.as_double_array();
    if (pair.size() != 2) throw ConfigError("a loss-weight pair needs exactly 2 entries");
    return LossWeights{pair[0], pair[1]};
}

}  // namespace

ExperimentConfig experiment_from_config(const ConfigFile& file) {
    ExperimentConfig cfg;
    cfg.dataset = read_dataset(file);
    cfg.encoder = read_encoder(file, cfg.dataset);

    file.require_known_keys("model", {"mode", "dropout", "dropout_on_make_logits"});
    if (const ConfigValue* v = file.find("model", "mode"))
        cfg.mode = architecture_mode_from_string(v->as_string());
    if (const ConfigValue* v = file.find("model", "dropout")) cfg.dropout = v->as_double();
    if (const ConfigValue* v = file.find("model", "dropout_on_make_logits"))
        cfg.dropout_on_make_logits = v->as_bool();

    file.require_known_keys("train", {"lambda1", "lambda2", "weights", "epochs", "batch_size",
                                      "base_lr", "lr_meaning", "div_factor", "final_div_factor",
                                      "pct_up", "seed"});
    if (const ConfigValue* v = file.find("train", "weights")) cfg.weights = weights_from_value(*v);
    if (const ConfigValue* v = file.find("train", "lambda1")) cfg.weights.lambda1 = v->as_double();
    if (const ConfigValue* v = file.find("train", "lambda2")) cfg.weights.lambda2 = v->as_double();
    if (const ConfigValue* v = file.find("train", "epochs"))
        cfg.epochs = static_cast<std::size_t>(v->as_uint());
    if (const ConfigValue* v = file.find("train", "batch_size"))
        cfg.batch_size = static_cast<std::size_t>(v->as_uint());
    if (const ConfigValue* v = file.find("train", "base_lr")) cfg.base_lr = v->as_double();
    if (const ConfigValue* v = file.find("train", "lr_meaning")) {
        const std::string& s = v->as_string();
        if (s == "max") cfg.lr_is_max = true;
        else if (s == "initial") cfg.lr_is_max = false;
        else throw ConfigError("lr_meaning must be 'max' or 'initial', got '" + s + "'");
    }
    if (const ConfigValue* v = file.find("train", "div_factor")) cfg.div_factor = v->as_double();
    if (const ConfigValue* v = file.find("train", "final_div_factor"))
        cfg.final_div_factor = v->as_double();
    if (const ConfigValue* v = file.find("train", "pct_up")) cfg.pct_up = v->as_double();
    if (const ConfigValue* v = file.find("train", "seed")) cfg.seed = v->as_uint();
    return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    const ConfigFile file = ConfigFile::parse_file(path);
    ExperimentConfig cfg = experiment_from_config(file);
    cfg.validate();
    return cfg;
}

SweepSpec load_sweep_spec(const std::filesystem::path& path) {
    const ConfigFile file = ConfigFile::parse_file(path);
    SweepSpec spec;
    spec.base = experiment_from_config(file);
    file.require_known_keys("sweep", {"encoders", "modes", "weights", "dropouts", "seeds"});
    if (!file.has_section("sweep")) throw ConfigError(path.string() + ": missing [sweep] section");

    if (const ConfigValue* v = file.find("sweep", "encoders"))
        for (const ConfigValue& e : v->as_array())
            spec.encoders.push_back(encoder_family_from_string(e.as_string()));
    else spec.encoders = {spec.base.encoder.family};

    if (const ConfigValue* v = file.find("sweep", "modes"))
        for (const ConfigValue& e : v->as_array())
            spec.modes.push_back(architecture_mode_from_string(e.as_string()));
    else spec.modes = {spec.base.mode};

    if (const ConfigValue* v = file.find("sweep", "weights"))
        for (const ConfigValue& e : v->as_array()) spec.weight_pairs.push_back(weights_from_value(e));
    else spec.weight_pairs = {spec.base.weights};

    if (const ConfigValue* v = file.find("sweep", "dropouts"))
        spec.dropouts = v->as_double_array();
    else spec.dropouts = {spec.base.dropout};

    if (const ConfigValue* v = file.find("sweep", "seeds"))
        for (const ConfigValue& e : v->as_array()) spec.seeds.push_back(e.as_uint());
    else spec.seeds = {spec.base.seed};

    return spec;
}

}  // namespace hiertask
