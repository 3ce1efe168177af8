#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hiertask/encoder.hpp"
#include "hiertask/network.hpp"
#include "hiertask/taxonomy.hpp"
#include "hiertask/training.hpp"

namespace hiertask {

/// Value of the TOML-style config subset: strings, numbers, booleans and
/// (possibly nested) arrays.
struct ConfigValue {
    enum class Kind { string, number, boolean, array };

    Kind kind = Kind::number;
    std::string str;
    double num = 0.0;
    bool flag = false;
    std::vector<ConfigValue> items;

    const std::string& as_string() const;
    double as_double() const;
    std::int64_t as_int() const;
    std::uint64_t as_uint() const;
    bool as_bool() const;
    const std::vector<ConfigValue>& as_array() const;
    std::vector<double> as_double_array() const;
};

/// Declarative key-value config: `[section]` headers, `key = value` lines,
/// `#` comments. Arrays may nest one level (pairs of loss weights).
class ConfigFile {
public:
    static ConfigFile parse(const std::string& text, const std::string& origin);
    static ConfigFile parse_file(const std::filesystem::path& path);

    bool has_section(const std::string& section) const;
    bool has(const std::string& section, const std::string& key) const;
    const ConfigValue& get(const std::string& section, const std::string& key) const;
    const ConfigValue* find(const std::string& section, const std::string& key) const;

    /// Rejects keys outside the allowed set; typos fail loudly.
    void require_known_keys(const std::string& section,
                            const std::vector<std::string>& allowed) const;

private:
    std::map<std::string, std::map<std::string, ConfigValue>> sections_;
    std::string origin_;
};

struct DatasetConfig {
    enum class Source { synthetic, manifest };

    Source source = Source::synthetic;
    SyntheticSpec synthetic;
    std::filesystem::path manifest;
    std::array<double, 3> ratios{0.7, 0.2, 0.1};
    std::uint64_t split_seed = 0;

    Dataset load() const;
};

/// One sweep point: dataset, encoder, architecture, loss weights, dropout,
/// schedule and seed. Everything a run needs to be reproduced.
struct ExperimentConfig {
    DatasetConfig dataset;
    EncoderSpec encoder;
    ArchitectureMode mode = ArchitectureMode::single_task;
    LossWeights weights;
    double dropout = 0.0;
    bool dropout_on_make_logits = false;
    std::size_t epochs = 25;
    std::size_t batch_size = 32;
    double base_lr = 3e-4;
    bool lr_is_max = true;
    double div_factor = 25.0;
    double final_div_factor = 1e4;
    double pct_up = 0.3;
    std::uint64_t seed = 0;

    std::string run_id() const;
    TrainConfig train_config() const;
    MtlNetworkConfig network_config() const;
    void validate() const;
};

/// Cartesian sweep: encoders x modes x weight pairs x dropouts x seeds,
/// every other field taken from the base config.
struct SweepSpec {
    ExperimentConfig base;
    std::vector<EncoderFamily> encoders;
    std::vector<ArchitectureMode> modes;
    std::vector<LossWeights> weight_pairs;
    std::vector<double> dropouts;
    std::vector<std::uint64_t> seeds;

    std::vector<ExperimentConfig> expand() const;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);
SweepSpec load_sweep_spec(const std::filesystem::path& path);

/// Shared by both loaders: [dataset], [encoder] and [model]/[train] sections.
ExperimentConfig experiment_from_config(const ConfigFile& file);

}  // namespace hiertask
