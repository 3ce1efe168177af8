#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hiertask/tensor.hpp"

namespace hiertask {

/// Two-level label hierarchy: every fine class (model) has exactly one
/// coarse parent (make), and every make has at least one model.
struct Taxonomy {
    std::vector<std::string> makes;
    std::vector<std::string> models;
    std::vector<int> parent;  // parent[model_index] = make_index

    std::size_t make_count() const { return makes.size(); }
    std::size_t model_count() const { return models.size(); }
    void validate() const;
    /// FNV-1a over the canonical "model\tmake\n" listing in index order.
    std::uint64_t hash() const;

    bool operator==(const Taxonomy&) const = default;
};

struct Sample {
    std::vector<double> features;
    int model_label = 0;
    int make_label = 0;
};

struct Dataset {
    Taxonomy taxonomy;
    std::size_t feature_dim = 0;
    std::vector<Sample> samples;

    void validate() const;
};

struct DatasetSplit {
    std::vector<Sample> train;
    std::vector<Sample> val;
    std::vector<Sample> test;
    std::array<double, 3> ratios{0.7, 0.2, 0.1};
    std::uint64_t seed = 0;
    std::vector<int> flagged_classes;  // model classes with fewer than 3 samples
};

/// Reads a manifest CSV with header `id,make,model,feature_path` (one flat
/// little-endian float64 vector file per row, relative to the manifest) or
/// the inline variant `id,make,model,f0..f{d-1}`. The taxonomy is induced
/// from the make/model columns in order of first appearance.
Dataset load_manifest(const std::filesystem::path& path);

/// Writes the inline-feature manifest variant plus `<stem>_taxonomy.csv`.
void write_manifest(const Dataset& data, const std::filesystem::path& path);

/// Two-column CSV `model,make`, one row per fine class in index order.
void write_taxonomy_csv(const Taxonomy& taxonomy, const std::filesystem::path& path);

/// Stratified split by model class; deterministic under seed. Classes with
/// fewer than 3 samples are flagged, not rejected.
DatasetSplit split_dataset(const std::vector<Sample>& samples, std::array<double, 3> ratios,
                           std::uint64_t seed);

struct SyntheticSpec {
    std::size_t makes = 8;
    std::size_t models_per_make = 4;
    std::size_t dim = 64;
    std::size_t n_per_model = 25;
    double make_separation = 6.0;
    double model_separation = 3.0;
    double noise_sigma = 1.0;
    std::uint64_t seed = 0;
};

/// Gaussian cluster hierarchy: model clusters nest inside make clusters.
/// Cross-make model centers sit at least 2*make_separation*noise_sigma apart
/// and sibling model centers at least 2*model_separation*noise_sigma apart,
/// so the separation numbers read as per-side margins in noise units.
Dataset generate_synthetic(const SyntheticSpec& spec);

// Batch helpers shared by training and evaluation.
Tensor features_tensor(Tape& tape, const std::vector<Sample>& samples,
                       const std::vector<std::size_t>& order, std::size_t first, std::size_t count);
std::vector<int> model_labels(const std::vector<Sample>& samples);
std::vector<int> make_labels(const std::vector<Sample>& samples);

}  // namespace hiertask
