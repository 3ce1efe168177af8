#include "hiertask/taxonomy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "hiertask/rng.hpp"

namespace hiertask {

void Taxonomy::validate() const {
    if (makes.empty() || models.empty()) throw TaxonomyError("taxonomy has no classes");
    if (parent.size() != models.size())
        throw TaxonomyError("parent map covers " + std::to_string(parent.size()) + " of " +
                            std::to_string(models.size()) + " models");
    std::vector<std::size_t> children(makes.size(), 0);
    for (std::size_t i = 0; i < parent.size(); ++i) {
        if (parent[i] < 0 || static_cast<std::size_t>(parent[i]) >= makes.size())
            throw TaxonomyError("model '" + models[i] + "' has no valid parent make");
        ++children[static_cast<std::size_t>(parent[i])];
    }
    for (std::size_t k = 0; k < makes.size(); ++k)
        if (children[k] == 0) throw TaxonomyError("make '" + makes[k] + "' has no child model");
}

std::uint64_t Taxonomy::hash() const {
    std::uint64_t h = 14695981039346656037ull;
    auto feed = [&h](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ull;
        }
    };
    for (std::size_t i = 0; i < models.size(); ++i) {
        feed(models[i]);
        feed("\t");
        feed(makes[static_cast<std::size_t>(parent[i])]);
        feed("\n");
    }
    return h;
}

void Dataset::validate() const {
    taxonomy.validate();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Sample& s = samples[i];
        if (s.features.size() != feature_dim)
            throw DataError("sample " + std::to_string(i) + " has " +
                            std::to_string(s.features.size()) + " features, expected " +
                            std::to_string(feature_dim));
        if (s.model_label < 0 || static_cast<std::size_t>(s.model_label) >= taxonomy.model_count())
            throw LabelError("sample " + std::to_string(i) + " model label " +
                             std::to_string(s.model_label) + " out of range");
        if (s.make_label != taxonomy.parent[static_cast<std::size_t>(s.model_label)])
            throw TaxonomyError("sample " + std::to_string(i) + " make label " +
                                std::to_string(s.make_label) + " is not the parent of model '" +
                                taxonomy.models[static_cast<std::size_t>(s.model_label)] + "'");
    }
}

// ---- CSV helpers -------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

std::vector<double> read_feature_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open feature file " + path.string());
    in.seekg(0, std::ios::end);
    const std::streamoff bytes = in.tellg();
    in.seekg(0);
    if (bytes < 0 || bytes % 8 != 0)
        throw IoError("feature file " + path.string() + " is not a float64 vector");
    std::vector<double> v(static_cast<std::size_t>(bytes) / 8);
    in.read(reinterpret_cast<char*>(v.data()), bytes);
    if (!in) throw IoError("short read on feature file " + path.string());
    return v;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

Dataset load_manifest(const std::filesystem::path& path) {
    static_assert(std::endian::native == std::endian::little,
                  "feature files are little-endian float64");
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("manifest " + path.string() + " is empty");
    const std::vector<std::string> header = split_csv_line(line);
    if (header.size() < 4 || header[0] != "id" || header[1] != "make" || header[2] != "model")
        throw SchemaError("manifest header must start with id,make,model");
    const bool inline_features = header[3] != "feature_path";
    if (inline_features) {
        for (std::size_t i = 3; i < header.size(); ++i)
            if (header[i] != "f" + std::to_string(i - 3))
                throw SchemaError("manifest header column " + std::to_string(i) +
                                  " should be f" + std::to_string(i - 3) + ", got '" + header[i] +
                                  "'");
    } else if (header.size() != 4) {
        throw SchemaError("feature_path manifest must have exactly 4 columns");
    }

    Dataset data;
    std::map<std::string, int> make_index;
    std::map<std::string, int> model_index;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const std::vector<std::string> f = split_csv_line(line);
        if (f.size() != header.size())
            throw SchemaError("manifest row " + std::to_string(row) + " has " +
                              std::to_string(f.size()) + " fields, expected " +
                              std::to_string(header.size()));
        const std::string& make = f[1];
        const std::string& model = f[2];
        int make_id;
        if (auto it = make_index.find(make); it != make_index.end()) {
            make_id = it->second;
        } else {
            make_id = static_cast<int>(data.taxonomy.makes.size());
            make_index.emplace(make, make_id);
            data.taxonomy.makes.push_back(make);
        }
        int model_id;
        if (auto it = model_index.find(model); it != model_index.end()) {
            model_id = it->second;
            const int prior = data.taxonomy.parent[static_cast<std::size_t>(model_id)];
            if (prior != make_id)
                throw TaxonomyError(
                    "model '" + model + "' listed under both '" +
                    data.taxonomy.makes[static_cast<std::size_t>(prior)] + "' and '" + make + "'");
        } else {
            model_id = static_cast<int>(data.taxonomy.models.size());
            model_index.emplace(model, model_id);
            data.taxonomy.models.push_back(model);
            data.taxonomy.parent.push_back(make_id);
        }

        Sample s;
        s.model_label = model_id;
        s.make_label = make_id;
        if (inline_features) {
            s.features.reserve(header.size() - 3);
            for (std::size_t i = 3; i < f.size(); ++i) {
                try {
                    s.features.push_back(std::stod(f[i]));
                } catch (const std::exception&) {
                    throw DataError("manifest row " + std::to_string(row) +
                                    " has a non-numeric feature '" + f[i] + "'");
                }
            }
        } else {
            s.features = read_feature_file(path.parent_path() / f[3]);
        }
        if (data.samples.empty()) {
            data.feature_dim = s.features.size();
        } else if (s.features.size() != data.feature_dim) {
            throw DataError("manifest row " + std::to_string(row) + " has " +
                            std::to_string(s.features.size()) + " features, expected " +
                            std::to_string(data.feature_dim));
        }
        data.samples.push_back(std::move(s));
    }
    if (data.samples.empty()) throw DataError("manifest " + path.string() + " has no samples");
    data.validate();
    return data;
}

void write_manifest(const Dataset& data, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write manifest " + path.string());
    out << "id,make,model";
    for (std::size_t i = 0; i < data.feature_dim; ++i) out << ",f" << i;
    out << "\n";
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
        const Sample& s = data.samples[i];
        out << i << ',' << data.taxonomy.makes[static_cast<std::size_t>(s.make_label)] << ','
            << data.taxonomy.models[static_cast<std::size_t>(s.model_label)];
        for (double v : s.features) out << ',' << format_double(v);
        out << "\n";
    }
    if (!out) throw IoError("failed writing manifest " + path.string());
    std::filesystem::path tax_path = path;
    tax_path.replace_filename(path.stem().string() + "_taxonomy.csv");
    write_taxonomy_csv(data.taxonomy, tax_path);
}

void write_taxonomy_csv(const Taxonomy& taxonomy, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write taxonomy " + path.string());
    out << "model,make\n";
    for (std::size_t i = 0; i < taxonomy.models.size(); ++i)
        out << taxonomy.models[i] << ','
            << taxonomy.makes[static_cast<std::size_t>(taxonomy.parent[i])] << "\n";
    if (!out) throw IoError("failed writing taxonomy " + path.string());
}

// ---- splitting -----------------------------------------------------------------

DatasetSplit split_dataset(const std::vector<Sample>& samples, std::array<double, 3> ratios,
                           std::uint64_t seed) {
    double total = 0.0;
    for (double r : ratios) {
        if (r < 0.0) throw ConfigError("split ratios must be non-negative");
        total += r;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw ConfigError("split ratios sum to " + std::to_string(total) + ", expected 1");

    // bucket sample indices by model class, preserving input order
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < samples.size(); ++i)
        by_class[samples[i].model_label].push_back(i);

    DatasetSplit out;
    out.ratios = ratios;
    out.seed = seed;
    Rng rng = Rng::derive(seed, rng_stream::shuffle);
    for (auto& [cls, idx] : by_class) {
        if (idx.size() < 3) out.flagged_classes.push_back(cls);
        rng.shuffle(idx);
        const std::size_t n = idx.size();
        // largest-remainder allocation keeps every class within +-1 of target
        std::array<std::size_t, 3> counts{};
        std::array<double, 3> frac{};
        std::size_t assigned = 0;
        for (std::size_t s = 0; s < 3; ++s) {
            const double exact = static_cast<double>(n) * ratios[s];
            counts[s] = static_cast<std::size_t>(std::floor(exact + 1e-12));
            frac[s] = exact - static_cast<double>(counts[s]);
            assigned += counts[s];
        }
        std::array<std::size_t, 3> order{0, 1, 2};
        std::stable_sort(order.begin(), order.end(),
                         [&frac](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
        for (std::size_t r = 0; assigned < n; ++r, ++assigned) ++counts[order[r % 3]];

        std::size_t pos = 0;
        auto take = [&](std::vector<Sample>& dst, std::size_t count) {
            for (std::size_t i = 0; i < count; ++i, ++pos) dst.push_back(samples[idx[pos]]);
        };
        take(out.train, counts[0]);
        take(out.val, counts[1]);
        take(out.test, counts[2]);
    }
    return out;
}

// ---- synthetic generation ---------------------------------------------------------

namespace {

double distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

std::vector<double> unit_direction(std::size_t dim, Rng& rng) {
    while (true) {
        std::vector<double> v(dim);
        double norm = 0.0;
        for (double& x : v) {
            x = rng.normal();
            norm += x * x;
        }
        norm = std::sqrt(norm);
        if (norm > 1e-12) {
            for (double& x : v) x /= norm;
            return v;
        }
    }
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
    if (spec.makes == 0 || spec.models_per_make == 0 || spec.dim == 0 || spec.n_per_model == 0)
        throw ConfigError("synthetic spec counts must be positive");
    if (spec.noise_sigma < 0.0 || spec.make_separation < 0.0 || spec.model_separation < 0.0)
        throw ConfigError("synthetic spec separations and noise must be non-negative");

    constexpr std::size_t kAttempts = 1000;
    Rng rng = Rng::derive(spec.seed, rng_stream::data);

    const double sigma = spec.noise_sigma;
    const double sibling_gap = 2.0 * spec.model_separation * sigma;  // center-to-center floor
    const double foreign_gap = 2.0 * spec.make_separation * sigma;
    const double model_radius = sibling_gap;
    const double make_gap = foreign_gap + 2.0 * model_radius;
    // spread chosen so typical pairwise center distance lands at ~1.5x the
    // required gap; keeps per-coordinate magnitudes small in high dimension
    const double make_scale = 1.5 * make_gap / std::sqrt(2.0 * static_cast<double>(spec.dim));

    std::vector<std::vector<double>> make_centers;
    for (std::size_t k = 0; k < spec.makes; ++k) {
        bool placed = false;
        for (std::size_t attempt = 0; attempt < kAttempts && !placed; ++attempt) {
            std::vector<double> c(spec.dim);
            for (double& x : c) x = make_scale * rng.normal();
            placed = true;
            for (const auto& other : make_centers)
                if (distance(c, other) < make_gap) {
                    placed = false;
                    break;
                }
            if (placed) make_centers.push_back(std::move(c));
        }
        if (!placed)
            throw GenerationError("could not place make center " + std::to_string(k) + " after " +
                                  std::to_string(kAttempts) + " attempts in dimension " +
                                  std::to_string(spec.dim));
    }

    Dataset data;
    data.feature_dim = spec.dim;
    char name[64];
    for (std::size_t k = 0; k < spec.makes; ++k) {
        std::snprintf(name, sizeof(name), "make%02zu", k);
        data.taxonomy.makes.emplace_back(name);
    }

    std::vector<std::vector<double>> model_centers;
    for (std::size_t k = 0; k < spec.makes; ++k) {
        std::vector<std::vector<double>> siblings;
        for (std::size_t m = 0; m < spec.models_per_make; ++m) {
            bool placed = false;
            for (std::size_t attempt = 0; attempt < kAttempts && !placed; ++attempt) {
                std::vector<double> dir = unit_direction(spec.dim, rng);
                std::vector<double> c(spec.dim);
                for (std::size_t i = 0; i < spec.dim; ++i)
                    c[i] = make_centers[k][i] + model_radius * dir[i];
                placed = true;
                for (const auto& other : siblings)
                    if (distance(c, other) < sibling_gap) {
                        placed = false;
                        break;
                    }
                if (placed) siblings.push_back(std::move(c));
            }
            if (!placed)
                throw GenerationError("could not place model center " + std::to_string(m) +
                                      " of make " + std::to_string(k) + " after " +
                                      std::to_string(kAttempts) + " attempts");
            std::snprintf(name, sizeof(name), "make%02zu_model%zu", k, m);
            data.taxonomy.models.emplace_back(name);
            data.taxonomy.parent.push_back(static_cast<int>(k));
        }
        for (auto& c : siblings) model_centers.push_back(std::move(c));
    }

    for (std::size_t m = 0; m < model_centers.size(); ++m) {
        for (std::size_t i = 0; i < spec.n_per_model; ++i) {
            Sample s;
            s.features.resize(spec.dim);
            for (std::size_t d = 0; d < spec.dim; ++d)
                s.features[d] = model_centers[m][d] + sigma * rng.normal();
            s.model_label = static_cast<int>(m);
            s.make_label = data.taxonomy.parent[m];
            data.samples.push_back(std::move(s));
        }
    }
    data.validate();
    return data;
}

// ---- batch helpers ------------------------------------------------------------------

Tensor features_tensor(Tape& tape, const std::vector<Sample>& samples,
                       const std::vector<std::size_t>& order, std::size_t first,
                       std::size_t count) {
    if (first + count > order.size()) throw ContractError("batch range out of bounds");
    if (count == 0) throw ContractError("empty batch");
    const std::size_t dim = samples[order[first]].features.size();
    std::vector<double> vals(count * dim);
    for (std::size_t i = 0; i < count; ++i) {
        const Sample& s = samples[order[first + i]];
        if (s.features.size() != dim) throw DataError("ragged features in batch");
        std::copy(s.features.begin(), s.features.end(), vals.begin() + static_cast<std::ptrdiff_t>(i * dim));
    }
    return tape.leaf({count, dim}, std::move(vals), false);
}

std::vector<int> model_labels(const std::vector<Sample>& samples) {
    std::vector<int> v(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) v[i] = samples[i].model_label;
    return v;
}

std::vector<int> make_labels(const std::vector<Sample>& samples) {
    std::vector<int> v(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) v[i] = samples[i].make_label;
    return v;
}

}  // namespace hiertask
