#include "hiertask/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace hiertask {

namespace {

constexpr char kMagic[5] = {'H', 'T', 'M', 'T', '1'};

static_assert(std::endian::native == std::endian::little,
              "checkpoints store little-endian float64 tensors");

nlohmann::json encoder_spec_to_json(const EncoderSpec& spec) {
    return {{"family", to_string(spec.family)},
            {"input_shape", spec.input_shape},
            {"feature_dim", spec.feature_dim},
            {"hidden", spec.hidden},
            {"tokens", spec.tokens},
            {"attn_dim", spec.attn_dim}};
}

EncoderSpec encoder_spec_from_json(const nlohmann::json& j) {
    EncoderSpec spec;
    spec.family = encoder_family_from_string(j.at("family").get<std::string>());
    spec.input_shape = j.at("input_shape").get<std::vector<std::size_t>>();
    spec.feature_dim = j.at("feature_dim").get<std::size_t>();
    spec.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    spec.tokens = j.at("tokens").get<std::size_t>();
    spec.attn_dim = j.at("attn_dim").get<std::size_t>();
    return spec;
}

}  // namespace

void save_checkpoint(MtlNetwork& net, const std::filesystem::path& path) {
    nlohmann::json manifest = {
        {"mode", to_string(net.mode())},
        {"encoder", encoder_spec_to_json(net.config().encoder)},
        {"dropout_rate", net.config().dropout_rate},
        {"dropout_on_make_logits", net.config().dropout_on_make_logits},
        {"make_count", net.taxonomy().make_count()},
        {"model_count", net.taxonomy().model_count()},
        {"taxonomy_hash", net.taxonomy().hash()},
    };
    nlohmann::json shapes = nlohmann::json::array();
    for (Parameter* p : net.parameters()) shapes.push_back(p->shape);
    manifest["param_shapes"] = std::move(shapes);
    const std::string text = manifest.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof(kMagic));
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (Parameter* p : net.parameters())
        out.write(reinterpret_cast<const char*>(p->value.data()),
                  static_cast<std::streamsize>(p->value.size() * sizeof(double)));
    if (!out) throw IoError("failed writing checkpoint " + path.string());
}

namespace {

nlohmann::json read_manifest_json(std::ifstream& in, const std::filesystem::path& path) {
    char magic[5];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw IoError("checkpoint " + path.string() + " has a bad magic header");
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (!in) throw IoError("checkpoint " + path.string() + " is truncated");
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw IoError("checkpoint " + path.string() + " is truncated");
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("checkpoint " + path.string() + " manifest is invalid: " + e.what());
    }
}

CheckpointManifest manifest_from_json(const nlohmann::json& j) {
    CheckpointManifest m;
    m.config.mode = architecture_mode_from_string(j.at("mode").get<std::string>());
    m.config.encoder = encoder_spec_from_json(j.at("encoder"));
    m.config.dropout_rate = j.at("dropout_rate").get<double>();
    m.config.dropout_on_make_logits = j.at("dropout_on_make_logits").get<bool>();
    m.make_count = j.at("make_count").get<std::size_t>();
    m.model_count = j.at("model_count").get<std::size_t>();
    m.taxonomy_hash = j.at("taxonomy_hash").get<std::uint64_t>();
    m.param_shapes = j.at("param_shapes").get<std::vector<std::vector<std::size_t>>>();
    return m;
}

}  // namespace

CheckpointManifest read_checkpoint_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    return manifest_from_json(read_manifest_json(in, path));
}

MtlNetwork load_checkpoint(const std::filesystem::path& path, const Taxonomy& taxonomy) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    const CheckpointManifest m = manifest_from_json(read_manifest_json(in, path));
    if (taxonomy.hash() != m.taxonomy_hash)
        throw TaxonomyError("taxonomy does not match the one the checkpoint was trained on");
    if (taxonomy.make_count() != m.make_count || taxonomy.model_count() != m.model_count)
        throw TaxonomyError("taxonomy class counts do not match the checkpoint");

    MtlNetwork net(m.config, taxonomy, 0);
    const std::vector<Parameter*> params = net.parameters();
    if (params.size() != m.param_shapes.size())
        throw IoError("checkpoint stores " + std::to_string(m.param_shapes.size()) +
                      " tensors, network has " + std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->shape != m.param_shapes[i])
            throw IoError("checkpoint tensor " + std::to_string(i) + " has shape " +
                          shape_str(m.param_shapes[i]) + ", network expects " +
                          shape_str(params[i]->shape));
        in.read(reinterpret_cast<char*>(params[i]->value.data()),
                static_cast<std::streamsize>(params[i]->value.size() * sizeof(double)));
        if (!in) throw IoError("checkpoint " + path.string() + " is truncated");
    }
    return net;
}

}  // namespace hiertask
