#include "dehaze/checkpoint.hpp"

#include "dehaze/config.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

namespace dehaze {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'D', 'H', 'Z', 'K', 'C', 'K', 'P', 'T'};
constexpr std::uint64_t kProbeSeed = 0x5eed;
constexpr double kProbeTolerance = 1e-6;

std::uint64_t fnv1a(const char* data, std::size_t n)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= static_cast<unsigned char>(data[i]);
        h *= 0x100000001b3ull;
    }
    return h;
}

template <class T>
void put(std::string& buf, T value)
{
    char raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    buf.append(raw, sizeof(T));
}

int probe_size(const ModelConfig& cfg)
{
    return std::max(16, cfg.backbone.level_strides().back());
}

struct ParsedCheckpoint {
    json header;
    std::vector<std::pair<std::string, nn::Tensor>> tensors;
};

[[noreturn]] void parse_error(const std::filesystem::path& path, const std::string& what)
{
    throw IoError("checkpoint parse error in " + path.string() + ": " + what);
}

ParsedCheckpoint parse(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open checkpoint " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    const std::size_t fixed = sizeof kMagic + sizeof(std::uint32_t) + sizeof(std::uint64_t);
    if (bytes.size() < fixed + sizeof(std::uint64_t))
        parse_error(path, "file too short");
    if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
        parse_error(path, "bad magic");
    std::uint64_t stored_hash = 0;
    std::memcpy(&stored_hash, bytes.data() + bytes.size() - sizeof stored_hash, sizeof stored_hash);
    if (fnv1a(bytes.data(), bytes.size() - sizeof stored_hash) != stored_hash)
        parse_error(path, "checksum mismatch (file corrupted or truncated)");

    std::uint32_t version = 0;
    std::memcpy(&version, bytes.data() + sizeof kMagic, sizeof version);
    if (version != kCheckpointVersion)
        parse_error(path, "unsupported format version " + std::to_string(version));
    std::uint64_t header_len = 0;
    std::memcpy(&header_len, bytes.data() + sizeof kMagic + sizeof version, sizeof header_len);
    const std::size_t payload_end = bytes.size() - sizeof stored_hash;
    if (header_len > payload_end - fixed)
        parse_error(path, "header length out of range");

    ParsedCheckpoint out;
    out.header = json::parse(bytes.begin() + fixed, bytes.begin() + static_cast<std::ptrdiff_t>(fixed + header_len),
                             nullptr, false);
    if (out.header.is_discarded() || !out.header.is_object())
        parse_error(path, "header is not a JSON object");

    try {
        std::size_t offset = fixed + header_len;
        for (const auto& entry : out.header.at("params")) {
            const auto dims = entry.at("shape").get<std::vector<int>>();
            if (dims.size() != 4 || std::any_of(dims.begin(), dims.end(), [](int d) { return d < 0; }))
                parse_error(path, "bad tensor shape");
            nn::Tensor t(nn::Shape{dims[0], dims[1], dims[2], dims[3]});
            const std::size_t n = t.numel() * sizeof(float);
            if (n > payload_end - offset)
                parse_error(path, "payload truncated");
            std::memcpy(t.data(), bytes.data() + offset, n);
            offset += n;
            out.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(t));
        }
        if (offset != payload_end)
            parse_error(path, "trailing payload bytes");
    } catch (const json::exception& e) {
        parse_error(path, e.what());
    }
    return out;
}

ModelConfig header_model_config(const json& header, const std::filesystem::path& path)
{
    ModelConfig cfg;
    try {
        apply_config(cfg, header.at("model"));
    } catch (const json::exception& e) {
        parse_error(path, e.what());
    } catch (const ConfigError& e) {
        parse_error(path, e.what());
    }
    return cfg;
}

std::vector<ComponentKind> header_kinds(const json& header, const std::filesystem::path& path)
{
    std::vector<ComponentKind> kinds;
    try {
        for (const auto& k : header.at("kinds"))
            kinds.push_back(parse_kind(k.get<std::string>()));
    } catch (const json::exception& e) {
        parse_error(path, e.what());
    } catch (const ConfigError& e) {
        parse_error(path, e.what());
    }
    return kinds;
}

std::string kinds_text(const std::vector<ComponentKind>& kinds)
{
    std::string s;
    for (auto k : kinds)
        s += (s.empty() ? "" : ",") + std::string(to_string(k));
    return s;
}

// Copies checkpoint tensors into the model after checking every name and
// shape, so a mismatch leaves the model untouched.
void assign(ModelAssembly& model, const ParsedCheckpoint& ckpt, const std::filesystem::path& path)
{
    const auto& entries = model.parameters().entries();
    if (entries.size() != ckpt.tensors.size())
        throw ConfigError("incompatible checkpoint " + path.string() + ": parameter count " +
                          std::to_string(ckpt.tensors.size()) + " vs " + std::to_string(entries.size()));
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& [name, tensor] = ckpt.tensors[i];
        if (entries[i].name != name || entries[i].var.shape() != tensor.shape())
            throw ConfigError("incompatible checkpoint " + path.string() + ": parameter " + name + " " +
                              tensor.shape().str() + " does not match " + entries[i].name + " " +
                              entries[i].var.shape().str());
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
        nn::Var v = entries[i].var;
        v.mutable_value() = ckpt.tensors[i].second;
    }
}

CheckpointExtras header_extras(const json& header)
{
    CheckpointExtras extras;
    extras.iteration = header.value("iteration", 0L);
    extras.train_config = header.value("train", json::object());
    extras.rng_state = header.value("rng_state", std::string());
    return extras;
}

void verify_probe(const ModelAssembly& model, const json& header, const std::filesystem::path& path)
{
    const auto& probe = header.at("probe");
    const int size = probe.at("size").get<int>();
    const auto seed = probe.at("seed").get<std::uint64_t>();
    const auto expected = probe.at("output").get<std::vector<float>>();
    const nn::Tensor actual = probe_output(model, size, seed);
    if (actual.numel() != expected.size())
        throw Error("checkpoint probe mismatch in " + path.string() + ": output size differs");
    for (std::size_t i = 0; i < expected.size(); ++i) {
        if (!(std::abs(static_cast<double>(actual[i]) - expected[i]) <= kProbeTolerance))
            throw Error("checkpoint probe mismatch in " + path.string() + " at element " + std::to_string(i));
    }
}

} // namespace

nn::Tensor probe_input(int size, std::uint64_t seed)
{
    nn::Rng rng(seed);
    std::uniform_real_distribution<float> dist(0.0f, 1.0f);
    nn::Tensor t(nn::Shape{1, 3, size, size});
    for (auto& v : t.values())
        v = dist(rng);
    return t;
}

nn::Tensor probe_output(const ModelAssembly& model, int size, std::uint64_t seed)
{
    nn::NoGradGuard no_grad;
    return model.forward(nn::Var(probe_input(size, seed))).fused.value();
}

void save_checkpoint(const std::filesystem::path& path, const ModelAssembly& model, const CheckpointExtras& extras)
{
    json header;
    header["variant"] = model.spec().name;
    json kinds = json::array();
    for (auto k : model.kinds())
        kinds.push_back(std::string(to_string(k)));
    header["kinds"] = kinds;
    header["model"] = to_flat_json(model.config());
    header["train"] = extras.train_config;
    header["iteration"] = extras.iteration;
    header["rng_state"] = extras.rng_state;
    json params = json::array();
    for (const auto& p : model.parameters().entries()) {
        const auto& s = p.var.shape();
        params.push_back({{"name", p.name}, {"shape", {s.n, s.c, s.h, s.w}}});
    }
    header["params"] = params;
    const int size = probe_size(model.config());
    const nn::Tensor probe = probe_output(model, size, kProbeSeed);
    header["probe"] = {{"seed", kProbeSeed},
                       {"size", size},
                       {"output", std::vector<float>(probe.values().begin(), probe.values().end())}};

    const std::string text = header.dump();
    std::string buf(kMagic, sizeof kMagic);
    put(buf, kCheckpointVersion);
    put(buf, static_cast<std::uint64_t>(text.size()));
    buf += text;
    for (const auto& p : model.parameters().entries())
        buf.append(reinterpret_cast<const char*>(p.var.value().data()), p.var.value().numel() * sizeof(float));
    put(buf, fnv1a(buf.data(), buf.size()));

    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw IoError("cannot write checkpoint " + tmp.string());
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!out)
            throw IoError("cannot write checkpoint " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path)
{
    const ParsedCheckpoint ckpt = parse(path);
    const ModelConfig cfg = header_model_config(ckpt.header, path);
    VariantSpec spec;
    try {
        spec.name = ckpt.header.at("variant").get<std::string>();
    } catch (const json::exception& e) {
        parse_error(path, e.what());
    }
    spec.active_kinds = header_kinds(ckpt.header, path);
    LoadedCheckpoint out{build_variant(spec, cfg), header_extras(ckpt.header)};
    assign(out.model, ckpt, path);
    verify_probe(out.model, ckpt.header, path);
    return out;
}

CheckpointExtras load_checkpoint_into(ModelAssembly& model, const std::filesystem::path& path)
{
    const ParsedCheckpoint ckpt = parse(path);
    const auto kinds = header_kinds(ckpt.header, path);
    if (kinds != model.kinds())
        throw ConfigError("incompatible checkpoint " + path.string() + ": heads " + kinds_text(kinds) +
                          " vs model heads " + kinds_text(model.kinds()));
    ModelConfig stored = header_model_config(ckpt.header, path);
    ModelConfig current = model.config();
    stored.backbone.pretrained_path.clear();
    current.backbone.pretrained_path.clear();
    stored.init_seed = current.init_seed;
    if (!(stored == current))
        throw ConfigError("incompatible checkpoint " + path.string() + ": model architecture differs");
    assign(model, ckpt, path);
    return header_extras(ckpt.header);
}

std::size_t load_backbone_weights(ModelAssembly& model, const std::filesystem::path& path)
{
    const ParsedCheckpoint ckpt = parse(path);
    std::size_t copied = 0;
    for (const auto& [name, tensor] : ckpt.tensors) {
        if (!name.starts_with("backbone."))
            continue;
        nn::Var target = model.parameters().find(name);
        if (target.defined() && target.shape() == tensor.shape()) {
            target.mutable_value() = tensor;
            ++copied;
        }
    }
    return copied;
}

} // namespace dehaze
