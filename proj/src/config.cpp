#include "dehaze/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <type_traits>

namespace dehaze {

using nlohmann::json;

namespace {

struct Field {
    std::string key;
    std::function<json()> get;
    std::function<void(const json&)> set;
};

[[noreturn]] void bad_value(const std::string& key, const json& value, const char* expected)
{
    throw ConfigError("config key '" + key + "': expected " + expected + ", got " + value.dump());
}

// Strings are parsed as JSON so that environment values such as "300" or
// "true" reach numeric and boolean fields.
json coerce(const json& value)
{
    if (!value.is_string())
        return value;
    const auto parsed = json::parse(value.get<std::string>(), nullptr, false);
    return parsed.is_discarded() ? value : parsed;
}

template <class T>
Field field(std::string key, T& ref)
{
    Field f;
    f.key = key;
    f.get = [&ref] { return json(ref); };
    f.set = [&ref, key](const json& raw) {
        if constexpr (std::is_same_v<T, bool>) {
            const json v = coerce(raw);
            if (!v.is_boolean())
                bad_value(key, raw, "a boolean");
            ref = v.get<bool>();
        } else if constexpr (std::is_integral_v<T>) {
            const json v = coerce(raw);
            if (!v.is_number_integer() && !v.is_number_unsigned())
                bad_value(key, raw, "an integer");
            if (std::is_unsigned_v<T> && v.is_number_integer() && v.get<long long>() < 0)
                bad_value(key, raw, "a non-negative integer");
            ref = v.get<T>();
        } else if constexpr (std::is_floating_point_v<T>) {
            const json v = coerce(raw);
            if (!v.is_number())
                bad_value(key, raw, "a number");
            ref = v.get<T>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!raw.is_string())
                bad_value(key, raw, "a string");
            ref = raw.get<std::string>();
        } else if constexpr (std::is_same_v<T, std::vector<int>>) {
            const json v = coerce(raw);
            if (!v.is_array() || !std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number_integer(); }))
                bad_value(key, raw, "an array of integers");
            ref = v.get<std::vector<int>>();
        }
    };
    return f;
}

template <class E, class Parse, class Print>
Field enum_field(std::string key, E& ref, Parse parse, Print print)
{
    Field f;
    f.key = key;
    f.get = [&ref, print] { return json(std::string(print(ref))); };
    f.set = [&ref, parse, key](const json& raw) {
        if (!raw.is_string())
            bad_value(key, raw, "a string");
        ref = parse(raw.get<std::string>());
    };
    return f;
}

std::string_view split_name(Split s)
{
    switch (s) {
    case Split::All: return "all";
    case Split::Train: return "train";
    case Split::Test: return "test";
    }
    return "all";
}

std::vector<Field> model_fields(ModelConfig& m)
{
    auto& b = m.backbone;
    return {
        enum_field("model.backbone.profile", b.profile, parse_backbone_profile,
                  [](BackboneProfile p) { return to_string(p); }),
        field("model.backbone.tiny_levels", b.tiny_levels),
        field("model.backbone.tiny_widths", b.tiny_widths),
        field("model.backbone.full_blocks", b.full_blocks),
        field("model.backbone.cardinality", b.cardinality),
        field("model.backbone.group_width", b.group_width),
        field("model.backbone.aggregate_width", b.aggregate_width),
        field("model.backbone.working_stride", b.working_stride),
        field("model.backbone.init_std", b.init_std),
        field("model.backbone.pretrained_path", b.pretrained_path),
        field("model.heads.hidden", m.heads.hidden),
        field("model.heads.t_min", m.heads.t_min),
        field("model.heads.divide_by_t", m.heads.divide_by_t),
        field("model.heads.exp_eps", m.heads.exp_eps),
        field("model.heads.log_delta", m.heads.log_delta),
        field("model.fusion.hidden", m.fusion.hidden),
        field("model.init_seed", m.init_seed),
    };
}

std::vector<Field> train_fields(TrainConfig& t)
{
    std::vector<Field> fields{
        field("trainer.variant", t.variant),
        field("trainer.max_iters", t.max_iters),
        field("trainer.batch_size", t.batch_size),
        field("trainer.crop", t.crop),
        field("trainer.lr0", t.lr0),
        field("trainer.power", t.power),
        field("trainer.beta1", t.beta1),
        field("trainer.beta2", t.beta2),
        field("trainer.weight_decay", t.weight_decay),
        field("trainer.aux_weight", t.aux_weight),
        field("trainer.seed", t.seed),
        field("trainer.clip_grad", t.clip_grad),
        field("trainer.clip_norm", t.clip_norm),
        field("trainer.flip", t.flip),
        field("trainer.log_every", t.log_every),
        field("trainer.checkpoint_every", t.checkpoint_every),
        field("trainer.eval_every", t.eval_every),
        field("trainer.eval_count", t.eval_count),
        field("data.root", t.data.root),
        enum_field("data.layout", t.data.layout, parse_layout, [](DatasetLayout l) { return to_string(l); }),
        enum_field("data.split", t.data.split, parse_split, split_name),
        field("data.synthetic", t.data.synthetic),
        field("data.synthetic_size", t.data.synthetic_size),
        field("data.heldout", t.data.heldout),
    };
    for (auto& f : model_fields(t.model))
        fields.push_back(std::move(f));
    return fields;
}

json collect(const std::vector<Field>& fields)
{
    json out = json::object();
    for (const auto& f : fields)
        out[f.key] = f.get();
    return out;
}

void apply(std::vector<Field> fields, BackboneConfig& backbone, const json& flat)
{
    if (!flat.is_object())
        throw ConfigError("config must be a JSON object with dotted keys");
    if (auto it = flat.find("model.backbone.profile"); it != flat.end()) {
        if (!it->is_string())
            bad_value("model.backbone.profile", *it, "a string");
        const auto profile = parse_backbone_profile(it->get<std::string>());
        const auto pretrained = backbone.pretrained_path;
        backbone = profile == BackboneProfile::Full ? BackboneConfig::full() : BackboneConfig::tiny();
        backbone.pretrained_path = pretrained;
    }
    for (const auto& [key, value] : flat.items()) {
        if (key == "model.backbone.profile")
            continue;
        auto it = std::find_if(fields.begin(), fields.end(), [&](const Field& f) { return f.key == key; });
        if (it == fields.end())
            throw ConfigError("unknown config key '" + key + "'");
        it->set(value);
    }
}

} // namespace

std::vector<std::string> config_keys()
{
    TrainConfig scratch;
    std::vector<std::string> keys;
    for (const auto& f : train_fields(scratch))
        keys.push_back(f.key);
    std::sort(keys.begin(), keys.end());
    return keys;
}

json to_flat_json(const TrainConfig& cfg)
{
    TrainConfig copy = cfg;
    return collect(train_fields(copy));
}

json to_flat_json(const ModelConfig& cfg)
{
    ModelConfig copy = cfg;
    return collect(model_fields(copy));
}

void apply_config(TrainConfig& cfg, const json& flat)
{
    apply(train_fields(cfg), cfg.model.backbone, flat);
}

void apply_config(ModelConfig& cfg, const json& flat)
{
    apply(model_fields(cfg), cfg.backbone, flat);
}

json flatten(const json& object)
{
    json out = json::object();
    std::function<void(const std::string&, const json&)> walk = [&](const std::string& prefix, const json& node) {
        for (const auto& [key, value] : node.items()) {
            const std::string path = prefix.empty() ? key : prefix + "." + key;
            if (value.is_object())
                walk(path, value);
            else
                out[path] = value;
        }
    };
    walk("", object);
    return out;
}

json read_config_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config file " + path.string());
    const json parsed = json::parse(in, nullptr, false);
    if (parsed.is_discarded())
        throw ConfigError("config file " + path.string() + " is not valid JSON");
    if (!parsed.is_object())
        throw ConfigError("config file " + path.string() + " must contain a JSON object");
    return flatten(parsed);
}

json environment_overrides(const char* prefix)
{
    json out = json::object();
    for (const auto& key : config_keys()) {
        std::string name = prefix;
        for (char c : key)
            name += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        if (const char* value = std::getenv(name.c_str()))
            out[key] = std::string(value);
    }
    return out;
}

} // namespace dehaze
