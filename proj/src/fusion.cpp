#include "dehaze/fusion.hpp"

namespace dehaze {

AttentionMaps attention_from_logits(const nn::Var& logits, int out_h, int out_w)
{
    AttentionMaps maps;
    maps.logits = nn::resize_bilinear(logits, out_h, out_w);
    maps.weights = nn::softmax_channels(maps.logits);
    return maps;
}

AttentionTrunk::AttentionTrunk(nn::ParameterStore& store, int feature_channels, int arity,
                               const FusionConfig& config, nn::Rng& rng, nn::InitOptions init)
    : arity_(arity)
{
    if (arity < 1)
        throw ConfigError("attention trunk needs at least one component (got " + std::to_string(arity) + ")");
    if (config.hidden < 1)
        throw ConfigError("attention trunk hidden width must be positive");
    const nn::ConvOptions same{1, 1, 1};
    reduce_ = nn::Conv2d(store, "fusion.conv0", feature_channels, config.hidden, 1, {}, rng, init);
    spatial0_ = nn::Conv2d(store, "fusion.conv1", config.hidden, config.hidden, 3, same, rng, init);
    spatial1_ = nn::Conv2d(store, "fusion.conv2", config.hidden, config.hidden, 3, same, rng, init);
    score_ = nn::Conv2d(store, "fusion.conv3", config.hidden, arity, 1, {}, rng, init);
}

AttentionMaps AttentionTrunk::compute(const AggregatedFeatures& features, int out_h, int out_w) const
{
    nn::Var x = nn::relu(reduce_(features.shared));
    x = nn::relu(spatial0_(x));
    x = nn::relu(spatial1_(x));
    return attention_from_logits(score_(x), out_h, out_w);
}

nn::Var fuse(const std::vector<ComponentOutput>& outputs, const AttentionMaps& attention)
{
    if (outputs.empty() || static_cast<int>(outputs.size()) != attention.arity())
        throw ValidationError("fusion arity error: " + std::to_string(outputs.size()) + " components vs " +
                              std::to_string(attention.arity()) + " weight maps");
    std::vector<nn::Var> predictions;
    predictions.reserve(outputs.size());
    const auto ws = attention.weights.shape();
    for (const auto& out : outputs) {
        const auto s = out.prediction.shape();
        if (s.n != ws.n || s.h != ws.h || s.w != ws.w || s != outputs.front().prediction.shape())
            throw ValidationError("fusion arity error: component " + std::string(to_string(out.kind)) + " shape " +
                                  s.str() + " does not align with weights " + ws.str());
        predictions.push_back(out.prediction);
    }
    return nn::weighted_sum(predictions, attention.weights);
}

} // namespace dehaze
