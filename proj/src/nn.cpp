#include "synthrad/nn.hpp"

#include <cmath>

namespace synthrad {

Tensor ParamStore::add(const std::string& name, Tensor t) {
    if (find(name)) throw ConfigError("ParamStore: duplicate parameter name '" + name + "'");
    t.set_requires_grad(true);
    items_.emplace_back(name, t);
    return t;
}

Tensor* ParamStore::find(const std::string& name) {
    for (auto& [n, t] : items_)
        if (n == name) return &t;
    return nullptr;
}

const Tensor* ParamStore::find(const std::string& name) const {
    for (auto& [n, t] : items_)
        if (n == name) return &t;
    return nullptr;
}

std::int64_t ParamStore::total_size() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : items_) n += t.size();
    return n;
}

void ParamStore::zero_grads() {
    for (auto& [name, t] : items_)
        if (t.has_grad()) t.zero_grad();
}

std::uint64_t ParamStore::data_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& [name, t] : items_) h = hash_bytes(t.data(), h);
    return h;
}

void ParamStore::check_finite(const std::string& context) const {
    for (const auto& [name, t] : items_)
        if (!all_finite(t.data()))
            throw NumericError(context + ": parameter '" + name + "' is not finite");
}

Tensor he_normal(Shape shape, int fan_in, Rng& rng, float gain) {
    Tensor t = Tensor::zeros(std::move(shape));
    const float stddev = gain * std::sqrt(2.0f / static_cast<float>(fan_in));
    for (auto& v : t.data()) v = stddev * rng.normal_f32();
    return t;
}

Conv2dLayer::Conv2dLayer(ParamStore& params, const std::string& name, int in_ch, int out_ch,
                         int k, Rng& rng, float gain) {
    w = params.add(name + ".w", he_normal({out_ch, in_ch, k, k}, in_ch * k * k, rng, gain));
    b = params.add(name + ".b", Tensor::zeros({out_ch}));
}

Tensor Conv2dLayer::forward(const Tensor& x, Tape* tape) const {
    return ops::add_bias(ops::conv2d(x, w, tape), b, tape);
}

LinearLayer::LinearLayer(ParamStore& params, const std::string& name, int in_features,
                         int out_features, Rng& rng, float gain) {
    w = params.add(name + ".w", he_normal({in_features, out_features}, in_features, rng, gain));
    b = params.add(name + ".b", Tensor::zeros({out_features}));
}

Tensor LinearLayer::forward(const Tensor& x, Tape* tape) const {
    return ops::add_bias(ops::matmul(x, w, tape), b, tape);
}

GroupNormLayer::GroupNormLayer(ParamStore& params, const std::string& name, int channels,
                               int groups_in)
    : groups(groups_in) {
    gamma = params.add(name + ".gamma", Tensor::full({channels}, 1.0f));
    beta = params.add(name + ".beta", Tensor::zeros({channels}));
}

Tensor GroupNormLayer::forward(const Tensor& x, Tape* tape) const {
    return ops::group_norm(x, gamma, beta, groups, tape);
}

}  // namespace synthrad
