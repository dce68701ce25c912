#pragma once

#include <string>
#include <utility>
#include <vector>

#include "synthrad/ops.hpp"
#include "synthrad/rng.hpp"
#include "synthrad/tensor.hpp"

namespace synthrad {

// Ordered, name-addressed collection of trainable tensors. Order is the
// registration order, which fixes checkpoint block order and hash order.
class ParamStore {
  public:
    Tensor add(const std::string& name, Tensor t);
    Tensor* find(const std::string& name);
    const Tensor* find(const std::string& name) const;
    const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
    std::int64_t total_size() const;
    void zero_grads();
    // FNV over all parameter bytes in registration order.
    std::uint64_t data_hash() const;
    // Throws NumericError naming the first non-finite parameter.
    void check_finite(const std::string& context) const;

  private:
    std::vector<std::pair<std::string, Tensor>> items_;
};

// He-normal initialization: N(0, sqrt(2 / fan_in)), optionally rescaled.
Tensor he_normal(Shape shape, int fan_in, Rng& rng, float gain = 1.0f);

struct Conv2dLayer {
    Tensor w, b;
    Conv2dLayer() = default;
    // k x k kernel, stride 1, same padding; weights He-init, bias zero.
    Conv2dLayer(ParamStore& params, const std::string& name, int in_ch, int out_ch, int k,
                Rng& rng, float gain = 1.0f);
    Tensor forward(const Tensor& x, Tape* tape) const;
};

struct LinearLayer {
    Tensor w, b;
    LinearLayer() = default;
    LinearLayer(ParamStore& params, const std::string& name, int in_features, int out_features,
                Rng& rng, float gain = 1.0f);
    Tensor forward(const Tensor& x, Tape* tape) const;
};

struct GroupNormLayer {
    Tensor gamma, beta;
    int groups = 1;
    GroupNormLayer() = default;
    GroupNormLayer(ParamStore& params, const std::string& name, int channels, int groups);
    Tensor forward(const Tensor& x, Tape* tape) const;
};

}  // namespace synthrad
