#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "synthrad/nn.hpp"
#include "synthrad/tensor.hpp"

namespace synthrad {

struct AdamConfig {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

// Standard Adam with bias correction. Moment buffers are keyed by parameter
// name so optimizer state survives checkpointing and model growth (new
// parameters get fresh zero moments on first sight).
class Adam {
  public:
    explicit Adam(AdamConfig config = {}) : config_(config) {}

    // One update over every parameter in the store. Requires every parameter
    // to carry a gradient; zeroes the gradients afterwards. Throws
    // NumericError if an update would produce a non-finite parameter.
    void step(ParamStore& params);

    std::int64_t t() const { return t_; }
    const AdamConfig& config() const { return config_; }

    // Checkpoint support: moment buffers in deterministic (name) order.
    struct MomentEntry {
        std::string name;
        const std::vector<float>* m;
        const std::vector<float>* v;
    };
    std::vector<MomentEntry> moments() const;
    void restore(const std::string& name, std::vector<float> m, std::vector<float> v);
    void set_t(std::int64_t t) { t_ = t; }

  private:
    struct Slot {
        std::vector<float> m, v;
    };
    AdamConfig config_;
    std::map<std::string, Slot> slots_;
    std::int64_t t_ = 0;
};

}  // namespace synthrad
