#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "synthrad/errors.hpp"

namespace synthrad {

// Dimension sizes, N,C,H,W convention for image tensors.
using Shape = std::vector<int>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);
bool all_finite(std::span<const float> values);

struct TensorData {
    Shape shape;
    std::vector<float> data;     // flat, row-major
    bool requires_grad = false;
    std::vector<float> grad;     // empty until a gradient is accumulated
};

// Shared handle to a tensor buffer. Copies are shallow; tape nodes and model
// parameter stores alias the same storage.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, float value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<float> data, bool requires_grad = false);
    static Tensor scalar(float value);

    bool defined() const { return static_cast<bool>(p_); }
    const Shape& shape() const { return p_->shape; }
    int ndim() const { return static_cast<int>(p_->shape.size()); }
    int dim(int i) const { return p_->shape[static_cast<std::size_t>(i)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(p_->data.size()); }

    std::span<float> data() { return p_->data; }
    std::span<const float> data() const { return p_->data; }

    bool requires_grad() const { return p_->requires_grad; }
    void set_requires_grad(bool on) { p_->requires_grad = on; }

    bool has_grad() const { return !p_->grad.empty(); }
    std::span<float> grad();
    std::span<const float> grad() const;
    void ensure_grad();  // allocate zero-filled gradient if missing
    void zero_grad();    // zero in place, keeping the buffer
    void clear_grad();   // drop the buffer

    // Scalar value; requires size() == 1.
    float item() const;

    // Deep copy of data (gradients are not copied).
    Tensor clone() const;

    TensorData* raw() const { return p_.get(); }

  private:
    explicit Tensor(std::shared_ptr<TensorData> p) : p_(std::move(p)) {}
    std::shared_ptr<TensorData> p_;
};

// FNV-1a over the raw float bytes; used for determinism and isolation checks.
std::uint64_t hash_bytes(std::span<const float> values, std::uint64_t seed = 0xcbf29ce484222325ull);

}  // namespace synthrad
