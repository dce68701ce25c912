#include "synthrad/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace synthrad {

std::int64_t numel(const Shape& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ',';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

bool all_finite(std::span<const float> values) {
    for (float v : values)
        if (!std::isfinite(v)) return false;
    return true;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    for (int d : shape)
        if (d <= 0) throw ShapeError("Tensor: non-positive dimension in " + shape_str(shape));
    auto p = std::make_shared<TensorData>();
    p->data.assign(static_cast<std::size_t>(numel(shape)), 0.0f);
    p->shape = std::move(shape);
    p->requires_grad = requires_grad;
    return Tensor(std::move(p));
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (auto& v : t.data()) v = value;
    return t;
}

Tensor Tensor::from(Shape shape, std::vector<float> data, bool requires_grad) {
    if (numel(shape) != static_cast<std::int64_t>(data.size()))
        throw ShapeError("Tensor: " + shape_str(shape) + " does not hold " +
                         std::to_string(data.size()) + " values");
    auto p = std::make_shared<TensorData>();
    p->shape = std::move(shape);
    p->data = std::move(data);
    p->requires_grad = requires_grad;
    return Tensor(std::move(p));
}

Tensor Tensor::scalar(float value) { return from({1}, {value}); }

std::span<float> Tensor::grad() {
    if (!has_grad()) throw Error("Tensor::grad: no gradient allocated");
    return p_->grad;
}

std::span<const float> Tensor::grad() const {
    if (!has_grad()) throw Error("Tensor::grad: no gradient allocated");
    return p_->grad;
}

void Tensor::ensure_grad() {
    if (p_->grad.empty()) p_->grad.assign(p_->data.size(), 0.0f);
}

void Tensor::zero_grad() {
    std::fill(p_->grad.begin(), p_->grad.end(), 0.0f);
}

void Tensor::clear_grad() { p_->grad.clear(); }

float Tensor::item() const {
    if (size() != 1)
        throw ShapeError("Tensor::item: expected scalar, got " + shape_str(p_->shape));
    return p_->data[0];
}

Tensor Tensor::clone() const {
    auto p = std::make_shared<TensorData>();
    p->shape = p_->shape;
    p->data = p_->data;
    p->requires_grad = p_->requires_grad;
    return Tensor(std::move(p));
}

std::uint64_t hash_bytes(std::span<const float> values, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (float v : values) {
        std::uint32_t bits = 0;
        std::memcpy(&bits, &v, sizeof(bits));
        for (int b = 0; b < 4; ++b) {
            h ^= (bits >> (8 * b)) & 0xffu;
            h *= 0x100000001b3ull;
        }
    }
    return h;
}

}  // namespace synthrad
