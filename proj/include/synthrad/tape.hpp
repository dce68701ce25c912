#pragma once

#include <functional>
#include <vector>

#include "synthrad/tensor.hpp"

namespace synthrad {

// One recorded operation. `backward` reads the output gradient and
// accumulates into the input gradients; saved intermediates live in the
// closure. Inputs always precede their node on the tape.
struct TapeNode {
    const char* op;
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void(const TapeNode&)> backward;
};

// Wengert list for reverse-mode differentiation. Ops append nodes in
// execution order; backward() replays them once in reverse.
class Tape {
  public:
    void record(const char* op, std::vector<Tensor> inputs, Tensor output,
                std::function<void(const TapeNode&)> backward);

    // Fills d(loss)/d(tensor) for every tensor reachable from `loss`,
    // accumulating additively across fan-out. Every requires_grad tensor on
    // the tape ends up with a gradient buffer (zeros when the loss does not
    // depend on it). Tensors never recorded on this tape are left untouched.
    void backward(const Tensor& loss);

    std::size_t size() const { return nodes_.size(); }
    const TapeNode& node(std::size_t i) const { return nodes_[i]; }
    void clear() { nodes_.clear(); }

  private:
    std::vector<TapeNode> nodes_;
};

}  // namespace synthrad
