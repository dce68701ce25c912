#include "synthrad/tape.hpp"

#include <unordered_set>

namespace synthrad {

void Tape::record(const char* op, std::vector<Tensor> inputs, Tensor output,
                  std::function<void(const TapeNode&)> backward) {
    nodes_.push_back(TapeNode{op, std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1)
        throw ShapeError("backpropagate: loss must be a defined scalar tensor");

    Tensor seed = loss;
    seed.ensure_grad();
    seed.grad()[0] += 1.0f;

    // Only nodes on the path from `loss` participate; stale gradient buffers
    // from earlier backward calls must not re-propagate.
    std::unordered_set<TensorData*> reached;
    reached.insert(seed.raw());
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        const TapeNode& node = *it;
        if (!reached.count(node.output.raw())) continue;
        for (const Tensor& input : node.inputs) {
            Tensor in = input;
            in.ensure_grad();
            reached.insert(in.raw());
        }
        node.backward(node);
    }

    // Requires-grad tensors the loss never touched still get (zero) grads.
    for (auto& node : nodes_) {
        for (const Tensor& input : node.inputs) {
            if (input.requires_grad()) {
                Tensor in = input;
                in.ensure_grad();
            }
        }
        if (node.output.requires_grad()) {
            Tensor out = node.output;
            out.ensure_grad();
        }
    }
}

}  // namespace synthrad
