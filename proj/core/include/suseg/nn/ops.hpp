#pragma once

#include "suseg/nn/tensor.hpp"

namespace suseg::nn {

// One value in the computation graph. Backward passes run the recorded
// closures in reverse creation order, so each op only needs to push its
// output gradient to its parents.
struct Node {
    Tensor val;
    Tensor grad;
    std::function<void()> back;
};

class Tape {
  public:
    Node* make(std::array<int, 4> shape) {
        nodes_.push_back(std::make_unique<Node>());
        Node* n = nodes_.back().get();
        n->val = Tensor(shape);
        n->grad = Tensor(shape);
        return n;
    }
    // Leaf referencing a parameter; its gradient accumulates into the param.
    Node* leaf(Param& p);
    // Leaf holding constant input data (no gradient propagation).
    Node* input(std::array<int, 4> shape, const float* data);

    void backward();

  private:
    std::vector<std::unique_ptr<Node>> nodes_;
};

enum class PoolKind { Max, Avg };

// All convolutions are stride-1 with zero "same" padding.
// Weight layout: shape {out_ch, in_ch, kx*ky*kz, 1}, taps in (kx,ky,kz)
// x-fastest order. Dilation applies per axis.
Node* conv(Tape& t, Node* x, Param& w, Param& b, std::array<int, 3> ksize,
           std::array<int, 3> dilation = {1, 1, 1});

Node* instance_norm(Tape& t, Node* x, Param& gamma, Param& beta, float eps = 1e-5f);
Node* relu(Tape& t, Node* x);
Node* sigmoid(Tape& t, Node* x);

// Factor-2 pooling per axis (factor 1 leaves the axis untouched). Pooled axes
// must have even extent.
Node* pool(Tape& t, Node* x, PoolKind kind, std::array<int, 3> factors);

// alpha_raw is a single unconstrained scalar; the blend coefficient is
// sigmoid(alpha_raw): out = a*maxpool + (1-a)*avgpool.
Node* mixed_pool(Tape& t, Node* x, Param& alpha_raw, std::array<int, 3> factors);

// Tri/bilinear resize to a target spatial shape, voxel centers aligned.
Node* upsample_linear(Tape& t, Node* x, std::array<int, 3> target);

Node* concat_channels(Tape& t, const std::vector<Node*>& xs);

} // namespace suseg::nn
