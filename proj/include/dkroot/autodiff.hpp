#pragma once

// Reverse-mode autodiff over a per-evaluation tape. Nodes are owned by the
// Tape and live only for one loss evaluation; creation order is the
// topological order used for the backward sweep.

#include <deque>
#include <functional>
#include <vector>

#include "dkroot/params.hpp"
#include "dkroot/tensor.hpp"

namespace dkroot::nn {

class Tape;

struct Node {
    Tensor value;
    Tensor grad;  // same shape as value, zero-initialized
    std::function<void(Node&)> backprop;  // reads this->grad, accumulates into inputs
    Tape* tape = nullptr;
};

using NodeRef = Node*;

class Tape {
public:
    NodeRef leaf(Tensor v);
    // Leaf bound to a trainable parameter; backward() accumulates into p.grad.
    NodeRef param(Param& p);
    NodeRef make(Tensor v, std::function<void(Node&)> back);

    // root must be scalar; seeds d(root)=1 and sweeps the tape in reverse.
    void backward(NodeRef root);

    std::size_t size() const { return nodes_.size(); }

private:
    std::deque<Node> nodes_;
};

// -- primitives ---------------------------------------------------------

NodeRef add(NodeRef a, NodeRef b);
NodeRef sub(NodeRef a, NodeRef b);
NodeRef mul(NodeRef a, NodeRef b);           // elementwise
NodeRef smul(NodeRef a, double c);
NodeRef relu(NodeRef x);
NodeRef conv1d(NodeRef x, NodeRef w, NodeRef b, std::size_t stride = 1);
NodeRef dense(NodeRef x, NodeRef w, NodeRef b);
NodeRef upsample2(NodeRef x);
NodeRef concat_rows(NodeRef a, NodeRef b);
NodeRef broadcast_time(NodeRef v, std::size_t l);
NodeRef row(NodeRef table, std::size_t idx);  // [N,d] -> [d]
NodeRef flatten(NodeRef x);
NodeRef sum(NodeRef x);                       // -> scalar
NodeRef mean(NodeRef x);                      // -> scalar
NodeRef mse(NodeRef a, NodeRef b);            // mean squared error -> scalar
NodeRef l2_normalize_flatten(NodeRef x);      // vec(x)/||vec(x)||, errors on zero
NodeRef stack_rows(const std::vector<NodeRef>& rows);  // R x [D] -> [R,D]
NodeRef gram(NodeRef f);                      // F F^T : [R,D] -> [R,R]

// Stable log-softmax cross-entropy against an integer class (0-based).
NodeRef cross_entropy_logits(NodeRef logits, std::size_t label);

// Supervised contrastive loss over a gram matrix of raw dot products.
// labels: one entry per row of the gram matrix (views already duplicated).
// Anchors with no positives are skipped and the divisor shrinks accordingly.
NodeRef supcon(NodeRef sim, const std::vector<int>& labels, double tau);

}  // namespace dkroot::nn
