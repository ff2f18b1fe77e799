#include "dkroot/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "dkroot/kernels.hpp"

namespace dkroot::nn {

NodeRef Tape::leaf(Tensor v) { return make(std::move(v), nullptr); }

NodeRef Tape::param(Param& p) {
    Param* pp = &p;
    NodeRef n = make(p.value, nullptr);
    n->backprop = [pp](Node& self) { pp->grad += self.grad; };
    return n;
}

NodeRef Tape::make(Tensor v, std::function<void(Node&)> back) {
    nodes_.emplace_back();
    Node& n = nodes_.back();
    n.value = std::move(v);
    n.grad = Tensor::zeros(n.value.shape);
    n.backprop = std::move(back);
    n.tape = this;
    return &n;
}

void Tape::backward(NodeRef root) {
    if (root->value.size() != 1)
        throw std::invalid_argument("backward: root must be scalar");
    if (!std::isfinite(root->value.at(0)))
        throw std::runtime_error("backward: non-finite loss");
    root->grad.at(0) = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (it->backprop) it->backprop(*it);
        if (&*it == root) continue;
    }
}

static Tape& tape_of(NodeRef a) { return *a->tape; }

NodeRef add(NodeRef a, NodeRef b) {
    a->value.require_same(b->value);
    return tape_of(a).make(a->value + b->value, [a, b](Node& self) {
        a->grad += self.grad;
        b->grad += self.grad;
    });
}

NodeRef sub(NodeRef a, NodeRef b) {
    a->value.require_same(b->value);
    return tape_of(a).make(a->value - b->value, [a, b](Node& self) {
        a->grad += self.grad;
        b->grad -= self.grad;
    });
}

NodeRef mul(NodeRef a, NodeRef b) {
    a->value.require_same(b->value);
    Tensor v = a->value;
    for (std::size_t i = 0; i < v.size(); ++i) v.data[i] *= b->value.data[i];
    return tape_of(a).make(std::move(v), [a, b](Node& self) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            a->grad.data[i] += self.grad.data[i] * b->value.data[i];
            b->grad.data[i] += self.grad.data[i] * a->value.data[i];
        }
    });
}

NodeRef smul(NodeRef a, double c) {
    return tape_of(a).make(a->value * c, [a, c](Node& self) {
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            a->grad.data[i] += c * self.grad.data[i];
    });
}

NodeRef relu(NodeRef x) {
    return tape_of(x).make(relu_forward(x->value), [x](Node& self) {
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            if (x->value.data[i] > 0.0) x->grad.data[i] += self.grad.data[i];
    });
}

NodeRef conv1d(NodeRef x, NodeRef w, NodeRef b, std::size_t stride) {
    Tensor out = conv1d_forward(x->value, w->value, b->value, stride);
    return tape_of(x).make(std::move(out), [x, w, b, stride](Node& self) {
        conv1d_backward(x->value, w->value, self.grad, stride, x->grad, w->grad, b->grad);
    });
}

NodeRef dense(NodeRef x, NodeRef w, NodeRef b) {
    Tensor out = dense_forward(x->value, w->value, b->value);
    return tape_of(x).make(std::move(out), [x, w, b](Node& self) {
        dense_backward(x->value, w->value, self.grad, x->grad, w->grad, b->grad);
    });
}

NodeRef upsample2(NodeRef x) {
    return tape_of(x).make(upsample2_forward(x->value), [x](Node& self) {
        const std::size_t c = x->value.dim(0), l = x->value.dim(1);
        for (std::size_t i = 0; i < c; ++i)
            for (std::size_t t = 0; t < l; ++t)
                x->grad.at(i, t) += self.grad.at(i, 2 * t) + self.grad.at(i, 2 * t + 1);
    });
}

NodeRef concat_rows(NodeRef a, NodeRef b) {
    Tensor out = concat_rows_forward(a->value, b->value);
    return tape_of(a).make(std::move(out), [a, b](Node& self) {
        const std::size_t na = a->value.size();
        for (std::size_t i = 0; i < na; ++i) a->grad.data[i] += self.grad.data[i];
        for (std::size_t i = 0; i < b->value.size(); ++i)
            b->grad.data[i] += self.grad.data[na + i];
    });
}

NodeRef broadcast_time(NodeRef v, std::size_t l) {
    Tensor out = broadcast_time_forward(v->value, l);
    return tape_of(v).make(std::move(out), [v, l](Node& self) {
        for (std::size_t i = 0; i < v->value.dim(0); ++i) {
            double s = 0.0;
            for (std::size_t t = 0; t < l; ++t) s += self.grad.at(i, t);
            v->grad.at(i) += s;
        }
    });
}

NodeRef row(NodeRef table, std::size_t idx) {
    if (table->value.shape.size() != 2 || idx >= table->value.dim(0))
        throw std::out_of_range("row: index out of range");
    const std::size_t d = table->value.dim(1);
    Tensor out({d});
    for (std::size_t j = 0; j < d; ++j) out.at(j) = table->value.at(idx, j);
    return tape_of(table).make(std::move(out), [table, idx, d](Node& self) {
        for (std::size_t j = 0; j < d; ++j)
            table->grad.at(idx, j) += self.grad.at(j);
    });
}

NodeRef flatten(NodeRef x) {
    Tensor v({x->value.size()}, x->value.data);
    return tape_of(x).make(std::move(v), [x](Node& self) {
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            x->grad.data[i] += self.grad.data[i];
    });
}

NodeRef sum(NodeRef x) {
    return tape_of(x).make(Tensor::scalar(x->value.sum()), [x](Node& self) {
        const double g = self.grad.at(0);
        for (double& v : x->grad.data) v += g;
    });
}

NodeRef mean(NodeRef x) {
    const double inv = 1.0 / double(x->value.size());
    return tape_of(x).make(Tensor::scalar(x->value.mean()), [x, inv](Node& self) {
        const double g = self.grad.at(0) * inv;
        for (double& v : x->grad.data) v += g;
    });
}

NodeRef mse(NodeRef a, NodeRef b) {
    a->value.require_same(b->value);
    const std::size_t n = a->value.size();
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double d = a->value.data[i] - b->value.data[i];
        s += d * d;
    }
    return tape_of(a).make(Tensor::scalar(s / double(n)), [a, b, n](Node& self) {
        const double g = self.grad.at(0) * 2.0 / double(n);
        for (std::size_t i = 0; i < n; ++i) {
            double d = a->value.data[i] - b->value.data[i];
            a->grad.data[i] += g * d;
            b->grad.data[i] -= g * d;
        }
    });
}

NodeRef l2_normalize_flatten(NodeRef x) {
    const double nrm = x->value.norm2();
    if (nrm == 0.0) throw std::domain_error("l2_normalize: zero vector");
    Tensor v({x->value.size()});
    for (std::size_t i = 0; i < v.size(); ++i) v.data[i] = x->value.data[i] / nrm;
    Tensor unit = v;
    return tape_of(x).make(std::move(v), [x, nrm, unit](Node& self) {
        double dot = 0.0;
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            dot += self.grad.data[i] * unit.data[i];
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            x->grad.data[i] += (self.grad.data[i] - unit.data[i] * dot) / nrm;
    });
}

NodeRef stack_rows(const std::vector<NodeRef>& rows) {
    if (rows.empty()) throw std::invalid_argument("stack_rows: empty");
    const std::size_t d = rows[0]->value.size();
    Tensor v({rows.size(), d});
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r]->value.size() != d) throw std::invalid_argument("stack_rows: ragged");
        std::copy(rows[r]->value.data.begin(), rows[r]->value.data.end(),
                  v.data.begin() + long(r * d));
    }
    auto inputs = rows;
    return tape_of(rows[0]).make(std::move(v), [inputs, d](Node& self) {
        for (std::size_t r = 0; r < inputs.size(); ++r)
            for (std::size_t j = 0; j < d; ++j)
                inputs[r]->grad.data[j] += self.grad.at(r, j);
    });
}

NodeRef gram(NodeRef f) {
    const std::size_t r = f->value.dim(0), d = f->value.dim(1);
    Tensor s({r, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = i; j < r; ++j) {
            double acc = 0.0;
            const double* a = &f->value.data[i * d];
            const double* b = &f->value.data[j * d];
            for (std::size_t t = 0; t < d; ++t) acc += a[t] * b[t];
            s.at(i, j) = acc;
            s.at(j, i) = acc;
        }
    return tape_of(f).make(std::move(s), [f, r, d](Node& self) {
        // dF = (G + G^T) F
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < r; ++j) {
                const double g = self.grad.at(i, j) + self.grad.at(j, i);
                if (g == 0.0) continue;
                const double* fr = &f->value.data[j * d];
                double* gr = &f->grad.data[i * d];
                for (std::size_t t = 0; t < d; ++t) gr[t] += g * fr[t];
            }
    });
}

NodeRef cross_entropy_logits(NodeRef logits, std::size_t label) {
    const std::size_t c = logits->value.size();
    if (label >= c) throw std::out_of_range("cross_entropy: label out of range");
    const double lse = logsumexp(logits->value.data);
    const double loss = lse - logits->value.at(label);
    return tape_of(logits).make(Tensor::scalar(loss), [logits, label, lse](Node& self) {
        const double g = self.grad.at(0);
        for (std::size_t i = 0; i < logits->value.size(); ++i) {
            double p = std::exp(logits->value.at(i) - lse);
            logits->grad.data[i] += g * (p - (i == label ? 1.0 : 0.0));
        }
    });
}

NodeRef supcon(NodeRef sim, const std::vector<int>& labels, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("supcon: tau must be positive");
    const std::size_t r = sim->value.dim(0);
    if (labels.size() != r || r < 2)
        throw std::invalid_argument("supcon: need >= 2 rows and matching labels");

    // scaled similarities, per-anchor log-softmax over k' != i
    std::vector<std::vector<double>> p(r, std::vector<double>(r, 0.0));
    std::vector<std::size_t> pos_count(r, 0);
    std::vector<double> anchor_loss(r, 0.0);
    std::size_t retained = 0;
    for (std::size_t i = 0; i < r; ++i) {
        std::vector<double> s;
        s.reserve(r - 1);
        for (std::size_t k = 0; k < r; ++k)
            if (k != i) s.push_back(sim->value.at(i, k) / tau);
        const double lse = logsumexp(s);
        double acc = 0.0;
        for (std::size_t k = 0; k < r; ++k) {
            if (k == i) continue;
            p[i][k] = std::exp(sim->value.at(i, k) / tau - lse);
            if (labels[k] == labels[i]) {
                ++pos_count[i];
                acc += sim->value.at(i, k) / tau - lse;
            }
        }
        if (pos_count[i] > 0) {
            anchor_loss[i] = -acc / double(pos_count[i]);
            ++retained;
        }
    }
    if (retained == 0) throw std::domain_error("supcon: no anchor has a positive");
    double loss = 0.0;
    for (std::size_t i = 0; i < r; ++i) loss += anchor_loss[i];
    loss /= double(retained);

    auto labels_c = labels;
    return tape_of(sim).make(
        Tensor::scalar(loss),
        [sim, labels_c, tau, p, pos_count, retained, r](Node& self) {
            const double g = self.grad.at(0) / (double(retained) * tau);
            for (std::size_t i = 0; i < r; ++i) {
                if (pos_count[i] == 0) continue;
                for (std::size_t k = 0; k < r; ++k) {
                    if (k == i) continue;
                    const double m = (labels_c[k] == labels_c[i]) ? 1.0 : 0.0;
                    sim->grad.at(i, k) += g * (p[i][k] - m / double(pos_count[i]));
                }
            }
        });
}

}  // namespace dkroot::nn
