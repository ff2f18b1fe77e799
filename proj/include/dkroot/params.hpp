#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "dkroot/rng.hpp"
#include "dkroot/tensor.hpp"

namespace dkroot::nn {

struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
};

// Named parameters with stable iteration order plus a gradient slot each.
class ParamStore {
public:
    Param& add(const std::string& name, Tensor init) {
        if (index_.count(name)) throw std::invalid_argument("param exists: " + name);
        index_[name] = params_.size();
        params_.push_back(Param{name, std::move(init), {}});
        Param& p = params_.back();
        p.grad = Tensor::zeros(p.value.shape);
        return p;
    }

    Param& get(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::out_of_range("unknown param: " + name);
        return params_[it->second];
    }
    const Param& get(const std::string& name) const {
        return const_cast<ParamStore*>(this)->get(name);
    }
    bool has(const std::string& name) const { return index_.count(name) != 0; }

    std::size_t size() const { return params_.size(); }
    Param& at(std::size_t i) { return params_[i]; }
    const Param& at(std::size_t i) const { return params_[i]; }

    void zero_grad() {
        for (auto& p : params_) std::fill(p.grad.data.begin(), p.grad.data.end(), 0.0);
    }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.value.size();
        return n;
    }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    std::vector<Param> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Standard Adam with bias correction.
struct AdamState {
    std::vector<Tensor> m, v;
    long step = 0;
};

void adam_step(ParamStore& params, AdamState& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

// Checkpoint I/O: JSON container of (name, shape, data) plus a fingerprint
// tying the blob to the producing configuration.
void save_params(const ParamStore& params, const std::string& path, const std::string& fingerprint);
// Throws if the stored fingerprint differs from `expect` (pass "" to skip).
void load_params(ParamStore& params, const std::string& path, const std::string& expect);

struct FdiffEntry {
    std::string name;
    double max_rel_err = 0.0;
};
struct FdiffReport {
    std::vector<FdiffEntry> entries;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

// eval(with_grad): computes the scalar loss from the current parameter
// values; when with_grad, leaves analytic gradients in params' grad slots.
FdiffReport finite_diff_check(const std::function<double(bool)>& eval, ParamStore& params,
                              double step, double tolerance);

// He-style init helpers.
Tensor init_uniform(std::vector<std::size_t> shape, double limit, Rng& rng);
Tensor init_conv_kernel(std::size_t co, std::size_t ci, std::size_t k, Rng& rng);
Tensor init_dense_weight(std::size_t p, std::size_t n, Rng& rng);

}  // namespace dkroot::nn
