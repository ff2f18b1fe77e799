#include "dkroot/params.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

namespace dkroot::nn {

void adam_step(ParamStore& params, AdamState& state, double lr,
               double beta1, double beta2, double eps) {
    if (state.m.empty()) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m.push_back(Tensor::zeros(params.at(i).value.shape));
            state.v.push_back(Tensor::zeros(params.at(i).value.shape));
        }
    }
    if (state.m.size() != params.size())
        throw std::invalid_argument("adam_step: state/param count mismatch");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, double(state.step));
    const double bc2 = 1.0 - std::pow(beta2, double(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Param& p = params.at(i);
        if (!p.grad.same_shape(p.value))
            throw std::invalid_argument("adam_step: grad shape mismatch for " + p.name);
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            const double g = p.grad.data[j];
            if (!std::isfinite(g)) throw std::runtime_error("adam_step: non-finite gradient in " + p.name);
            m.data[j] = beta1 * m.data[j] + (1.0 - beta1) * g;
            v.data[j] = beta2 * v.data[j] + (1.0 - beta2) * g * g;
            const double mhat = m.data[j] / bc1;
            const double vhat = v.data[j] / bc2;
            p.value.data[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

void save_params(const ParamStore& params, const std::string& path, const std::string& fingerprint) {
    nlohmann::json j;
    j["fingerprint"] = fingerprint;
    auto& arr = j["params"] = nlohmann::json::array();
    for (const auto& p : params) {
        nlohmann::json e;
        e["name"] = p.name;
        e["shape"] = p.value.shape;
        e["data"] = p.value.data;
        arr.push_back(std::move(e));
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out << j.dump();
}

void load_params(ParamStore& params, const std::string& path, const std::string& expect) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
    nlohmann::json j;
    in >> j;
    const std::string fp = j.at("fingerprint").get<std::string>();
    if (!expect.empty() && fp != expect)
        throw std::runtime_error("checkpoint fingerprint mismatch: " + path);
    for (const auto& e : j.at("params")) {
        Param& p = params.get(e.at("name").get<std::string>());
        auto shape = e.at("shape").get<std::vector<std::size_t>>();
        if (shape != p.value.shape)
            throw std::runtime_error("checkpoint shape mismatch for " + p.name);
        p.value.data = e.at("data").get<std::vector<double>>();
    }
}

FdiffReport finite_diff_check(const std::function<double(bool)>& eval, ParamStore& params,
                              double step, double tolerance) {
    if (step <= 0.0) throw std::invalid_argument("finite_diff_check: step must be positive");
    params.zero_grad();
    eval(true);
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) analytic.push_back(p.grad);

    FdiffReport rep;
    rep.tolerance = tolerance;
    for (std::size_t i = 0; i < params.size(); ++i) {
        Param& p = params.at(i);
        FdiffEntry entry{p.name, 0.0};
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            const double orig = p.value.data[j];
            p.value.data[j] = orig + step;
            const double fp = eval(false);
            p.value.data[j] = orig - step;
            const double fm = eval(false);
            p.value.data[j] = orig;
            const double numeric = (fp - fm) / (2.0 * step);
            const double a = analytic[i].data[j];
            const double rel = std::abs(a - numeric) /
                               std::max({1e-6, std::abs(a), std::abs(numeric)});
            entry.max_rel_err = std::max(entry.max_rel_err, rel);
        }
        rep.max_rel_err = std::max(rep.max_rel_err, entry.max_rel_err);
        rep.entries.push_back(std::move(entry));
    }
    rep.pass = rep.max_rel_err < tolerance;
    return rep;
}

Tensor init_uniform(std::vector<std::size_t> shape, double limit, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.uniform(-limit, limit);
    return t;
}

Tensor init_conv_kernel(std::size_t co, std::size_t ci, std::size_t k, Rng& rng) {
    const double limit = std::sqrt(2.0 / double(ci * k));
    return init_uniform({co, ci, k}, limit, rng);
}

Tensor init_dense_weight(std::size_t p, std::size_t n, Rng& rng) {
    const double limit = std::sqrt(2.0 / double(n));
    return init_uniform({p, n}, limit, rng);
}

}  // namespace dkroot::nn
