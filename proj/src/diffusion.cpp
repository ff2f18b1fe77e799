#include "dkroot/diffusion.hpp"

#include <cmath>
#include <sstream>

#include "dkroot/kernels.hpp"

namespace dkroot {

using namespace nn;

NoiseSchedule build_schedule(std::size_t T, double beta_start, double beta_end) {
    if (T < 2) throw std::invalid_argument("schedule: T >= 2");
    if (!(beta_start > 0.0) || beta_start > beta_end || !(beta_end < 1.0))
        throw std::invalid_argument("schedule: need 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.T = T;
    s.beta.resize(T);
    s.alpha.resize(T);
    s.alpha_bar.resize(T);
    double prod = 1.0;
    for (std::size_t i = 0; i < T; ++i) {
        s.beta[i] = beta_start + (beta_end - beta_start) * double(i) / double(T - 1);
        s.alpha[i] = 1.0 - s.beta[i];
        prod *= s.alpha[i];
        s.alpha_bar[i] = prod;
    }
    return s;
}

Tensor forward_noise(const Tensor& x0, std::size_t t, const Tensor& eps,
                     const NoiseSchedule& schedule) {
    x0.require_same(eps);
    const double ab = schedule.ab(t);
    Tensor out = x0;
    const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data[i] = a * x0.data[i] + b * eps.data[i];
    return out;
}

ViewTimesteps sample_view_timesteps(const ViewPolicy& policy, std::size_t T, Rng& rng) {
    if (!(policy.alpha_frac > 0.0) || policy.alpha_frac > policy.beta_low_frac ||
        !(policy.beta_low_frac < policy.beta_high_frac) || policy.beta_high_frac > 1.0)
        throw std::invalid_argument("view policy: need 0 < alpha <= beta_low < beta_high <= 1");
    const long weak_hi = long(policy.alpha_frac * double(T));
    const long strong_lo = std::max(1L, long(policy.beta_low_frac * double(T)));
    const long strong_hi = long(policy.beta_high_frac * double(T));
    if (weak_hi < 1 || strong_hi < strong_lo)
        throw std::invalid_argument("view policy: empty range after flooring");
    ViewTimesteps v;
    v.t_weak = std::size_t(rng.uniform_int(1, weak_hi));
    v.t_strong = std::size_t(rng.uniform_int(strong_lo, strong_hi));
    v.overlapping = strong_lo <= weak_hi;
    return v;
}

std::string PredictorConfig::fingerprint() const {
    std::ostringstream os;
    os << "predictor:m=" << m << ",l=" << l << ",T=" << T << ",d=" << embed_dim
       << ",fk=" << fusion_kernel << ",c1=" << c1 << ",c2=" << c2;
    return os.str();
}

NoisePredictor::NoisePredictor(const PredictorConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
    if (cfg.l % 4 != 0) throw std::invalid_argument("predictor: l must be divisible by 4");
    Rng rng(init_seed);
    const std::size_t m = cfg.m, d = cfg.embed_dim, fk = cfg.fusion_kernel;
    params_.add("label_table", init_uniform({std::size_t(RootCause::k_num_classes), d}, 0.5, rng));
    params_.add("time_table", init_uniform({cfg.T, d}, 0.5, rng));
    params_.add("proj_w", init_dense_weight(m, d, rng));
    params_.add("proj_b", Tensor::zeros({m}));
    params_.add("fuse_w", init_conv_kernel(m, 2 * m, fk, rng));
    params_.add("fuse_b", Tensor::zeros({m}));
    params_.add("enc1_w", init_conv_kernel(cfg.c1, m, 3, rng));
    params_.add("enc1_b", Tensor::zeros({cfg.c1}));
    params_.add("enc2_w", init_conv_kernel(cfg.c2, cfg.c1, 3, rng));
    params_.add("enc2_b", Tensor::zeros({cfg.c2}));
    params_.add("mid_w", init_conv_kernel(cfg.c2, cfg.c2, 3, rng));
    params_.add("mid_b", Tensor::zeros({cfg.c2}));
    params_.add("dec1_w", init_conv_kernel(cfg.c1, cfg.c2 + cfg.c1, 3, rng));
    params_.add("dec1_b", Tensor::zeros({cfg.c1}));
    params_.add("out_w", init_conv_kernel(m, cfg.c1 + m, 3, rng));
    params_.add("out_b", Tensor::zeros({m}));
}

NodeRef NoisePredictor::condition_node(Tape& tape, NodeRef x_t, std::size_t t, int y) {
    if (y < 1 || y > RootCause::k_num_classes) throw std::out_of_range("condition: bad label");
    if (t < 1 || t > cfg_.T) throw std::out_of_range("condition: timestep out of range");
    NodeRef ey = nn::row(tape.param(params_.get("label_table")), std::size_t(y - 1));
    NodeRef et = nn::row(tape.param(params_.get("time_table")), t - 1);
    NodeRef proj = nn::dense(nn::add(ey, et), tape.param(params_.get("proj_w")),
                             tape.param(params_.get("proj_b")));
    NodeRef cond = nn::broadcast_time(proj, cfg_.l);
    NodeRef cat = nn::concat_rows(x_t, cond);
    return nn::conv1d(cat, tape.param(params_.get("fuse_w")), tape.param(params_.get("fuse_b")));
}

NodeRef NoisePredictor::forward_node(Tape& tape, const Tensor& x_t, std::size_t t, int y) {
    NodeRef xc = condition_node(tape, tape.leaf(x_t), t, y);
    auto P = [&](const char* n) { return tape.param(params_.get(n)); };
    NodeRef e1 = nn::relu(nn::conv1d(xc, P("enc1_w"), P("enc1_b"), 2));   // [c1, l/2]
    NodeRef e2 = nn::relu(nn::conv1d(e1, P("enc2_w"), P("enc2_b"), 2));   // [c2, l/4]
    NodeRef mid = nn::relu(nn::conv1d(e2, P("mid_w"), P("mid_b")));       // [c2, l/4]
    NodeRef d1 = nn::relu(nn::conv1d(nn::concat_rows(nn::upsample2(mid), e1),
                                     P("dec1_w"), P("dec1_b")));          // [c1, l/2]
    return nn::conv1d(nn::concat_rows(nn::upsample2(d1), xc), P("out_w"), P("out_b"));
}

Tensor NoisePredictor::condition_only(const Tensor& x_t, std::size_t t, int y) const {
    if (y < 1 || y > RootCause::k_num_classes) throw std::out_of_range("condition: bad label");
    if (t < 1 || t > cfg_.T) throw std::out_of_range("condition: timestep out of range");
    const std::size_t d = cfg_.embed_dim;
    Tensor e({d});
    const Tensor& lt = params_.get("label_table").value;
    const Tensor& tt = params_.get("time_table").value;
    for (std::size_t j = 0; j < d; ++j)
        e.at(j) = lt.at(std::size_t(y - 1), j) + tt.at(t - 1, j);
    Tensor proj = dense_forward(e, params_.get("proj_w").value, params_.get("proj_b").value);
    Tensor cond = broadcast_time_forward(proj, cfg_.l);
    Tensor cat = concat_rows_forward(x_t, cond);
    return conv1d_forward(cat, params_.get("fuse_w").value, params_.get("fuse_b").value);
}

Tensor NoisePredictor::predict(const Tensor& x_t, std::size_t t, int y) const {
    Tensor xc = condition_only(x_t, t, y);
    auto W = [&](const char* n) -> const Tensor& { return params_.get(n).value; };
    Tensor e1 = relu_forward(conv1d_forward(xc, W("enc1_w"), W("enc1_b"), 2));
    Tensor e2 = relu_forward(conv1d_forward(e1, W("enc2_w"), W("enc2_b"), 2));
    Tensor mid = relu_forward(conv1d_forward(e2, W("mid_w"), W("mid_b")));
    Tensor d1 = relu_forward(conv1d_forward(concat_rows_forward(upsample2_forward(mid), e1),
                                            W("dec1_w"), W("dec1_b")));
    return conv1d_forward(concat_rows_forward(upsample2_forward(d1), xc), W("out_w"), W("out_b"));
}

static Tensor draw_noise(const Tensor& like, Rng& rng) {
    Tensor eps(like.shape);
    for (double& v : eps.data) v = rng.normal();
    return eps;
}

double diffusion_loss(const std::vector<std::pair<Tensor, int>>& batch,
                      const NoiseSchedule& schedule, const PredictFn& predict, Rng& rng) {
    if (batch.empty()) throw std::invalid_argument("diffusion_loss: empty batch");
    double total = 0.0;
    for (const auto& [x0, y] : batch) {
        const std::size_t t = std::size_t(rng.uniform_int(1, long(schedule.T)));
        Tensor eps = draw_noise(x0, rng);
        Tensor x_t = forward_noise(x0, t, eps, schedule);
        Tensor pred = predict(x_t, t, y);
        double se = 0.0;
        for (std::size_t i = 0; i < eps.size(); ++i) {
            const double d = pred.data[i] - eps.data[i];
            se += d * d;
        }
        total += se / double(eps.size());
    }
    return total / double(batch.size());
}

NodeRef diffusion_loss_node(Tape& tape, const std::vector<std::pair<Tensor, int>>& batch,
                            const NoiseSchedule& schedule, NoisePredictor& predictor, Rng& rng) {
    if (batch.empty()) throw std::invalid_argument("diffusion_loss: empty batch");
    NodeRef acc = nullptr;
    for (const auto& [x0, y] : batch) {
        const std::size_t t = std::size_t(rng.uniform_int(1, long(schedule.T)));
        Tensor eps = draw_noise(x0, rng);
        Tensor x_t = forward_noise(x0, t, eps, schedule);
        NodeRef pred = predictor.forward_node(tape, x_t, t, y);
        NodeRef loss = nn::mse(pred, tape.leaf(eps));
        acc = acc ? nn::add(acc, loss) : loss;
    }
    return nn::smul(acc, 1.0 / double(batch.size()));
}

Tensor augment_single_step(const Tensor& x0, std::size_t t, int y, const PredictFn& predict,
                           const NoiseSchedule& schedule, Rng& rng) {
    const double ab = schedule.ab(t);
    if (ab <= 1e-12) throw std::domain_error("augment: alpha_bar too small for reverse step");
    Tensor eps = draw_noise(x0, rng);
    Tensor x_t = forward_noise(x0, t, eps, schedule);
    Tensor eps_hat = predict(x_t, t, y);
    Tensor out = x_t;
    const double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data[i] = (x_t.data[i] - sb * eps_hat.data[i]) / sa;
    if (!out.all_finite()) throw std::runtime_error("augment: non-finite view");
    return out;
}

ViewPair augment_pair(const Tensor& x0, int y, const ViewPolicy& policy,
                      const PredictFn& predict, const NoiseSchedule& schedule, Rng& rng) {
    ViewPair vp;
    vp.steps = sample_view_timesteps(policy, schedule.T, rng);
    vp.weak = augment_single_step(x0, vp.steps.t_weak, y, predict, schedule, rng);
    vp.strong = augment_single_step(x0, vp.steps.t_strong, y, predict, schedule, rng);
    return vp;
}

DiffusionTrainResult train_diffusion(const LabeledDataset& expert_data,
                                     const DiffusionConfig& cfg, NoisePredictor& predictor) {
    if (expert_data.samples.empty()) throw std::invalid_argument("train_diffusion: empty dataset");
    for (auto s : expert_data.sources)
        if (s != LabelSource::EXPERT)
            throw std::invalid_argument("train_diffusion: rule-labeled samples violate the Stage I contract");
    if (expert_data.normalization_stats.empty())
        throw std::invalid_argument("train_diffusion: data must be normalized first");

    NoiseSchedule schedule = build_schedule(cfg.T, cfg.beta_start, cfg.beta_end);
    Rng rng = Rng(cfg.seed).split(0xD1FF);
    AdamState adam;
    DiffusionTrainResult res;

    std::vector<std::size_t> order(expert_data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[std::size_t(rng.uniform_int(0, long(i) - 1))]);
        double epoch_loss = 0.0;
        std::size_t steps = 0;
        for (std::size_t off = 0; off < order.size(); off += cfg.batch_size) {
            std::vector<std::pair<Tensor, int>> batch;
            for (std::size_t j = off; j < std::min(off + cfg.batch_size, order.size()); ++j)
                batch.emplace_back(expert_data.samples[order[j]].values,
                                   expert_data.labels[order[j]].id);
            Tape tape;
            predictor.params().zero_grad();
            NodeRef loss = diffusion_loss_node(tape, batch, schedule, predictor, rng);
            tape.backward(loss);
            adam_step(predictor.params(), adam, cfg.lr);
            epoch_loss += loss->value.at(0);
            ++steps;
        }
        res.epoch_loss.push_back(epoch_loss / double(steps));
    }
    if (!res.epoch_loss.empty() && res.epoch_loss.back() > res.epoch_loss.front())
        res.loss_decreased = false;
    return res;
}

}  // namespace dkroot
