#include "dkroot/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dkroot/kernels.hpp"
#include "dkroot/parallel.hpp"

namespace dkroot {

using namespace nn;

std::string EncoderConfig::fingerprint() const {
    std::ostringstream os;
    os << "encoder:m=" << m << ",l=" << l << ",c1=" << c1 << ",c2=" << c2 << ",c3=" << c3
       << ",k=" << kernel;
    return os.str();
}

Encoder::Encoder(const EncoderConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
    if (cfg.kernel % 2 == 0) throw std::invalid_argument("encoder: kernel must be odd");
    if (cfg.feature_len() == 0) throw std::invalid_argument("encoder: l too small");
    Rng rng(init_seed);
    params_.add("e1_w", init_conv_kernel(cfg.c1, cfg.m, cfg.kernel, rng));
    params_.add("e1_b", Tensor::zeros({cfg.c1}));
    params_.add("e2_w", init_conv_kernel(cfg.c2, cfg.c1, cfg.kernel, rng));
    params_.add("e2_b", Tensor::zeros({cfg.c2}));
    params_.add("e3_w", init_conv_kernel(cfg.c3, cfg.c2, cfg.kernel, rng));
    params_.add("e3_b", Tensor::zeros({cfg.c3}));
}

NodeRef Encoder::forward_node(Tape& tape, const Tensor& x) const {
    if (x.dim(0) != cfg_.m || x.dim(1) != cfg_.l)
        throw std::invalid_argument("encoder: input shape mismatch");
    auto P = [&](const char* n) { return tape.param(params_.get(n)); };
    NodeRef h = nn::relu(nn::conv1d(tape.leaf(x), P("e1_w"), P("e1_b"), 2));
    h = nn::relu(nn::conv1d(h, P("e2_w"), P("e2_b"), 2));
    return nn::relu(nn::conv1d(h, P("e3_w"), P("e3_b"), 2));
}

Tensor Encoder::encode(const Tensor& x) const {
    if (x.dim(0) != cfg_.m || x.dim(1) != cfg_.l)
        throw std::invalid_argument("encoder: input shape mismatch");
    auto P = [&](const char* n) -> const Tensor& { return params_.get(n).value; };
    Tensor h = relu_forward(conv1d_forward(x, P("e1_w"), P("e1_b"), 2));
    h = relu_forward(conv1d_forward(h, P("e2_w"), P("e2_b"), 2));
    return relu_forward(conv1d_forward(h, P("e3_w"), P("e3_b"), 2));
}

Tensor normalize_flatten(const Tensor& feature_map) {
    const double n = feature_map.norm2();
    if (n == 0.0) throw std::domain_error("normalize_flatten: zero feature map");
    Tensor out({feature_map.size()});
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = feature_map.data[i] / n;
    return out;
}

Tensor positive_mask(const std::vector<int>& labels) {
    const std::size_t n = labels.size();
    Tensor mask({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            mask.at(i, j) = (i != j && labels[i] == labels[j]) ? 1.0 : 0.0;
    return mask;
}

double supcon_loss(const ContrastBatch& batch, double tau) {
    const std::size_t r = batch.features.dim(0), d = batch.features.dim(1);
    if (batch.labels.size() != r)
        throw std::invalid_argument("supcon_loss: labels/features mismatch");
    // Same gram + log-softmax arithmetic as the autodiff path so both agree
    // bit-for-bit.
    Tensor sim({r, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = i; j < r; ++j) {
            double acc = 0.0;
            const double* a = &batch.features.data[i * d];
            const double* b = &batch.features.data[j * d];
            for (std::size_t t = 0; t < d; ++t) acc += a[t] * b[t];
            sim.at(i, j) = acc;
            sim.at(j, i) = acc;
        }
    Tape tape;
    NodeRef loss = supcon(tape.leaf(std::move(sim)), batch.labels, tau);
    return loss->value.at(0);
}

static std::vector<ViewPair> make_views(const LabeledDataset& ds, const NoisePredictor& predictor,
                                        const NoiseSchedule& schedule, const PretrainConfig& cfg,
                                        std::uint64_t round) {
    PredictFn predict = [&](const Tensor& x_t, std::size_t t, int y) {
        return predictor.predict(x_t, t, y);
    };
    std::vector<ViewPair> views(ds.size());
    const Rng base = Rng(cfg.seed).split(0x51EA ^ round);
    parallel_for(ds.size(), [&](std::size_t i) {
        Rng rng = base.split(i);
        views[i] = augment_pair(ds.samples[i].values, ds.labels[i].id, cfg.view_policy, predict,
                                schedule, rng);
    });
    return views;
}

PretrainResult pretrain(const LabeledDataset& rule_data, const NoisePredictor& predictor,
                        const NoiseSchedule& schedule, const PretrainConfig& cfg,
                        Encoder& encoder) {
    if (rule_data.samples.empty()) throw std::invalid_argument("pretrain: empty dataset");
    for (auto s : rule_data.sources)
        if (s != LabelSource::RULE)
            throw std::invalid_argument("pretrain: expert-labeled samples violate the Stage II contract");
    if (rule_data.normalization_stats.empty())
        throw std::invalid_argument("pretrain: data must be normalized first");
    if (cfg.batch_size < 4 || cfg.batch_size % 2 != 0)
        throw std::invalid_argument("pretrain: batch_size must be even and >= 4");
    if (encoder.config().m != rule_data.samples[0].m() ||
        encoder.config().l != rule_data.samples[0].l())
        throw std::invalid_argument("pretrain: encoder/data shape mismatch");

    Rng rng = Rng(cfg.seed).split(0xC047);
    AdamState adam;
    PretrainResult res;

    std::vector<ViewPair> views;
    const std::size_t pairs_per_batch = cfg.batch_size / 2;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (views.empty() || cfg.fresh_views_per_epoch)
            views = make_views(rule_data, predictor, schedule, cfg, epoch);

        // Class-stratified order: shuffle within each class, then round-robin
        // across classes so every batch mixes labels; a sample's two views
        // always travel together.
        std::vector<std::vector<std::size_t>> by_class(RootCause::k_num_classes);
        for (std::size_t i = 0; i < rule_data.size(); ++i)
            by_class[std::size_t(rule_data.labels[i].id - 1)].push_back(i);
        for (auto& g : by_class)
            for (std::size_t i = g.size(); i > 1; --i)
                std::swap(g[i - 1], g[std::size_t(rng.uniform_int(0, long(i) - 1))]);
        std::vector<std::size_t> order;
        order.reserve(rule_data.size());
        for (std::size_t pos = 0; order.size() < rule_data.size(); ++pos)
            for (const auto& g : by_class)
                if (pos < g.size()) order.push_back(g[pos]);

        double epoch_loss = 0.0;
        std::size_t steps = 0;
        for (std::size_t off = 0; off < order.size(); off += pairs_per_batch) {
            const std::size_t end = std::min(off + pairs_per_batch, order.size());
            if (end - off < 2) break;  // a lone pair has no cross-sample negatives

            Tape tape;
            encoder.params().zero_grad();
            // row layout: all first (strong) views, then all second (weak) views
            std::vector<NodeRef> rows;
            std::vector<int> labels;
            for (std::size_t j = off; j < end; ++j) {
                const std::size_t i = order[j];
                rows.push_back(
                    nn::l2_normalize_flatten(encoder.forward_node(tape, views[i].strong)));
                labels.push_back(rule_data.labels[i].id);
            }
            for (std::size_t j = off; j < end; ++j) {
                const std::size_t i = order[j];
                rows.push_back(nn::l2_normalize_flatten(encoder.forward_node(tape, views[i].weak)));
                labels.push_back(rule_data.labels[i].id);
            }
            NodeRef loss = supcon(gram(stack_rows(rows)), labels, cfg.tau);
            tape.backward(loss);
            adam_step(encoder.params(), adam, cfg.lr);
            res.step_loss.push_back(loss->value.at(0));
            res.step_epoch.push_back(epoch);
            epoch_loss += loss->value.at(0);
            ++steps;
        }
        if (steps == 0) throw std::invalid_argument("pretrain: dataset too small for batch size");
        res.epoch_loss.push_back(epoch_loss / double(steps));
    }
    return res;
}

Tensor embed_dataset(const LabeledDataset& ds, const Encoder& encoder) {
    const std::size_t d = encoder.config().feature_dim();
    Tensor out({ds.size(), d});
    parallel_for(ds.size(), [&](std::size_t i) {
        Tensor z = normalize_flatten(encoder.encode(ds.samples[i].values));
        std::copy(z.data.begin(), z.data.end(), out.data.begin() + long(i * d));
    });
    return out;
}

}  // namespace dkroot
