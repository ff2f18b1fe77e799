#pragma once

// Stage II: encode weak/strong diffusion views of rule-labeled samples and
// minimize the supervised contrastive objective over the rule-label mask.

#include "dkroot/autodiff.hpp"
#include "dkroot/diffusion.hpp"
#include "dkroot/kpi.hpp"

namespace dkroot {

struct EncoderConfig {
    std::size_t m = 47;
    std::size_t l = 40;
    std::size_t c1 = 64;
    std::size_t c2 = 128;
    std::size_t c3 = 128;
    std::size_t kernel = 3;

    std::size_t feature_len() const {  // time length after three stride-2 blocks
        std::size_t t = (l + 1) / 2;
        t = (t + 1) / 2;
        return (t + 1) / 2;
    }
    std::size_t feature_dim() const { return c3 * feature_len(); }
    std::string fingerprint() const;
};

// Three conv blocks (stride-2 time pooling each) producing a feature map;
// all CNN ablation baselines share this architecture.
class Encoder {
public:
    Encoder(const EncoderConfig& cfg, std::uint64_t init_seed);

    nn::NodeRef forward_node(nn::Tape& tape, const Tensor& x) const;  // feature map [c3, lt]
    Tensor encode(const Tensor& x) const;                             // inference path

    const EncoderConfig& config() const { return cfg_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }

private:
    EncoderConfig cfg_;
    mutable nn::ParamStore params_;  // tape leaves need non-const slots
};

// z = vec(x) / ||vec(x)||; errors on the all-zero map.
Tensor normalize_flatten(const Tensor& feature_map);

// labels: one per row of the (already view-duplicated) feature set.
// mask[i][j] = 1 iff labels equal and i != j.
Tensor positive_mask(const std::vector<int>& labels);

struct ContrastBatch {
    Tensor features;          // [2N, D], rows l2-normalized
    std::vector<int> labels;  // length 2N (views inherit their sample's label)
};

// Fast-path evaluation (matches the autodiff node bit-for-bit).
double supcon_loss(const ContrastBatch& batch, double tau);

struct PretrainConfig {
    std::size_t epochs = 12;
    std::size_t batch_size = 64;
    double tau = 0.1;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    bool fresh_views_per_epoch = true;
    ViewPolicy view_policy;
    EncoderConfig encoder;
};

struct PretrainResult {
    std::vector<double> step_loss;          // one entry per optimizer step
    std::vector<std::size_t> step_epoch;    // owning epoch of each step
    std::vector<double> epoch_loss;         // per-epoch means
};

// Rule-labeled data only (expert data must not leak into Stage II).
PretrainResult pretrain(const LabeledDataset& rule_data, const NoisePredictor& predictor,
                        const NoiseSchedule& schedule, const PretrainConfig& cfg,
                        Encoder& encoder);

// Deterministic per-sample embedding export (parallel inside).
Tensor embed_dataset(const LabeledDataset& ds, const Encoder& encoder);  // [n, D]

}  // namespace dkroot
