#pragma once

// Stage I: class-conditional diffusion training on expert-labeled data, and
// the weak/strong view synthesis used as Stage II's augmentation front-end.

#include <functional>
#include <utility>
#include <vector>

#include "dkroot/autodiff.hpp"
#include "dkroot/kpi.hpp"
#include "dkroot/params.hpp"
#include "dkroot/rng.hpp"

namespace dkroot {

struct NoiseSchedule {
    std::size_t T = 0;
    std::vector<double> beta;       // beta_t, t = 1..T (index 0 = t1)
    std::vector<double> alpha;      // 1 - beta_t
    std::vector<double> alpha_bar;  // running product, strictly decreasing

    double ab(std::size_t t) const {  // 1-based timestep
        if (t < 1 || t > T) throw std::out_of_range("schedule: t out of range");
        return alpha_bar[t - 1];
    }
};

NoiseSchedule build_schedule(std::size_t T, double beta_start, double beta_end);

// X^(t) = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps
Tensor forward_noise(const Tensor& x0, std::size_t t, const Tensor& eps,
                     const NoiseSchedule& schedule);

struct ViewPolicy {
    double alpha_frac = 0.2;     // weak range: [1, floor(alpha T)]
    double beta_low_frac = 0.2;  // strong range: [floor(bl T), floor(bh T)]
    double beta_high_frac = 0.5;
};

struct ViewTimesteps {
    std::size_t t_weak = 0;
    std::size_t t_strong = 0;
    bool overlapping = false;  // set when the two subranges touch
};

ViewTimesteps sample_view_timesteps(const ViewPolicy& policy, std::size_t T, Rng& rng);

struct PredictorConfig {
    std::size_t m = 47;
    std::size_t l = 40;   // must be divisible by 4 (two stride-2 stages)
    std::size_t T = 100;
    std::size_t embed_dim = 32;
    std::size_t fusion_kernel = 3;
    std::size_t c1 = 64;
    std::size_t c2 = 128;

    std::string fingerprint() const;
};

// Conditional noise predictor: label/timestep embedding -> projection ->
// temporal broadcast -> channel concat -> conv fusion, then a 3-stage
// encoder-decoder with skip connections over the channel/time grid.
class NoisePredictor {
public:
    NoisePredictor(const PredictorConfig& cfg, std::uint64_t init_seed);

    nn::NodeRef condition_node(nn::Tape& tape, nn::NodeRef x_t, std::size_t t, int y);
    nn::NodeRef forward_node(nn::Tape& tape, const Tensor& x_t, std::size_t t, int y);
    // Inference path; bit-identical to forward_node's value.
    Tensor predict(const Tensor& x_t, std::size_t t, int y) const;
    Tensor condition_only(const Tensor& x_t, std::size_t t, int y) const;

    const PredictorConfig& config() const { return cfg_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }

private:
    PredictorConfig cfg_;
    nn::ParamStore params_;
};

using PredictFn = std::function<Tensor(const Tensor& x_t, std::size_t t, int y)>;

// Eq.-style MSE between predicted and true noise; t ~ U{1..T}, eps ~ N(0, I).
// Both overloads consume the rng stream identically.
double diffusion_loss(const std::vector<std::pair<Tensor, int>>& batch,
                      const NoiseSchedule& schedule, const PredictFn& predict, Rng& rng);
nn::NodeRef diffusion_loss_node(nn::Tape& tape, const std::vector<std::pair<Tensor, int>>& batch,
                                const NoiseSchedule& schedule, NoisePredictor& predictor,
                                Rng& rng);

// Noise x0 to step t with fresh eps, then apply the single-step reverse
// estimate (X^(t) - sqrt(1-ab) eps_hat) / sqrt(ab).
Tensor augment_single_step(const Tensor& x0, std::size_t t, int y, const PredictFn& predict,
                           const NoiseSchedule& schedule, Rng& rng);

struct ViewPair {
    Tensor weak, strong;
    ViewTimesteps steps;
};
ViewPair augment_pair(const Tensor& x0, int y, const ViewPolicy& policy,
                      const PredictFn& predict, const NoiseSchedule& schedule, Rng& rng);

struct DiffusionConfig {
    std::size_t T = 100;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    std::size_t embed_dim = 32;
    std::size_t epochs = 300;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    ViewPolicy view_policy;
};

struct DiffusionTrainResult {
    std::vector<double> epoch_loss;
    bool loss_decreased = true;  // warning artifact when false
};

// Trains on expert-labeled, normalized data only (Stage I contract).
DiffusionTrainResult train_diffusion(const LabeledDataset& expert_data,
                                     const DiffusionConfig& cfg, NoisePredictor& predictor);

}  // namespace dkroot
