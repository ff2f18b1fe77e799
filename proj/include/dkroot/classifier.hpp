#pragma once

// Stage III: a dense head on the encoder features, expert-label fine-tuning
// in full or linear-probe mode, and the shared-architecture ablation runs.

#include "dkroot/contrastive.hpp"

namespace dkroot {

// Single dense layer over the flattened feature map, one logit per class.
class ClassifierHead {
public:
    ClassifierHead(std::size_t in_dim, std::uint64_t init_seed);

    nn::NodeRef logits_node(nn::Tape& tape, nn::NodeRef features) const;
    Tensor logits(const Tensor& features) const;  // features: [in_dim]

    std::size_t in_dim() const { return in_dim_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }

private:
    std::size_t in_dim_;
    mutable nn::ParamStore params_;
};

// Class probabilities for one sample; index c = class id c+1.
std::vector<double> predict_proba(const Tensor& x, const Encoder& encoder,
                                  const ClassifierHead& head);
// Argmax class id (1..6); ties resolve to the smallest id.
int predict_class(const Tensor& x, const Encoder& encoder, const ClassifierHead& head);

// Mean negative log-likelihood; probas rows sum to ~1, labels are class ids.
double cross_entropy(const std::vector<std::vector<double>>& probas,
                     const std::vector<int>& labels);

double evaluate_accuracy(const LabeledDataset& ds, const Encoder& encoder,
                         const ClassifierHead& head);

enum class FinetuneMode { FULL, LINEAR };

struct FinetuneConfig {
    FinetuneMode mode = FinetuneMode::FULL;
    std::size_t epochs = 40;
    std::size_t batch_size = 16;
    double lr = 1e-3;
    // FULL-mode encoder step scale; < 1 protects a pretrained backbone from
    // being washed out by the randomly initialized head's early gradients.
    double encoder_lr_scale = 1.0;
    std::uint64_t seed = 0;
};

struct FinetuneResult {
    std::vector<double> train_acc, val_acc;  // per epoch
    double best_val_acc = 0.0;
    std::size_t best_epoch = 0;  // 0-based; best-val checkpoint is restored
};

// LINEAR freezes the encoder (its parameters stay bitwise identical).
FinetuneResult finetune(const LabeledDataset& train, const LabeledDataset& val,
                        Encoder& encoder, ClassifierHead& head, const FinetuneConfig& cfg);

enum class AblationMode { CNN_EXP, CNN_FULL, DKROOT_FULL, FT_LINEAR };

std::string ablation_name(AblationMode mode);
AblationMode ablation_from_name(const std::string& s);

struct AblationData {
    const LabeledDataset* expert_train = nullptr;
    const LabeledDataset* expert_val = nullptr;
    const LabeledDataset* expert_test = nullptr;
    const LabeledDataset* rule_data = nullptr;    // CNN_FULL only
    const Encoder* pretrained = nullptr;          // DKROOT_FULL / FT_LINEAR
};

struct AblationResult {
    Encoder encoder;
    ClassifierHead head;
    FinetuneResult trace;
    double test_accuracy = 0.0;
};

// All modes share the encoder architecture; they differ only in training data
// (expert vs expert+rule) and initialization (fresh vs Stage II checkpoint).
AblationResult train_ablation(AblationMode mode, const AblationData& data,
                              const FinetuneConfig& cfg, const EncoderConfig& enc_cfg,
                              std::uint64_t init_seed);

}  // namespace dkroot
