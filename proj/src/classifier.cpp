#include "dkroot/classifier.hpp"

#include <algorithm>
#include <cmath>

#include "dkroot/kernels.hpp"
#include "dkroot/parallel.hpp"

namespace dkroot {

using namespace nn;

ClassifierHead::ClassifierHead(std::size_t in_dim, std::uint64_t init_seed) : in_dim_(in_dim) {
    if (in_dim == 0) throw std::invalid_argument("head: in_dim must be positive");
    Rng rng(init_seed);
    params_.add("head_w", init_dense_weight(RootCause::k_num_classes, in_dim, rng));
    params_.add("head_b", Tensor::zeros({std::size_t(RootCause::k_num_classes)}));
}

NodeRef ClassifierHead::logits_node(Tape& tape, NodeRef features) const {
    return nn::dense(features, tape.param(params_.get("head_w")),
                     tape.param(params_.get("head_b")));
}

Tensor ClassifierHead::logits(const Tensor& features) const {
    if (features.size() != in_dim_) throw std::invalid_argument("head: feature size mismatch");
    Tensor flat({in_dim_});
    flat.data = features.data;
    return dense_forward(flat, params_.get("head_w").value, params_.get("head_b").value);
}

std::vector<double> predict_proba(const Tensor& x, const Encoder& encoder,
                                  const ClassifierHead& head) {
    return softmax(head.logits(encoder.encode(x)).data);
}

int predict_class(const Tensor& x, const Encoder& encoder, const ClassifierHead& head) {
    Tensor lg = head.logits(encoder.encode(x));
    std::size_t best = 0;
    for (std::size_t c = 1; c < lg.size(); ++c)
        if (lg.at(c) > lg.at(best)) best = c;
    return int(best) + 1;
}

double cross_entropy(const std::vector<std::vector<double>>& probas,
                     const std::vector<int>& labels) {
    if (probas.empty() || probas.size() != labels.size())
        throw std::invalid_argument("cross_entropy: probas/labels mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < probas.size(); ++i) {
        const int y = labels[i];
        if (y < 1 || y > int(probas[i].size()))
            throw std::out_of_range("cross_entropy: label out of range");
        const double p = probas[i][std::size_t(y - 1)];
        if (!(p > 0.0)) throw std::domain_error("cross_entropy: nonpositive probability");
        acc -= std::log(p);
    }
    return acc / double(probas.size());
}

double evaluate_accuracy(const LabeledDataset& ds, const Encoder& encoder,
                         const ClassifierHead& head) {
    if (ds.samples.empty()) throw std::invalid_argument("evaluate_accuracy: empty dataset");
    std::vector<char> hit(ds.size(), 0);
    parallel_for(ds.size(), [&](std::size_t i) {
        hit[i] = predict_class(ds.samples[i].values, encoder, head) == ds.labels[i].id;
    });
    double correct = 0.0;
    for (char h : hit) correct += h;
    return correct / double(ds.size());
}

static std::vector<Tensor> snapshot(const ParamStore& s) {
    std::vector<Tensor> out;
    for (const auto& p : s) out.push_back(p.value);
    return out;
}

static void restore(ParamStore& s, const std::vector<Tensor>& snap) {
    for (std::size_t i = 0; i < s.size(); ++i) s.at(i).value = snap[i];
}

// Shared supervised trainer; `finetune` adds the Stage III expert-only
// contract on top, the ablation modes route mixed pools through it directly.
static FinetuneResult train_supervised(const LabeledDataset& train, const LabeledDataset& val,
                                       Encoder& encoder, ClassifierHead& head,
                                       const FinetuneConfig& cfg) {
    if (train.samples.empty() || val.samples.empty())
        throw std::invalid_argument("finetune: empty split");
    if (head.in_dim() != encoder.config().feature_dim())
        throw std::invalid_argument("finetune: head/encoder dimension mismatch");
    const bool linear = cfg.mode == FinetuneMode::LINEAR;

    // Frozen encoder: features are fixed, compute them once.
    std::vector<Tensor> train_feat, val_feat;
    if (linear) {
        auto featurize = [&](const LabeledDataset& ds, std::vector<Tensor>& out) {
            out.resize(ds.size());
            parallel_for(ds.size(), [&](std::size_t i) {
                Tensor f = encoder.encode(ds.samples[i].values);
                Tensor flat({f.size()});
                flat.data = std::move(f.data);
                out[i] = std::move(flat);
            });
        };
        featurize(train, train_feat);
        featurize(val, val_feat);
    }

    auto train_accuracy = [&](const LabeledDataset& ds, const std::vector<Tensor>& feat) {
        if (!linear) return evaluate_accuracy(ds, encoder, head);
        std::vector<char> hit(ds.size(), 0);
        parallel_for(ds.size(), [&](std::size_t i) {
            Tensor lg = head.logits(feat[i]);
            std::size_t best = 0;
            for (std::size_t c = 1; c < lg.size(); ++c)
                if (lg.at(c) > lg.at(best)) best = c;
            hit[i] = int(best) + 1 == ds.labels[i].id;
        });
        double correct = 0.0;
        for (char h : hit) correct += h;
        return correct / double(ds.size());
    };

    Rng rng = Rng(cfg.seed).split(0xF17E);
    AdamState adam_head, adam_enc;
    FinetuneResult res;
    res.best_val_acc = -1.0;
    std::vector<Tensor> best_enc, best_head;

    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[std::size_t(rng.uniform_int(0, long(i) - 1))]);
        for (std::size_t off = 0; off < order.size(); off += cfg.batch_size) {
            Tape tape;
            head.params().zero_grad();
            if (!linear) encoder.params().zero_grad();
            NodeRef acc = nullptr;
            std::size_t n = 0;
            for (std::size_t j = off; j < std::min(off + cfg.batch_size, order.size()); ++j) {
                const std::size_t i = order[j];
                NodeRef feat = linear
                                   ? tape.leaf(train_feat[i])
                                   : nn::flatten(encoder.forward_node(tape, train.samples[i].values));
                NodeRef loss = cross_entropy_logits(head.logits_node(tape, feat),
                                                    std::size_t(train.labels[i].id - 1));
                acc = acc ? nn::add(acc, loss) : loss;
                ++n;
            }
            tape.backward(nn::smul(acc, 1.0 / double(n)));
            adam_step(head.params(), adam_head, cfg.lr);
            if (!linear) adam_step(encoder.params(), adam_enc, cfg.lr * cfg.encoder_lr_scale);
        }
        res.train_acc.push_back(train_accuracy(train, train_feat));
        const double va = train_accuracy(val, val_feat);
        res.val_acc.push_back(va);
        if (va > res.best_val_acc) {  // ties keep the earlier checkpoint
            res.best_val_acc = va;
            res.best_epoch = epoch;
            best_head = snapshot(head.params());
            if (!linear) best_enc = snapshot(encoder.params());
        }
    }
    // epochs = 0 leaves both models at initialization
    if (!best_head.empty()) restore(head.params(), best_head);
    if (!linear && !best_enc.empty()) restore(encoder.params(), best_enc);
    return res;
}

FinetuneResult finetune(const LabeledDataset& train, const LabeledDataset& val,
                        Encoder& encoder, ClassifierHead& head, const FinetuneConfig& cfg) {
    for (const auto& ds : {&train, &val})
        for (auto s : ds->sources)
            if (s != LabelSource::EXPERT)
                throw std::invalid_argument(
                    "finetune: rule-labeled samples violate the Stage III contract");
    return train_supervised(train, val, encoder, head, cfg);
}

std::string ablation_name(AblationMode mode) {
    switch (mode) {
        case AblationMode::CNN_EXP: return "cnn-exp";
        case AblationMode::CNN_FULL: return "cnn-full";
        case AblationMode::DKROOT_FULL: return "dkroot-full";
        case AblationMode::FT_LINEAR: return "ft-linear";
    }
    throw std::invalid_argument("ablation_name: bad mode");
}

AblationMode ablation_from_name(const std::string& s) {
    if (s == "cnn-exp") return AblationMode::CNN_EXP;
    if (s == "cnn-full") return AblationMode::CNN_FULL;
    if (s == "dkroot-full") return AblationMode::DKROOT_FULL;
    if (s == "ft-linear") return AblationMode::FT_LINEAR;
    throw std::invalid_argument("unknown ablation: " + s);
}

static LabeledDataset concat(const LabeledDataset& a, const LabeledDataset& b) {
    LabeledDataset out = a;
    out.samples.insert(out.samples.end(), b.samples.begin(), b.samples.end());
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
    out.sources.insert(out.sources.end(), b.sources.begin(), b.sources.end());
    return out;
}

AblationResult train_ablation(AblationMode mode, const AblationData& data,
                              const FinetuneConfig& cfg, const EncoderConfig& enc_cfg,
                              std::uint64_t init_seed) {
    if (!data.expert_train || !data.expert_val || !data.expert_test)
        throw std::invalid_argument("train_ablation: expert splits required");
    const bool from_checkpoint = mode == AblationMode::DKROOT_FULL || mode == AblationMode::FT_LINEAR;
    if (from_checkpoint && !data.pretrained)
        throw std::invalid_argument("train_ablation: mode needs a pretrained encoder");
    if (mode == AblationMode::CNN_FULL && !data.rule_data)
        throw std::invalid_argument("train_ablation: cnn-full needs the rule pool");

    Encoder encoder = from_checkpoint ? *data.pretrained
                                      : Encoder(enc_cfg, Rng(init_seed).split(0xE).seed());
    ClassifierHead head(encoder.config().feature_dim(), Rng(init_seed).split(0x43AD).seed());

    FinetuneConfig fcfg = cfg;
    fcfg.mode = mode == AblationMode::FT_LINEAR ? FinetuneMode::LINEAR : FinetuneMode::FULL;

    FinetuneResult trace;
    if (mode == AblationMode::CNN_FULL) {
        LabeledDataset mixed = concat(*data.expert_train, *data.rule_data);
        trace = train_supervised(mixed, *data.expert_val, encoder, head, fcfg);
    } else {
        trace = train_supervised(*data.expert_train, *data.expert_val, encoder, head, fcfg);
    }
    const double acc = evaluate_accuracy(*data.expert_test, encoder, head);
    return AblationResult{std::move(encoder), std::move(head), std::move(trace), acc};
}

}  // namespace dkroot
