#pragma once

// Run orchestration: resolved config, manifest bookkeeping, stage execution
// and the evaluation/reporting battery, all rooted in one output directory.

#include <stdexcept>

#include "dkroot/classifier.hpp"
#include "dkroot/metrics.hpp"

namespace dkroot {

// Exit-code carriers: 2 = config, 3 = missing stage dependency, 4 = numerics.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DependencyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataGenConfig {
    std::size_t n_rule = 3000;
    std::size_t n_expert = 185;
    std::size_t l = 40;
    double scale = 1.0;  // pool-size multiplier (floor, expert floor 6)
    std::uint64_t seed = 7;

    std::size_t scaled_rule() const;
    std::size_t scaled_expert() const;
};

struct SplitFractions {
    double train = 0.70, val = 0.15, test = 0.15;
};

struct EvalConfig {
    std::size_t battery_samples = 600;  // rule-pool subset for the metric battery
    std::size_t audit_samples = 64;     // expert subset for the L2 audit
};

struct PipelineConfig {
    PipelineConfig() {  // desk-scale training defaults
        diffusion.epochs = 60;
        pretrain.epochs = 3;
        finetune.epochs = 15;
    }

    DataGenConfig data;
    SplitFractions expert_split;
    DiffusionConfig diffusion;    // seed field is overridden per run seed
    PretrainConfig pretrain;
    FinetuneConfig finetune;
    EvalConfig eval;
    std::size_t n_seeds = 5;
    std::uint64_t base_seed = 100;

    std::vector<std::uint64_t> seeds() const;
    void validate() const;  // throws ConfigError

    std::string to_json() const;
    static PipelineConfig from_json(const std::string& text);   // missing keys keep defaults
    static PipelineConfig from_json_file(const std::string& path);
    std::string fingerprint() const;  // hash of the canonical dump
};

struct StageRecord {
    std::string stage;
    std::uint64_t seed = 0;  // 0 for seed-independent stages
    std::vector<std::string> artifacts;
    double wall_ms = 0.0;
};

struct RunManifest {
    std::string run_id;
    std::string config_fingerprint;
    std::vector<std::uint64_t> seeds;
    std::vector<StageRecord> stages;

    void save(const std::string& path) const;
    static RunManifest load(const std::string& path);
};

class Pipeline {
public:
    Pipeline(PipelineConfig cfg, std::string out_root);

    void gen_data();
    void run_diffusion(std::uint64_t seed);
    void run_pretrain(std::uint64_t seed);
    void run_finetune(std::uint64_t seed);
    void run_ablation(std::uint64_t seed);
    void evaluate();
    void run_all();

    const PipelineConfig& config() const { return cfg_; }
    const RunManifest& manifest() const { return manifest_; }

    std::string data_dir() const;
    std::string seed_dir(std::uint64_t seed) const;
    std::string report_dir() const;

private:
    struct Prepared;  // normalized datasets + schema for one seed
    Prepared prepare(std::uint64_t seed) const;
    NoisePredictor load_predictor(std::uint64_t seed) const;
    Encoder load_encoder(std::uint64_t seed) const;
    void record(StageRecord rec);

    PipelineConfig cfg_;
    std::string out_;
    RunManifest manifest_;
};

// Weak-label a samples CSV with a ruleset; unmatched samples are reported,
// not written. Returns (labeled, unmatched) counts.
std::pair<std::size_t, std::size_t> label_samples_file(const KpiSchema& schema, const RuleSet& rs,
                                                       const std::string& samples_path,
                                                       const std::string& labels_out);

}  // namespace dkroot
