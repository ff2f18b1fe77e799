#pragma once

// KPI sample/label domain types, the default schema (union of the rule-KPI
// and selected-feature tables), file formats, z-score normalization, the
// synthetic scenario generator and the rule-based weak labeler.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dkroot/rng.hpp"
#include "dkroot/tensor.hpp"

namespace dkroot {

enum class Layer { PHY, MAC, RLC, PDCP };

std::string layer_name(Layer l);
Layer layer_from_name(const std::string& s);

struct KpiDescriptor {
    std::string name;
    Layer layer;
    std::string unit;  // informational
};

struct KpiSchema {
    std::vector<KpiDescriptor> descriptors;

    std::size_t m() const { return descriptors.size(); }
    // Throws on unknown name.
    std::size_t index_of(const std::string& name) const;
    bool has(const std::string& name) const;

    static const KpiSchema& default_schema();
};

void save_schema(const KpiSchema& schema, const std::string& path);
KpiSchema load_schema(const std::string& path);

struct KpiSample {
    std::string sample_id;
    Tensor values;  // [m, l]

    std::size_t m() const { return values.dim(0); }
    std::size_t l() const { return values.dim(1); }
};

struct RootCause {
    int id = 0;  // 1..6

    std::string name() const;
    static RootCause from_id(int id);        // throws on invalid
    static constexpr int k_num_classes = 6;
};

enum class LabelSource { RULE, EXPERT };

struct ChannelStats {
    double mean = 0.0;
    double std = 1.0;
};

struct LabeledDataset {
    std::vector<KpiSample> samples;
    std::vector<RootCause> labels;
    std::vector<LabelSource> sources;
    std::vector<ChannelStats> normalization_stats;  // empty until fitted

    std::size_t size() const { return samples.size(); }
    void validate() const;  // invariant checks
};

// -- rule engine --------------------------------------------------------

enum class Comparator { GE, LE, GT, LT };
enum class Reduction { MAX, MIN, MEAN };

struct RuleCondition {
    // Either a plain channel threshold or a ratio of two channels.
    std::string kpi;                       // empty when ratio
    std::string ratio_num, ratio_den;      // set when ratio
    double epsilon = 1e-5;                 // ratio denominator guard
    Comparator cmp = Comparator::GE;
    double threshold = 0.0;
    Reduction reduction = Reduction::MAX;

    bool is_ratio() const { return kpi.empty(); }
};

struct RuleGroup {
    std::vector<RuleCondition> any_of;  // OR within the group
};

struct Rule {
    int class_id = 0;
    std::vector<RuleGroup> groups;  // AND across groups
};

struct RuleSet {
    std::vector<Rule> rules;

    static RuleSet default_ruleset();
    // Every KPI name referenced by any rule.
    std::vector<std::string> referenced_kpis() const;
};

void save_ruleset(const RuleSet& rs, const std::string& path);
RuleSet load_ruleset(const std::string& path);

// First matching rule in ascending class-id order, or nullopt.
std::optional<RootCause> rule_label(const KpiSample& sample, const RuleSet& rs,
                                    const KpiSchema& schema);

// -- synthetic generator ------------------------------------------------

struct ScenarioConfig {
    RootCause class_id;
    std::size_t n_samples = 1;
    std::uint64_t seed = 0;
    double severity = 1.0;  // [0, 1]
    std::size_t l = 40;
};

std::vector<KpiSample> synth_generate(const ScenarioConfig& config, const KpiSchema& schema);

// Desk-scale pool generation mirroring the dual label sources: the rule pool
// is labeled by applying `rs` to generator output at severity ~ U(0.5, 1),
// the expert pool carries the generator's ground-truth class ids.
LabeledDataset generate_rule_pool(std::size_t n, std::uint64_t seed, const KpiSchema& schema,
                                  const RuleSet& rs, std::size_t l = 40);
LabeledDataset generate_expert_pool(std::size_t n, std::uint64_t seed, const KpiSchema& schema,
                                    const RuleSet& rs, std::size_t l = 40);

// -- normalization and splits -------------------------------------------

LabeledDataset zscore_fit_transform(const LabeledDataset& ds);
// Applies stored stats (from a fitted dataset) to another dataset.
LabeledDataset zscore_apply(const LabeledDataset& ds, const std::vector<ChannelStats>& stats);
LabeledDataset zscore_invert(const LabeledDataset& ds);
Tensor zscore_invert_matrix(const Tensor& values, const std::vector<ChannelStats>& stats);

struct SplitResult {
    LabeledDataset train, validation, test;
};
SplitResult split_dataset(const LabeledDataset& ds, double f_train, double f_val, double f_test,
                          std::uint64_t seed);

// -- file formats -------------------------------------------------------

// Samples CSV: header sample_id,t,<KPI names>; one row per (sample, timestep).
// Labels CSV: header sample_id,class_id,source.
void save_dataset(const LabeledDataset& ds, const KpiSchema& schema,
                  const std::string& samples_path, const std::string& labels_path);
LabeledDataset load_dataset(const KpiSchema& schema, const std::string& samples_path,
                            const std::string& labels_path);
// Samples file only, no labels required (e.g. for the weak labeler CLI).
std::vector<KpiSample> load_samples_csv(const KpiSchema& schema, const std::string& samples_path);

}  // namespace dkroot
