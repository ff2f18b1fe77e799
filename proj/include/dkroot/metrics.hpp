#pragma once

// Cluster-separability battery, MI estimator, L2 view audit, classical
// augmentation baselines and the KNN baselines used for reporting.

#include <array>
#include <optional>

#include "dkroot/kpi.hpp"

namespace dkroot {

struct PointCloud {
    Tensor vectors;           // [n, D]
    std::vector<int> labels;  // class ids, one per row

    std::size_t n() const { return vectors.dim(0); }
    std::size_t dim() const { return vectors.dim(1); }
    void validate() const;  // n >= 2, label count matches
};

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // population convention
};

struct MetricsReport {
    double avg_interclass_distance = 0.0;
    double silhouette = 0.0;
    double calinski_harabasz = 0.0;
    double davies_bouldin = 0.0;
    double mutual_information_nats = 0.0;
    std::array<std::optional<double>, RootCause::k_num_classes> per_class_intra_variance;
    double accuracy_mean = 0.0;
    double accuracy_std = 0.0;

    std::string to_json() const;
    static MetricsReport from_json(const std::string& text);
    static std::string csv_header();
    std::string to_csv_row() const;  // flat row matching csv_header()
};

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);
MeanStd mean_std(const std::vector<double>& values);  // population std

// Mean Euclidean distance over unordered class-centroid pairs.
double avg_interclass_distance(const PointCloud& cloud);
// Rousseeuw silhouette; singleton-class points contribute s = 0.
double silhouette(const PointCloud& cloud);
// (B/(k-1))/(W/(n-k)); W = 0 reports +infinity.
double calinski_harabasz(const PointCloud& cloud);
// Coincident centroids report +infinity.
double davies_bouldin(const PointCloud& cloud);
// Per-dimension plug-in MI against labels (16 equal-width bins, nats),
// averaged over dimensions; constant dimensions contribute 0.
double mutual_information(const PointCloud& cloud);
// Per class, mean over dimensions of the population variance; empty classes
// stay absent.
std::array<std::optional<double>, RootCause::k_num_classes> intra_class_variance(
    const PointCloud& cloud);

// Builds the metric feature space from a dataset: rows are flattened samples.
PointCloud cloud_from_dataset(const LabeledDataset& ds);
PointCloud cloud_from_embeddings(const Tensor& embeddings, const std::vector<RootCause>& labels);

MetricsReport metrics_battery(const PointCloud& cloud, const std::vector<double>& seed_accuracies);

// -- L2 view audit -------------------------------------------------------

struct ViewAuditCondition {
    double mean = 0.0;
    double std = 0.0;
};

struct ViewAuditSummary {
    ViewAuditCondition weak_noise, weak_denoise, strong_noise, strong_denoise;
};

// Distances are per matched sample id; noised = before denoising,
// denoised = after the single-step reconstruction.
ViewAuditSummary l2_view_audit(const std::vector<KpiSample>& originals,
                               const std::vector<KpiSample>& weak_noised,
                               const std::vector<KpiSample>& weak_denoised,
                               const std::vector<KpiSample>& strong_noised,
                               const std::vector<KpiSample>& strong_denoised);

// -- classical augmentation baselines ------------------------------------

enum class AugmentKind { NOISE_INJECTION, SCALING };

struct AugmentParams {
    double ratio = 0.1;  // noise injection: x + ratio * sigma_c * N(0,1)
    double sigma = 1.1;  // scaling: x_{c,t} * alpha_t, alpha_t ~ N(1, sigma^2)
};

KpiSample classical_augment(AugmentKind kind, const KpiSample& sample,
                            const AugmentParams& params, Rng& rng);

// -- KNN baselines -------------------------------------------------------

enum class KnnKind { SLIDING, STAT };

// sliding: min over aligned fixed-length windows of the flattened Euclidean
// distance; stat: per-channel (mean, std, min, max, last-first) features.
// Vote and neighbor ties resolve toward the smallest class id.
std::vector<int> knn_baseline(KnnKind kind, const LabeledDataset& train,
                              const LabeledDataset& test, std::size_t k, std::size_t window);

}  // namespace dkroot
