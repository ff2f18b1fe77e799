#include "dkroot/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "json.hpp"

namespace dkroot {

void PointCloud::validate() const {
    if (vectors.shape.size() != 2) throw std::invalid_argument("cloud: vectors must be [n, D]");
    if (n() < 2) throw std::invalid_argument("cloud: need at least 2 points");
    if (labels.size() != n()) throw std::invalid_argument("cloud: labels/vectors mismatch");
}

static const double* cloud_row(const PointCloud& c, std::size_t i) {
    return &c.vectors.data[i * c.dim()];
}

static double row_dist(const PointCloud& c, std::size_t i, std::size_t j) {
    const double *a = cloud_row(c, i), *b = cloud_row(c, j);
    double acc = 0.0;
    for (std::size_t t = 0; t < c.dim(); ++t) acc += (a[t] - b[t]) * (a[t] - b[t]);
    return std::sqrt(acc);
}

// label -> member indices, keyed in ascending label order
static std::map<int, std::vector<std::size_t>> group_by_label(const PointCloud& c) {
    std::map<int, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < c.n(); ++i) groups[c.labels[i]].push_back(i);
    return groups;
}

static std::vector<double> centroid(const PointCloud& c, const std::vector<std::size_t>& members) {
    std::vector<double> ctr(c.dim(), 0.0);
    for (std::size_t i : members) {
        const double* r = cloud_row(c, i);
        for (std::size_t t = 0; t < c.dim(); ++t) ctr[t] += r[t];
    }
    for (double& v : ctr) v /= double(members.size());
    return ctr;
}

static double vec_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t t = 0; t < a.size(); ++t) acc += (a[t] - b[t]) * (a[t] - b[t]);
    return std::sqrt(acc);
}

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.empty() || predictions.size() != labels.size())
        throw std::invalid_argument("accuracy: predictions/labels mismatch");
    double correct = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i)
        if (predictions[i] == labels[i]) correct += 1.0;
    return correct / double(predictions.size());
}

MeanStd mean_std(const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("mean_std: empty input");
    MeanStd out;
    for (double v : values) out.mean += v;
    out.mean /= double(values.size());
    double acc = 0.0;
    for (double v : values) acc += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(acc / double(values.size()));
    return out;
}

double avg_interclass_distance(const PointCloud& cloud) {
    cloud.validate();
    auto groups = group_by_label(cloud);
    if (groups.size() < 2) throw std::invalid_argument("interclass distance: need >= 2 classes");
    std::vector<std::vector<double>> centers;
    for (const auto& [label, members] : groups) centers.push_back(centroid(cloud, members));
    double acc = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < centers.size(); ++i)
        for (std::size_t j = i + 1; j < centers.size(); ++j) {
            acc += vec_dist(centers[i], centers[j]);
            ++pairs;
        }
    return acc / double(pairs);
}

double silhouette(const PointCloud& cloud) {
    cloud.validate();
    auto groups = group_by_label(cloud);
    if (groups.size() < 2) throw std::invalid_argument("silhouette: need >= 2 classes");
    std::vector<std::size_t> class_size(cloud.n());
    for (const auto& [label, members] : groups)
        for (std::size_t i : members) class_size[i] = members.size();

    double acc = 0.0;
    for (std::size_t i = 0; i < cloud.n(); ++i) {
        if (class_size[i] < 2) continue;  // singleton contributes s = 0
        double a = 0.0;
        double b = std::numeric_limits<double>::infinity();
        for (const auto& [label, members] : groups) {
            double sum = 0.0;
            for (std::size_t j : members)
                if (j != i) sum += row_dist(cloud, i, j);
            if (label == cloud.labels[i])
                a = sum / double(members.size() - 1);
            else
                b = std::min(b, sum / double(members.size()));
        }
        const double denom = std::max(a, b);
        if (denom > 0.0) acc += (b - a) / denom;
    }
    return acc / double(cloud.n());
}

double calinski_harabasz(const PointCloud& cloud) {
    cloud.validate();
    auto groups = group_by_label(cloud);
    const std::size_t k = groups.size(), n = cloud.n();
    if (k < 2) throw std::invalid_argument("calinski_harabasz: need >= 2 classes");
    if (n <= k) throw std::invalid_argument("calinski_harabasz: need n > k");

    std::vector<double> global(cloud.dim(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* r = cloud_row(cloud, i);
        for (std::size_t t = 0; t < cloud.dim(); ++t) global[t] += r[t];
    }
    for (double& v : global) v /= double(n);

    double B = 0.0, W = 0.0;
    for (const auto& [label, members] : groups) {
        auto ctr = centroid(cloud, members);
        const double d = vec_dist(ctr, global);
        B += double(members.size()) * d * d;
        for (std::size_t i : members) {
            double acc = 0.0;
            const double* r = cloud_row(cloud, i);
            for (std::size_t t = 0; t < cloud.dim(); ++t) acc += (r[t] - ctr[t]) * (r[t] - ctr[t]);
            W += acc;
        }
    }
    if (W == 0.0) return std::numeric_limits<double>::infinity();
    return (B / double(k - 1)) / (W / double(n - k));
}

double davies_bouldin(const PointCloud& cloud) {
    cloud.validate();
    auto groups = group_by_label(cloud);
    const std::size_t k = groups.size();
    if (k < 2) throw std::invalid_argument("davies_bouldin: need >= 2 classes");

    std::vector<std::vector<double>> centers;
    std::vector<double> spread;
    for (const auto& [label, members] : groups) {
        auto ctr = centroid(cloud, members);
        double s = 0.0;
        for (std::size_t i : members) {
            double acc = 0.0;
            const double* r = cloud_row(cloud, i);
            for (std::size_t t = 0; t < cloud.dim(); ++t) acc += (r[t] - ctr[t]) * (r[t] - ctr[t]);
            s += std::sqrt(acc);
        }
        spread.push_back(s / double(members.size()));
        centers.push_back(std::move(ctr));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        double worst = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            if (j == i) continue;
            const double m = vec_dist(centers[i], centers[j]);
            if (m == 0.0) return std::numeric_limits<double>::infinity();
            worst = std::max(worst, (spread[i] + spread[j]) / m);
        }
        acc += worst;
    }
    return acc / double(k);
}

static constexpr std::size_t k_mi_bins = 16;

double mutual_information(const PointCloud& cloud) {
    cloud.validate();
    const std::size_t n = cloud.n();
    if (n < 10) throw std::invalid_argument("mutual_information: need n >= 10");

    std::map<int, std::size_t> label_slot;
    for (int y : cloud.labels) label_slot.emplace(y, 0);
    std::size_t slot = 0;
    for (auto& [y, s] : label_slot) s = slot++;
    const std::size_t ny = label_slot.size();

    std::vector<double> py(ny, 0.0);
    for (int y : cloud.labels) py[label_slot[y]] += 1.0 / double(n);

    double total = 0.0;
    for (std::size_t d = 0; d < cloud.dim(); ++d) {
        double lo = cloud.vectors.at(0, d), hi = lo;
        for (std::size_t i = 1; i < n; ++i) {
            lo = std::min(lo, cloud.vectors.at(i, d));
            hi = std::max(hi, cloud.vectors.at(i, d));
        }
        if (hi == lo) continue;  // constant dimension carries no information

        std::vector<double> joint(k_mi_bins * ny, 0.0), px(k_mi_bins, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t b = std::size_t((cloud.vectors.at(i, d) - lo) / (hi - lo) * k_mi_bins);
            b = std::min(b, k_mi_bins - 1);  // hi lands in the top bin
            joint[b * ny + label_slot[cloud.labels[i]]] += 1.0 / double(n);
            px[b] += 1.0 / double(n);
        }
        double mi = 0.0;
        for (std::size_t b = 0; b < k_mi_bins; ++b)
            for (std::size_t y = 0; y < ny; ++y) {
                const double p = joint[b * ny + y];
                if (p > 0.0) mi += p * std::log(p / (px[b] * py[y]));
            }
        total += std::max(mi, 0.0);
    }
    return total / double(cloud.dim());
}

std::array<std::optional<double>, RootCause::k_num_classes> intra_class_variance(
    const PointCloud& cloud) {
    cloud.validate();
    std::array<std::optional<double>, RootCause::k_num_classes> out;
    auto groups = group_by_label(cloud);
    for (const auto& [label, members] : groups) {
        if (label < 1 || label > RootCause::k_num_classes)
            throw std::out_of_range("intra_class_variance: label outside 1..6");
        auto ctr = centroid(cloud, members);
        double acc = 0.0;
        for (std::size_t d = 0; d < cloud.dim(); ++d) {
            double v = 0.0;
            for (std::size_t i : members) {
                const double diff = cloud_row(cloud, i)[d] - ctr[d];
                v += diff * diff;
            }
            acc += v / double(members.size());
        }
        out[std::size_t(label - 1)] = acc / double(cloud.dim());
    }
    return out;
}

PointCloud cloud_from_dataset(const LabeledDataset& ds) {
    if (ds.samples.empty()) throw std::invalid_argument("cloud_from_dataset: empty dataset");
    const std::size_t d = ds.samples[0].values.size();
    PointCloud cloud;
    cloud.vectors = Tensor({ds.size(), d});
    cloud.labels.resize(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.samples[i].values.size() != d)
            throw std::invalid_argument("cloud_from_dataset: ragged samples");
        std::copy(ds.samples[i].values.data.begin(), ds.samples[i].values.data.end(),
                  cloud.vectors.data.begin() + long(i * d));
        cloud.labels[i] = ds.labels[i].id;
    }
    return cloud;
}

PointCloud cloud_from_embeddings(const Tensor& embeddings, const std::vector<RootCause>& labels) {
    if (embeddings.dim(0) != labels.size())
        throw std::invalid_argument("cloud_from_embeddings: rows/labels mismatch");
    PointCloud cloud;
    cloud.vectors = embeddings;
    cloud.labels.reserve(labels.size());
    for (const auto& y : labels) cloud.labels.push_back(y.id);
    return cloud;
}

MetricsReport metrics_battery(const PointCloud& cloud, const std::vector<double>& seed_accuracies) {
    MetricsReport r;
    r.avg_interclass_distance = avg_interclass_distance(cloud);
    r.silhouette = silhouette(cloud);
    r.calinski_harabasz = calinski_harabasz(cloud);
    r.davies_bouldin = davies_bouldin(cloud);
    r.mutual_information_nats = mutual_information(cloud);
    r.per_class_intra_variance = intra_class_variance(cloud);
    if (!seed_accuracies.empty()) {
        MeanStd ms = mean_std(seed_accuracies);
        r.accuracy_mean = ms.mean;
        r.accuracy_std = ms.std;
    }
    return r;
}

std::string MetricsReport::to_json() const {
    nlohmann::json j;
    j["avg_interclass_distance"] = avg_interclass_distance;
    j["silhouette"] = silhouette;
    j["calinski_harabasz"] = calinski_harabasz;
    j["davies_bouldin"] = davies_bouldin;
    j["mutual_information_nats"] = mutual_information_nats;
    auto& arr = j["per_class_intra_variance"] = nlohmann::json::array();
    for (const auto& v : per_class_intra_variance)
        arr.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
    j["accuracy_mean"] = accuracy_mean;
    j["accuracy_std"] = accuracy_std;
    return j.dump(2);
}

MetricsReport MetricsReport::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    MetricsReport r;
    r.avg_interclass_distance = j.at("avg_interclass_distance").get<double>();
    r.silhouette = j.at("silhouette").get<double>();
    r.calinski_harabasz = j.at("calinski_harabasz").get<double>();
    r.davies_bouldin = j.at("davies_bouldin").get<double>();
    r.mutual_information_nats = j.at("mutual_information_nats").get<double>();
    const auto& arr = j.at("per_class_intra_variance");
    if (arr.size() != r.per_class_intra_variance.size())
        throw std::invalid_argument("metrics json: bad intra-variance arity");
    for (std::size_t i = 0; i < arr.size(); ++i)
        if (!arr[i].is_null()) r.per_class_intra_variance[i] = arr[i].get<double>();
    r.accuracy_mean = j.at("accuracy_mean").get<double>();
    r.accuracy_std = j.at("accuracy_std").get<double>();
    return r;
}

std::string MetricsReport::csv_header() {
    std::ostringstream os;
    os << "avg_interclass_distance,silhouette,calinski_harabasz,davies_bouldin,"
       << "mutual_information_nats";
    for (int c = 1; c <= RootCause::k_num_classes; ++c) os << ",intra_var_class" << c;
    os << ",accuracy_mean,accuracy_std";
    return os.str();
}

std::string MetricsReport::to_csv_row() const {
    std::ostringstream os;
    os.precision(17);
    os << avg_interclass_distance << ',' << silhouette << ',' << calinski_harabasz << ','
       << davies_bouldin << ',' << mutual_information_nats;
    for (const auto& v : per_class_intra_variance) {
        os << ',';
        if (v) os << *v;
    }
    os << ',' << accuracy_mean << ',' << accuracy_std;
    return os.str();
}

// -- L2 view audit -------------------------------------------------------

static ViewAuditCondition audit_condition(const std::vector<KpiSample>& originals,
                                          const std::vector<KpiSample>& views) {
    if (views.size() != originals.size())
        throw std::invalid_argument("l2_view_audit: length mismatch");
    std::vector<double> d(originals.size());
    for (std::size_t i = 0; i < originals.size(); ++i) {
        if (views[i].sample_id != originals[i].sample_id)
            throw std::invalid_argument("l2_view_audit: sample id mismatch at row " +
                                        std::to_string(i));
        d[i] = l2_distance(originals[i].values, views[i].values);
    }
    MeanStd ms = mean_std(d);
    return ViewAuditCondition{ms.mean, ms.std};
}

ViewAuditSummary l2_view_audit(const std::vector<KpiSample>& originals,
                               const std::vector<KpiSample>& weak_noised,
                               const std::vector<KpiSample>& weak_denoised,
                               const std::vector<KpiSample>& strong_noised,
                               const std::vector<KpiSample>& strong_denoised) {
    if (originals.empty()) throw std::invalid_argument("l2_view_audit: empty input");
    ViewAuditSummary s;
    s.weak_noise = audit_condition(originals, weak_noised);
    s.weak_denoise = audit_condition(originals, weak_denoised);
    s.strong_noise = audit_condition(originals, strong_noised);
    s.strong_denoise = audit_condition(originals, strong_denoised);
    return s;
}

// -- classical augmentation baselines ------------------------------------

KpiSample classical_augment(AugmentKind kind, const KpiSample& sample,
                            const AugmentParams& params, Rng& rng) {
    KpiSample out = sample;
    const std::size_t m = sample.m(), l = sample.l();
    switch (kind) {
        case AugmentKind::NOISE_INJECTION: {
            for (std::size_t c = 0; c < m; ++c) {
                double mean = 0.0;
                for (std::size_t t = 0; t < l; ++t) mean += sample.values.at(c, t);
                mean /= double(l);
                double var = 0.0;
                for (std::size_t t = 0; t < l; ++t) {
                    const double d = sample.values.at(c, t) - mean;
                    var += d * d;
                }
                const double sigma = std::sqrt(var / double(l));  // per-channel temporal std
                for (std::size_t t = 0; t < l; ++t)
                    out.values.at(c, t) += params.ratio * sigma * rng.normal();
            }
            return out;
        }
        case AugmentKind::SCALING: {
            for (std::size_t t = 0; t < l; ++t) {
                const double alpha = rng.normal(1.0, params.sigma);
                for (std::size_t c = 0; c < m; ++c) out.values.at(c, t) *= alpha;
            }
            return out;
        }
    }
    throw std::invalid_argument("classical_augment: unknown kind");
}

// -- KNN baselines -------------------------------------------------------

static double sliding_distance(const Tensor& a, const Tensor& b, std::size_t window) {
    const std::size_t m = a.dim(0), l = a.dim(1);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t off = 0; off + window <= l; ++off) {
        double acc = 0.0;
        for (std::size_t c = 0; c < m; ++c)
            for (std::size_t t = off; t < off + window; ++t) {
                const double d = a.at(c, t) - b.at(c, t);
                acc += d * d;
            }
        best = std::min(best, std::sqrt(acc));
    }
    return best;
}

static std::vector<double> stat_features(const Tensor& x) {
    const std::size_t m = x.dim(0), l = x.dim(1);
    std::vector<double> f;
    f.reserve(m * 5);
    for (std::size_t c = 0; c < m; ++c) {
        double mean = 0.0, lo = x.at(c, 0), hi = x.at(c, 0);
        for (std::size_t t = 0; t < l; ++t) {
            mean += x.at(c, t);
            lo = std::min(lo, x.at(c, t));
            hi = std::max(hi, x.at(c, t));
        }
        mean /= double(l);
        double var = 0.0;
        for (std::size_t t = 0; t < l; ++t) {
            const double d = x.at(c, t) - mean;
            var += d * d;
        }
        f.push_back(mean);
        f.push_back(std::sqrt(var / double(l)));
        f.push_back(lo);
        f.push_back(hi);
        f.push_back(x.at(c, l - 1) - x.at(c, 0));
    }
    return f;
}

std::vector<int> knn_baseline(KnnKind kind, const LabeledDataset& train,
                              const LabeledDataset& test, std::size_t k, std::size_t window) {
    if (train.samples.empty()) throw std::invalid_argument("knn: empty train set");
    if (k < 1) throw std::invalid_argument("knn: k >= 1");
    if (kind == KnnKind::SLIDING &&
        (window < 1 || window > train.samples[0].l()))
        throw std::invalid_argument("knn: window must be in [1, l]");

    std::vector<std::vector<double>> train_stats;
    if (kind == KnnKind::STAT)
        for (const auto& s : train.samples) train_stats.push_back(stat_features(s.values));

    std::vector<int> preds(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
        std::vector<std::pair<double, std::size_t>> dist(train.size());
        if (kind == KnnKind::SLIDING) {
            for (std::size_t j = 0; j < train.size(); ++j)
                dist[j] = {sliding_distance(test.samples[i].values, train.samples[j].values, window),
                           j};
        } else {
            auto tf = stat_features(test.samples[i].values);
            for (std::size_t j = 0; j < train.size(); ++j) {
                double acc = 0.0;
                for (std::size_t t = 0; t < tf.size(); ++t) {
                    const double d = tf[t] - train_stats[j][t];
                    acc += d * d;
                }
                dist[j] = {std::sqrt(acc), j};
            }
        }
        const std::size_t kk = std::min(k, train.size());
        std::partial_sort(dist.begin(), dist.begin() + long(kk), dist.end());
        std::array<std::size_t, RootCause::k_num_classes> votes{};
        for (std::size_t j = 0; j < kk; ++j)
            ++votes[std::size_t(train.labels[dist[j].second].id - 1)];
        std::size_t best = 0;
        for (std::size_t c = 1; c < votes.size(); ++c)
            if (votes[c] > votes[best]) best = c;  // ties keep the smaller id
        preds[i] = int(best) + 1;
    }
    return preds;
}

}  // namespace dkroot
