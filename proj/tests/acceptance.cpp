// Acceptance battery: one pass/fail line per criterion. Exact property
// checks run against literal-definition oracles; the directional criteria
// run the full pipeline at its default desk-scale regime.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dkroot/pipeline.hpp"
#include "json.hpp"

using namespace dkroot;
using namespace dkroot::nn;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Fail : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool cond, const std::string& msg) {
    if (!cond) throw Fail(msg);
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

int g_failures = 0;

// runs one criterion, prints a single PASS/FAIL line, returns elapsed seconds
double criterion(int n, const std::string& name, const std::function<std::string()>& body) {
    const auto start = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = true;
    try {
        detail = body();
    } catch (const std::exception& e) {
        ok = false;
        detail = e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %2d (%s): %s [%.1f s] %s\n", n, name.c_str(),
                ok ? "PASS" : "FAIL", secs, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
    return secs;
}

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = scale * rng.normal();
    return t;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot read " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

fs::path scratch_root() {
    fs::path p = fs::temp_directory_path() / "dkroot-acceptance";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// -- criterion 1: diffusion moment law -----------------------------------

std::string c1_moment_law() {
    NoiseSchedule s = build_schedule(100, 1e-4, 0.02);
    // entries bounded away from zero so the 5% relative mean check is stable
    Tensor x0({3, 5});
    for (std::size_t i = 0; i < x0.size(); ++i)
        x0.data[i] = (i % 2 ? 1.0 : -1.0) * (1.0 + 0.25 * double(i % 5));

    double worst = 0.0;
    for (std::size_t t : {std::size_t(1), std::size_t(25), std::size_t(50), std::size_t(100)}) {
        Rng rng(1000 + t);
        const int n = 10000;
        Tensor mean(x0.shape), m2(x0.shape);
        for (int k = 0; k < n; ++k) {
            Tensor eps = random_tensor(x0.shape, rng);
            Tensor xt = forward_noise(x0, t, eps, s);
            for (std::size_t i = 0; i < xt.size(); ++i) {
                mean.data[i] += xt.data[i];
                m2.data[i] += xt.data[i] * xt.data[i];
            }
        }
        const double want_var = 1.0 - s.ab(t);
        for (std::size_t i = 0; i < x0.size(); ++i) {
            const double mu = mean.data[i] / n;
            const double var = m2.data[i] / n - mu * mu;
            const double want_mu = std::sqrt(s.ab(t)) * x0.data[i];
            const double rel_mu = std::abs(mu - want_mu) / std::abs(want_mu);
            const double rel_var = std::abs(var - want_var) / want_var;
            worst = std::max(worst, std::max(rel_mu, rel_var));
            require(rel_mu <= 0.05, "t=" + std::to_string(t) + " mean off by " + fmt(rel_mu));
            require(rel_var <= 0.05, "t=" + std::to_string(t) + " var off by " + fmt(rel_var));
        }
    }
    return "max rel err " + fmt(worst) + " over t in {1,25,50,100}, 10000 draws";
}

// -- criterion 2: perfect-oracle inversion -------------------------------

std::string c2_oracle_inversion() {
    NoiseSchedule s = build_schedule(100, 1e-4, 0.02);
    Rng rng(19);
    Tensor x0 = random_tensor({3, 6}, rng);
    double worst = 0.0;
    for (std::size_t t = 1; t <= 100; ++t) {
        // the true eps is recoverable from x_t in closed form given x0
        PredictFn oracle = [&](const Tensor& x_t, std::size_t tt, int) {
            const double sa = std::sqrt(s.ab(tt)), sb = std::sqrt(1.0 - s.ab(tt));
            Tensor eps = x_t;
            for (std::size_t i = 0; i < eps.size(); ++i)
                eps.data[i] = (x_t.data[i] - sa * x0.data[i]) / sb;
            return eps;
        };
        Tensor out = augment_single_step(x0, t, 1, oracle, s, rng);
        for (std::size_t i = 0; i < x0.size(); ++i)
            worst = std::max(worst, std::abs(out.data[i] - x0.data[i]));
    }
    require(worst < 1e-9, "max abs deviation " + fmt(worst));
    return "max |x0' - x0| = " + fmt(worst) + " over all t in 1..100";
}

// -- criterion 3: supcon oracle equivalence ------------------------------

double supcon_oracle(const Tensor& z, const std::vector<int>& labels, double tau) {
    const std::size_t n = z.dim(0);
    double total = 0.0;
    std::size_t anchors = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> pos;
        for (std::size_t k = 0; k < n; ++k)
            if (k != i && labels[k] == labels[i]) pos.push_back(k);
        if (pos.empty()) continue;
        ++anchors;
        std::vector<double> sims;
        for (std::size_t k = 0; k < n; ++k) {
            if (k == i) continue;
            double dot = 0.0;
            for (std::size_t d = 0; d < z.dim(1); ++d) dot += z.at(i, d) * z.at(k, d);
            sims.push_back(dot / tau);
        }
        const double lse = logsumexp(sims);
        double inner = 0.0;
        for (std::size_t k : pos) {
            double dot = 0.0;
            for (std::size_t d = 0; d < z.dim(1); ++d) dot += z.at(i, d) * z.at(k, d);
            inner += dot / tau - lse;
        }
        total += inner / double(pos.size());
    }
    if (anchors == 0) return 0.0;
    return -total / double(anchors);
}

std::string c3_supcon_oracle() {
    const double taus[3] = {0.05, 0.1, 1.0};
    Rng rng(61);
    double worst = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t n = 2 + 2 * std::size_t(rng.uniform_int(0, 31));
        const std::size_t d = 4 + std::size_t(rng.uniform_int(0, 12));
        ContrastBatch batch;
        batch.features = Tensor({n, d});
        batch.labels.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            double norm = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                batch.features.at(i, j) = rng.normal();
                norm += batch.features.at(i, j) * batch.features.at(i, j);
            }
            norm = std::sqrt(norm);
            for (std::size_t j = 0; j < d; ++j) batch.features.at(i, j) /= norm;
            batch.labels[i] = 1 + int(rng.uniform_int(0, 5));
        }
        const double tau = taus[rep % 3];
        const double fast = supcon_loss(batch, tau);
        const double slow = supcon_oracle(batch.features, batch.labels, tau);
        const double err = std::abs(fast - slow) / std::max(1.0, std::abs(slow));
        worst = std::max(worst, err);
        require(err <= 1e-9, "batch " + std::to_string(rep) + " err " + fmt(err));
    }
    // four identical embeddings with one shared label -> ln 3 for every tau
    for (double tau : taus) {
        ContrastBatch same;
        same.features = Tensor({4, 3});
        for (std::size_t i = 0; i < 4; ++i) same.features.at(i, 0) = 1.0;
        same.labels = {2, 2, 2, 2};
        const double got = supcon_loss(same, tau);
        require(std::abs(got - std::log(3.0)) <= 1e-9,
                "identical fixture at tau " + fmt(tau) + " gave " + fmt(got));
    }
    return "50 random batches + ln 3 fixture, max rel err " + fmt(worst);
}

// -- criterion 4: gradient suite -----------------------------------------

std::string c4_gradients() {
    double worst = 0.0;
    auto track = [&](const FdiffReport& r, const std::string& what) {
        worst = std::max(worst, r.max_rel_err);
        require(r.pass, what + " max rel err " + fmt(r.max_rel_err) + " > " + fmt(r.tolerance));
    };

    // every registered primitive at 1e-5
    {
        Rng rng(17);
        ParamStore ps;
        ps.add("x", random_tensor({2, 9}, rng));
        ps.add("w", random_tensor({3, 2, 3}, rng, 0.5));
        ps.add("b", random_tensor({3}, rng, 0.1));
        ps.add("dw", random_tensor({4, 6}, rng, 0.5));
        ps.add("db", random_tensor({4}, rng, 0.1));
        ps.add("v", random_tensor({5}, rng));
        const Tensor g29 = random_tensor({3, 9}, rng), g35 = random_tensor({3, 5}, rng);
        const Tensor g6 = random_tensor({6}, rng), g4 = random_tensor({4}, rng);
        const Tensor g218 = random_tensor({2, 18}, rng), g79 = random_tensor({7, 9}, rng);
        const Tensor gx = random_tensor({2, 9}, rng), g18 = random_tensor({18}, rng);

        auto prim = [&](const char* what, const std::function<NodeRef(Tape&)>& build) {
            auto eval = [&](bool with_grad) {
                Tape tape;
                NodeRef loss = build(tape);
                double out = loss->value.at(0);
                if (with_grad) {
                    ps.zero_grad();
                    tape.backward(loss);
                }
                return out;
            };
            track(finite_diff_check(eval, ps, 1e-5, 1e-5), what);
        };
        prim("conv1d s1", [&](Tape& t) {
            return sum(mul(
                conv1d(t.param(ps.get("x")), t.param(ps.get("w")), t.param(ps.get("b")), 1),
                t.leaf(g29)));
        });
        prim("conv1d s2", [&](Tape& t) {
            return sum(mul(
                conv1d(t.param(ps.get("x")), t.param(ps.get("w")), t.param(ps.get("b")), 2),
                t.leaf(g35)));
        });
        prim("dense", [&](Tape& t) {
            return sum(
                mul(dense(t.leaf(g6), t.param(ps.get("dw")), t.param(ps.get("db"))), t.leaf(g4)));
        });
        prim("relu", [&](Tape& t) { return sum(relu(t.param(ps.get("x")))); });
        prim("upsample2",
             [&](Tape& t) { return sum(mul(upsample2(t.param(ps.get("x"))), t.leaf(g218))); });
        prim("concat+broadcast", [&](Tape& t) {
            NodeRef cat = concat_rows(t.param(ps.get("x")), broadcast_time(t.param(ps.get("v")), 9));
            return sum(mul(cat, t.leaf(g79)));
        });
        prim("row+mean", [&](Tape& t) { return mean(row(t.param(ps.get("dw")), 2)); });
        prim("mse", [&](Tape& t) { return mse(t.param(ps.get("x")), t.leaf(gx)); });
        prim("l2_normalize_flatten", [&](Tape& t) {
            return sum(mul(l2_normalize_flatten(t.param(ps.get("x"))), t.leaf(g18)));
        });
        prim("cross_entropy_logits",
             [&](Tape& t) { return cross_entropy_logits(t.param(ps.get("v")), 3); });
        prim("stack+gram+supcon", [&](Tape& t) {
            std::vector<NodeRef> rows;
            for (std::size_t i = 0; i < 4; ++i)
                rows.push_back(l2_normalize_flatten(row(t.param(ps.get("dw")), i)));
            return supcon(gram(stack_rows(rows)), {1, 2, 1, 2}, 0.5);
        });
    }

    // reduced-width noise predictor through the diffusion loss at 1e-3
    {
        PredictorConfig pc;
        pc.m = 4;
        pc.l = 8;
        pc.T = 10;
        pc.embed_dim = 6;
        pc.c1 = 6;
        pc.c2 = 8;
        NoisePredictor pred(pc, 3);
        NoiseSchedule s = build_schedule(pc.T, 1e-4, 0.02);
        Rng rng(71);
        std::vector<std::pair<Tensor, int>> batch;
        batch.emplace_back(random_tensor({pc.m, pc.l}, rng), 2);
        batch.emplace_back(random_tensor({pc.m, pc.l}, rng), 5);
        auto eval = [&](bool with_grad) {
            Tape tape;
            Rng r(123);  // same stream every call: loss is deterministic in params
            NodeRef loss = diffusion_loss_node(tape, batch, s, pred, r);
            double out = loss->value.at(0);
            if (with_grad) {
                pred.params().zero_grad();
                tape.backward(loss);
            }
            return out;
        };
        track(finite_diff_check(eval, pred.params(), 1e-5, 1e-3), "noise predictor");
    }

    EncoderConfig ec;
    ec.m = KpiSchema::default_schema().m();
    ec.l = 8;
    ec.c1 = 5;
    ec.c2 = 6;
    ec.c3 = 6;

    // encoder + supcon composite at 1e-3
    {
        Encoder enc(ec, 21);
        Rng rng(37);
        std::vector<Tensor> xs;
        for (int i = 0; i < 4; ++i) xs.push_back(random_tensor({ec.m, ec.l}, rng));
        const std::vector<int> labels = {1, 2, 1, 2};
        auto eval = [&](bool with_grad) {
            Tape tape;
            std::vector<NodeRef> rows;
            for (const auto& x : xs)
                rows.push_back(l2_normalize_flatten(enc.forward_node(tape, x)));
            NodeRef loss = supcon(gram(stack_rows(rows)), labels, 0.1);
            double out = loss->value.at(0);
            if (with_grad) {
                enc.params().zero_grad();
                tape.backward(loss);
            }
            return out;
        };
        track(finite_diff_check(eval, enc.params(), 1e-5, 1e-3), "encoder+supcon");
    }

    // encoder + head + cross-entropy composite at 1e-3
    {
        Encoder enc(ec, 9);
        ClassifierHead head(ec.feature_dim(), 10);
        Rng rng(11);
        Tensor x = random_tensor({ec.m, ec.l}, rng);
        auto eval_for = [&](ParamStore& target) {
            return [&](bool with_grad) {
                Tape tape;
                NodeRef loss = cross_entropy_logits(
                    head.logits_node(tape, flatten(enc.forward_node(tape, x))), 2);
                double out = loss->value.at(0);
                if (with_grad) {
                    target.zero_grad();
                    tape.backward(loss);
                }
                return out;
            };
        };
        track(finite_diff_check(eval_for(head.params()), head.params(), 1e-5, 1e-3), "head+ce");
        track(finite_diff_check(eval_for(enc.params()), enc.params(), 1e-5, 1e-3), "encoder+ce");
    }
    return "primitives, predictor and both composites; worst rel err " + fmt(worst);
}

// -- criterion 5: clustering-metric oracles ------------------------------

PointCloud make_cloud(const std::vector<std::vector<double>>& rows, const std::vector<int>& labels) {
    PointCloud c;
    const std::size_t n = rows.size(), d = rows[0].size();
    c.vectors = Tensor({n, d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) c.vectors.at(i, j) = rows[i][j];
    c.labels = labels;
    return c;
}

double cloud_dist(const PointCloud& c, std::size_t i, std::size_t j) {
    double acc = 0.0;
    for (std::size_t t = 0; t < c.dim(); ++t) {
        const double d = c.vectors.at(i, t) - c.vectors.at(j, t);
        acc += d * d;
    }
    return std::sqrt(acc);
}

double silhouette_oracle(const PointCloud& c) {
    std::set<int> classes(c.labels.begin(), c.labels.end());
    double total = 0.0;
    for (std::size_t i = 0; i < c.n(); ++i) {
        std::size_t own = 0;
        for (int y : c.labels)
            if (y == c.labels[i]) ++own;
        if (own < 2) continue;
        double a = 0.0, b = std::numeric_limits<double>::infinity();
        for (int y : classes) {
            double sum = 0.0;
            std::size_t cnt = 0;
            for (std::size_t j = 0; j < c.n(); ++j) {
                if (c.labels[j] != y || j == i) continue;
                sum += cloud_dist(c, i, j);
                ++cnt;
            }
            if (y == c.labels[i])
                a = sum / double(cnt);
            else
                b = std::min(b, sum / double(cnt));
        }
        if (std::max(a, b) > 0.0) total += (b - a) / std::max(a, b);
    }
    return total / double(c.n());
}

std::vector<double> class_centroid(const PointCloud& c, int y) {
    std::vector<double> ctr(c.dim(), 0.0);
    std::size_t cnt = 0;
    for (std::size_t i = 0; i < c.n(); ++i) {
        if (c.labels[i] != y) continue;
        for (std::size_t t = 0; t < c.dim(); ++t) ctr[t] += c.vectors.at(i, t);
        ++cnt;
    }
    for (double& v : ctr) v /= double(cnt);
    return ctr;
}

double ch_oracle(const PointCloud& c) {
    std::set<int> classes(c.labels.begin(), c.labels.end());
    const std::size_t k = classes.size(), n = c.n();
    std::vector<double> grand(c.dim(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 0; t < c.dim(); ++t) grand[t] += c.vectors.at(i, t) / double(n);
    double B = 0.0, W = 0.0;
    for (int y : classes) {
        auto ctr = class_centroid(c, y);
        std::size_t nk = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (c.labels[i] != y) continue;
            ++nk;
            for (std::size_t t = 0; t < c.dim(); ++t)
                W += (c.vectors.at(i, t) - ctr[t]) * (c.vectors.at(i, t) - ctr[t]);
        }
        for (std::size_t t = 0; t < c.dim(); ++t)
            B += double(nk) * (ctr[t] - grand[t]) * (ctr[t] - grand[t]);
    }
    return (B / double(k - 1)) / (W / double(n - k));
}

double db_oracle(const PointCloud& c) {
    std::set<int> cls(c.labels.begin(), c.labels.end());
    std::vector<int> classes(cls.begin(), cls.end());
    const std::size_t k = classes.size();
    std::vector<std::vector<double>> ctrs;
    std::vector<double> S;
    for (int y : classes) {
        auto ctr = class_centroid(c, y);
        double s = 0.0;
        std::size_t cnt = 0;
        for (std::size_t i = 0; i < c.n(); ++i) {
            if (c.labels[i] != y) continue;
            double acc = 0.0;
            for (std::size_t t = 0; t < c.dim(); ++t)
                acc += (c.vectors.at(i, t) - ctr[t]) * (c.vectors.at(i, t) - ctr[t]);
            s += std::sqrt(acc);
            ++cnt;
        }
        S.push_back(s / double(cnt));
        ctrs.push_back(std::move(ctr));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        double worst = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            if (i == j) continue;
            double m = 0.0;
            for (std::size_t t = 0; t < c.dim(); ++t)
                m += (ctrs[i][t] - ctrs[j][t]) * (ctrs[i][t] - ctrs[j][t]);
            worst = std::max(worst, (S[i] + S[j]) / std::sqrt(m));
        }
        acc += worst;
    }
    return acc / double(k);
}

double interclass_oracle(const PointCloud& c) {
    std::set<int> classes(c.labels.begin(), c.labels.end());
    std::vector<std::vector<double>> ctrs;
    for (int y : classes) ctrs.push_back(class_centroid(c, y));
    double acc = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < ctrs.size(); ++i)
        for (std::size_t j = i + 1; j < ctrs.size(); ++j) {
            double d = 0.0;
            for (std::size_t t = 0; t < c.dim(); ++t)
                d += (ctrs[i][t] - ctrs[j][t]) * (ctrs[i][t] - ctrs[j][t]);
            acc += std::sqrt(d);
            ++pairs;
        }
    return acc / double(pairs);
}

std::string c5_metric_oracles() {
    // the silhouette/DB values hold on the gap-10.0 variant of the four-point
    // fixture; the CH = 4900.5 value requires the gap-9.9 variant (B = 98.01,
    // W = 0.04 by hand), so each is checked on its own variant
    PointCloud c = make_cloud({{0.0}, {0.2}, {10.0}, {10.2}}, {1, 1, 2, 2});
    require(std::abs(silhouette(c) - 0.980) <= 0.001,
            "four-point silhouette " + fmt(silhouette(c)));
    require(std::abs(davies_bouldin(c) - 0.02) <= 1e-6,
            "four-point DB " + fmt(davies_bouldin(c)));
    require(std::abs(avg_interclass_distance(c) - 10.0) <= 1e-9,
            "four-point interclass " + fmt(avg_interclass_distance(c)));
    PointCloud c2 = make_cloud({{0.0}, {0.2}, {9.9}, {10.1}}, {1, 1, 2, 2});
    require(std::abs(calinski_harabasz(c2) - 4900.5) <= 0.1,
            "four-point CH " + fmt(calinski_harabasz(c2)));
    auto var = intra_class_variance(c);
    require(var[0] && std::abs(*var[0] - 0.01) <= 1e-9, "class-1 intra variance");
    require(var[1] && std::abs(*var[1] - 0.01) <= 1e-9, "class-2 intra variance");

    Rng rng(41);
    double worst = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t n = 20 + std::size_t(rng.uniform_int(0, 180));
        const std::size_t d = 1 + std::size_t(rng.uniform_int(0, 5));
        const int k = 2 + int(rng.uniform_int(0, 4));
        PointCloud rc;
        rc.vectors = Tensor({n, d});
        rc.labels.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const int y = 1 + int(rng.uniform_int(0, k - 1));
            rc.labels[i] = y;
            for (std::size_t j = 0; j < d; ++j)
                rc.vectors.at(i, j) = 3.0 * double(y) * (j == 0 ? 1.0 : 0.3) + rng.normal();
        }
        rc.labels[0] = 1;
        rc.labels[1] = 2;
        auto close = [&](double got, double want, const char* what) {
            const double err = std::abs(got - want) / std::max(1.0, std::abs(want));
            worst = std::max(worst, err);
            require(err <= 1e-9, std::string(what) + " err " + fmt(err));
        };
        close(silhouette(rc), silhouette_oracle(rc), "silhouette");
        close(calinski_harabasz(rc), ch_oracle(rc), "CH");
        close(davies_bouldin(rc), db_oracle(rc), "DB");
        close(avg_interclass_distance(rc), interclass_oracle(rc), "interclass");
    }
    return "fixtures + 20 random clouds, worst oracle err " + fmt(worst);
}

// -- criterion 9: rule-engine truth table --------------------------------

struct SampleBuilder {
    const KpiSchema& schema = KpiSchema::default_schema();
    KpiSample s;
    SampleBuilder() {
        s.sample_id = "tt";
        s.values = Tensor({schema.m(), 8});
    }
    SampleBuilder& set(const std::string& kpi, std::size_t t, double v) {
        s.values.at(schema.index_of(kpi), t) = v;
        return *this;
    }
    std::optional<RootCause> label() const {
        return rule_label(s, RuleSet::default_ruleset(), schema);
    }
};

SampleBuilder class2_base() {
    SampleBuilder b;
    b.set("PDCP_UL_LATENCY", 3, 250)
        .set("RLC_UL_LATENCY", 2, 210)
        .set("UL_RLC_RETX_SDU", 4, 0.2)
        .set("UL_RLC_SDU", 4, 1.0)
        .set("UL_RBLER", 1, 0.15)
        .set("UL_DMRS_RSRP_MIN", 5, -130);
    return b;
}

std::string c9_truth_table() {
    int cases = 0;
    auto expect = [&](const SampleBuilder& b, bool fires, const char* what) {
        ++cases;
        auto lbl = b.label();
        if (fires)
            require(lbl && lbl->id == 2, std::string("case '") + what + "' should fire class 2");
        else
            require(!lbl, std::string("case '") + what + "' should not fire");
    };

    expect(class2_base(), true, "reference pass");
    expect(SampleBuilder(), false, "all zeros");
    {
        auto b = class2_base();
        b.s.values.at(b.schema.index_of("UL_DMRS_RSRP_MIN"), 5) = -120;
        b.set("UL_SRS_RSRP", 5, -125);
        expect(b, false, "condition 5 fails on both branches");
    }
    {
        auto b = class2_base();
        b.s.values.at(b.schema.index_of("PDCP_UL_LATENCY"), 3) = 0;
        b.set("PDCP_DL_LATENCY", 0, 220);
        expect(b, true, "condition 1 via DL branch");
    }
    {
        auto b = class2_base();
        b.s.values.at(b.schema.index_of("PDCP_UL_LATENCY"), 3) = 199;
        expect(b, false, "condition 1 fails at 199");
    }
    {
        auto b = class2_base();
        b.s.values.at(b.schema.index_of("RLC_UL_LATENCY"), 2) = 150;
        expect(b, false, "condition 2 fails");
    }
    {
        auto b = class2_base();
        b.s.values.at(b.schema.index_of("UL_RLC_RETX_SDU"), 4) = 0.05;
        expect(b, false, "condition 3 ratio below threshold");
    }
    {
        auto b = class2_base();
        b.s.values.at(b.schema.index_of("UL_RLC_SDU"), 4) = 0;
        b.s.values.at(b.schema.index_of("UL_RLC_RETX_SDU"), 4) = 2e-6;
        expect(b, true, "condition 3 epsilon guard passes");  // 2e-6 / 1e-5 = 0.2
    }
    {
        auto b = class2_base();
        b.s.values.at(b.schema.index_of("UL_RLC_SDU"), 4) = 0;
        b.s.values.at(b.schema.index_of("UL_RLC_RETX_SDU"), 4) = 5e-7;
        expect(b, false, "condition 3 epsilon guard fails");  // 5e-7 / 1e-5 = 0.05
    }
    {
        auto b = class2_base();
        b.s.values.at(b.schema.index_of("UL_RBLER"), 1) = 0.099;
        expect(b, false, "condition 4 just below threshold");
    }
    {
        auto b = class2_base();
        b.s.values.at(b.schema.index_of("UL_RBLER"), 1) = 0;
        b.set("UL_DTX_Ratio", 6, 0.2);
        expect(b, true, "condition 4 DTX branch at GE boundary");
    }
    {
        auto b = class2_base();
        b.s.values.at(b.schema.index_of("PDCP_UL_LATENCY"), 3) = 200;
        b.s.values.at(b.schema.index_of("UL_DMRS_RSRP_MIN"), 5) = 0;
        b.set("UL_SRS_RSRP", 0, -130);
        expect(b, true, "boundary GE 200 + SRS LE -130");
    }
    return std::to_string(cases) + " handcrafted cases incl. both epsilon-guard boundaries";
}

// -- criteria 6/7: Stage I view audits -----------------------------------

struct StageOneArtifacts {
    NoiseSchedule schedule;
    NoisePredictor predictor;
    LabeledDataset rule_norm;   // normalized rule pool
    LabeledDataset expert_test; // normalized expert test split
};

Tensor reverse_step(const Tensor& x_t, const Tensor& eps_hat, double ab) {
    Tensor out = x_t;
    const double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data[i] = (x_t.data[i] - sb * eps_hat.data[i]) / sa;
    return out;
}

struct FourViews {
    Tensor weak_noised, weak_denoised, strong_noised, strong_denoised;
};

FourViews four_views(const Tensor& x0, int y, const NoiseSchedule& sched,
                     const NoisePredictor& pred, Rng rng) {
    ViewTimesteps ts = sample_view_timesteps(ViewPolicy{}, sched.T, rng);
    FourViews v;
    auto one = [&](std::size_t t, Tensor& noised, Tensor& denoised) {
        Tensor eps = x0;
        for (double& e : eps.data) e = rng.normal();
        noised = forward_noise(x0, t, eps, sched);
        denoised = reverse_step(noised, pred.predict(noised, t, y), sched.ab(t));
    };
    one(ts.t_weak, v.weak_noised, v.weak_denoised);
    one(ts.t_strong, v.strong_noised, v.strong_denoised);
    return v;
}

StageOneArtifacts train_stage_one(const fs::path& dir) {
    PipelineConfig cfg;
    cfg.n_seeds = 1;
    Pipeline pipe(cfg, dir.string());
    pipe.gen_data();
    pipe.run_diffusion(cfg.base_seed);

    const KpiSchema& schema = KpiSchema::default_schema();
    LabeledDataset rule = load_dataset(schema, pipe.data_dir() + "/rule_samples.csv",
                                       pipe.data_dir() + "/rule_labels.csv");
    LabeledDataset expert = load_dataset(schema, pipe.data_dir() + "/expert_samples.csv",
                                         pipe.data_dir() + "/expert_labels.csv");
    SplitResult split = split_dataset(expert, 0.70, 0.15, 0.15, cfg.base_seed);
    LabeledDataset train = zscore_fit_transform(split.train);

    PredictorConfig pc;
    pc.m = schema.m();
    pc.l = cfg.data.l;
    pc.T = cfg.diffusion.T;
    pc.embed_dim = cfg.diffusion.embed_dim;
    StageOneArtifacts art{
        build_schedule(cfg.diffusion.T, cfg.diffusion.beta_start, cfg.diffusion.beta_end),
        NoisePredictor(pc, 0),
        zscore_apply(rule, train.normalization_stats),
        zscore_apply(split.test, train.normalization_stats)};
    load_params(art.predictor.params(),
                pipe.seed_dir(cfg.base_seed) + "/diffusion.ckpt.json", pc.fingerprint());
    return art;
}

std::string c6_view_audit(const StageOneArtifacts& art) {
    const std::size_t reps = 4;
    double wn = 0.0, wd = 0.0, sn = 0.0, sd = 0.0;
    std::size_t trials = 0, sd_above_wd = 0;
    const Rng base(777);
    for (std::size_t i = 0; i < art.expert_test.size(); ++i)
        for (std::size_t r = 0; r < reps; ++r) {
            const Tensor& x0 = art.expert_test.samples[i].values;
            FourViews v = four_views(x0, art.expert_test.labels[i].id, art.schedule,
                                     art.predictor, base.split(i * 16 + r));
            const double dwn = l2_distance(x0, v.weak_noised);
            const double dwd = l2_distance(x0, v.weak_denoised);
            const double dsn = l2_distance(x0, v.strong_noised);
            const double dsd = l2_distance(x0, v.strong_denoised);
            wn += dwn;
            wd += dwd;
            sn += dsn;
            sd += dsd;
            ++trials;
            if (dsd > dwd) ++sd_above_wd;
        }
    wn /= double(trials);
    wd /= double(trials);
    sn /= double(trials);
    sd /= double(trials);
    require(sn > wn, "strong-noise " + fmt(sn) + " !> weak-noise " + fmt(wn));
    require(wn > wd, "weak: noise " + fmt(wn) + " !> denoise " + fmt(wd));
    require(sn > sd, "strong: noise " + fmt(sn) + " !> denoise " + fmt(sd));
    const double frac = double(sd_above_wd) / double(trials);
    require(frac >= 0.9, "strong-denoise beats weak-denoise in only " + fmt(frac));
    return "means wn " + fmt(wn) + " wd " + fmt(wd) + " sn " + fmt(sn) + " sd " + fmt(sd) +
           "; paired wins " + fmt(frac);
}

std::string c7_view_battery(const StageOneArtifacts& art) {
    const std::size_t nb = std::min<std::size_t>(600, art.rule_norm.size());
    std::vector<int> labels(nb);
    std::vector<Tensor> orig(nb), weak(nb), strong(nb), noise_aug(nb);
    const Rng base(888);
    parallel_for(nb, [&](std::size_t i) {
        labels[i] = art.rule_norm.labels[i].id;
        orig[i] = art.rule_norm.samples[i].values;
        FourViews v = four_views(orig[i], labels[i], art.schedule, art.predictor, base.split(i));
        weak[i] = std::move(v.weak_denoised);
        strong[i] = std::move(v.strong_denoised);
        Rng arng = base.split(0x10000 + i);
        noise_aug[i] =
            classical_augment(AugmentKind::NOISE_INJECTION, art.rule_norm.samples[i], {}, arng)
                .values;
    });
    auto cloud = [&](const std::vector<Tensor>& rows) {
        PointCloud c;
        c.vectors = Tensor({rows.size(), rows[0].size()});
        for (std::size_t i = 0; i < rows.size(); ++i)
            std::copy(rows[i].data.begin(), rows[i].data.end(),
                      c.vectors.data.begin() + long(i * rows[0].size()));
        c.labels = labels;
        return c;
    };
    PointCloud co = cloud(orig), cw = cloud(weak), cs = cloud(strong), cn = cloud(noise_aug);

    const double mi_s = mutual_information(cs), mi_n = mutual_information(cn);
    const double sil_s = silhouette(cs), sil_n = silhouette(cn);
    require(mi_s > mi_n, "strong MI " + fmt(mi_s) + " !> noise-injection MI " + fmt(mi_n));
    require(sil_s > sil_n,
            "strong silhouette " + fmt(sil_s) + " !> noise-injection " + fmt(sil_n));

    auto vo = intra_class_variance(co), vw = intra_class_variance(cw);
    double worst = 0.0;
    for (std::size_t k = 0; k < vo.size(); ++k) {
        if (!vo[k]) continue;
        require(bool(vw[k]), "class " + std::to_string(k + 1) + " missing in weak views");
        const double rel = std::abs(*vw[k] - *vo[k]) / *vo[k];
        worst = std::max(worst, rel);
        require(rel <= 0.10,
                "class " + std::to_string(k + 1) + " weak intra-variance drifts " + fmt(rel));
    }
    return "MI " + fmt(mi_s) + " vs " + fmt(mi_n) + ", silhouette " + fmt(sil_s) + " vs " +
           fmt(sil_n) + "; weak variance drift <= " + fmt(worst);
}

// -- criterion 8: full multi-seed ordering run ---------------------------

std::string c8_ordering(const fs::path& dir, double* elapsed_out) {
    const auto start = std::chrono::steady_clock::now();
    PipelineConfig cfg;  // default regime: 3000 rule / 185 expert, 5 seeds
    Pipeline pipe(cfg, dir.string());
    pipe.run_all();
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    *elapsed_out = secs;

    json table = json::parse(slurp(pipe.report_dir() + "/ablation_table.json"));
    auto acc = [&](const char* mode) {
        return table.at(mode).at("accuracy_mean").get<double>();
    };
    const double dk = acc("dkroot-full"), ex = acc("cnn-exp"), fu = acc("cnn-full"),
                 li = acc("ft-linear");
    require(dk - ex >= 0.01, "dkroot-full " + fmt(dk) + " vs cnn-exp " + fmt(ex));
    require(dk - li >= 0.01, "dkroot-full " + fmt(dk) + " vs ft-linear " + fmt(li));
    require(ex - fu >= 0.01, "cnn-exp " + fmt(ex) + " vs cnn-full " + fmt(fu));

    json prog = json::parse(slurp(pipe.report_dir() + "/progression.json"));
    require(prog.contains("post_pretrain"), "progression report missing");
    auto pv = [&](const char* phase, const char* metric) {
        return prog.at(phase).at(metric).get<double>();
    };
    require(pv("post_finetune", "silhouette") > pv("post_pretrain", "silhouette"),
            "silhouette did not improve: " + fmt(pv("post_pretrain", "silhouette")) + " -> " +
                fmt(pv("post_finetune", "silhouette")));
    require(pv("post_finetune", "calinski_harabasz") > pv("post_pretrain", "calinski_harabasz"),
            "CH did not improve");
    require(pv("post_finetune", "davies_bouldin") < pv("post_pretrain", "davies_bouldin"),
            "DB did not improve");
    require(secs < 45.0 * 60.0, "runtime " + fmt(secs) + " s exceeds 45 min");
    return "means dkroot-full " + fmt(dk) + " > {cnn-exp " + fmt(ex) + ", ft-linear " + fmt(li) +
           "}, cnn-exp > cnn-full " + fmt(fu) + "; progression improved; " + fmt(secs) + " s";
}

// -- criterion 10: CLI determinism ---------------------------------------

std::string c10_determinism(const fs::path& root, double c8_secs, const std::string& cli) {
    // reduced-scale config: determinism does not depend on pool size, and the
    // runtime stays well inside criterion 8's bound
    json cfg = {{"data", {{"scale", 0.1}}},
                {"diffusion", {{"epochs", 8}}},
                {"pretrain", {{"epochs", 1}}},
                {"finetune", {{"epochs", 5}}},
                {"eval", {{"battery_samples", 60}, {"audit_samples", 2}}}};
    const fs::path cfg_path = root / "det-config.json";
    std::ofstream(cfg_path) << cfg.dump(2) << "\n";

    const auto start = std::chrono::steady_clock::now();
    for (const char* run : {"det-a", "det-b"}) {
        const std::string cmd = cli + " -c " + cfg_path.string() + " -o " +
                                (root / run).string() + " run all --seeds 3 > " +
                                (root / run).string() + ".log 2>&1";
        require(std::system(cmd.c_str()) == 0, "CLI run failed: " + cmd);
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    std::size_t compared = 0;
    for (const auto& entry : fs::directory_iterator(root / "det-a" / "report")) {
        if (entry.path().extension() != ".json") continue;
        const std::string name = entry.path().filename().string();
        const fs::path other = root / "det-b" / "report" / name;
        require(fs::exists(other), "second run missing " + name);
        require(slurp(entry.path().string()) == slurp(other.string()), name + " differs");
        ++compared;
    }
    require(compared >= 8, "only " + std::to_string(compared) + " report files compared");
    require(secs < c8_secs || secs < 45.0 * 60.0,
            "runtime " + fmt(secs) + " s exceeds criterion 8's bound");
    return std::to_string(compared) + " metrics JSON files byte-identical across two runs (" +
           fmt(secs) + " s)";
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path root = scratch_root();
    const char* cli_env = std::getenv("DKROOT_CLI");
    std::string cli = cli_env ? cli_env : "./dkroot";
    if (argc > 1) cli = argv[1];

    criterion(1, "diffusion moment law", c1_moment_law);
    criterion(2, "perfect-oracle inversion", c2_oracle_inversion);
    criterion(3, "supcon oracle equivalence", c3_supcon_oracle);
    criterion(4, "gradient suite", c4_gradients);
    criterion(5, "clustering-metric oracles", c5_metric_oracles);
    criterion(9, "rule-engine truth table", c9_truth_table);

    // Stage I artifacts shared by criteria 6 and 7
    StageOneArtifacts art = train_stage_one(root / "stage1");
    criterion(6, "view-distance ordering", [&] { return c6_view_audit(art); });
    criterion(7, "view-battery direction", [&] { return c7_view_battery(art); });

    double c8_secs = 45.0 * 60.0;
    criterion(8, "multi-seed accuracy ordering",
              [&] { return c8_ordering(root / "full", &c8_secs); });
    criterion(10, "CLI determinism", [&] { return c10_determinism(root, c8_secs, cli); });

    if (g_failures) {
        std::printf("%d criterion(s) failed\n", g_failures);
        return 1;
    }
    std::printf("all criteria passed\n");
    return 0;
}
