#include "dkroot/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dkroot/parallel.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dkroot {

// -- config --------------------------------------------------------------

std::size_t DataGenConfig::scaled_rule() const {
    return std::max<std::size_t>(1, std::size_t(double(n_rule) * scale));
}

std::size_t DataGenConfig::scaled_expert() const {
    // never below one sample per class
    return std::max<std::size_t>(RootCause::k_num_classes, std::size_t(double(n_expert) * scale));
}

std::vector<std::uint64_t> PipelineConfig::seeds() const {
    std::vector<std::uint64_t> out;
    for (std::size_t i = 0; i < n_seeds; ++i) out.push_back(base_seed + i);
    return out;
}

void PipelineConfig::validate() const {
    if (data.l < 8 || data.l % 4 != 0)
        throw ConfigError("config: l must be >= 8 and divisible by 4");
    if (data.scale <= 0.0) throw ConfigError("config: scale must be positive");
    const double s = expert_split.train + expert_split.val + expert_split.test;
    if (std::abs(s - 1.0) > 1e-9) throw ConfigError("config: expert split must sum to 1");
    if (expert_split.train <= 0.0 || expert_split.val <= 0.0 || expert_split.test <= 0.0)
        throw ConfigError("config: all expert split fractions must be positive");
    if (diffusion.T < 2) throw ConfigError("config: diffusion T must be >= 2");
    if (!(diffusion.beta_start > 0.0) || diffusion.beta_start > diffusion.beta_end ||
        !(diffusion.beta_end < 1.0))
        throw ConfigError("config: need 0 < beta_start <= beta_end < 1");
    if (diffusion.epochs == 0 || pretrain.epochs == 0 || finetune.epochs == 0)
        throw ConfigError("config: epoch counts must be positive");
    if (pretrain.batch_size < 4 || pretrain.batch_size % 2 != 0)
        throw ConfigError("config: pretrain batch_size must be even and >= 4");
    if (pretrain.tau <= 0.0) throw ConfigError("config: tau must be positive");
    const auto& vp = diffusion.view_policy;
    if (!(vp.alpha_frac > 0.0) || !(vp.beta_low_frac > 0.0) ||
        vp.beta_low_frac > vp.beta_high_frac || vp.beta_high_frac > 1.0)
        throw ConfigError("config: bad view policy fractions");
    if (n_seeds == 0) throw ConfigError("config: need at least one seed");
    if (eval.battery_samples < 12 || eval.audit_samples < 2)
        throw ConfigError("config: eval subset sizes too small");
}

std::string PipelineConfig::to_json() const {
    json j;
    j["data"] = {{"n_rule", data.n_rule},   {"n_expert", data.n_expert}, {"l", data.l},
                 {"scale", data.scale},     {"seed", data.seed}};
    j["expert_split"] = {{"train", expert_split.train},
                         {"val", expert_split.val},
                         {"test", expert_split.test}};
    j["diffusion"] = {{"T", diffusion.T},
                      {"beta_start", diffusion.beta_start},
                      {"beta_end", diffusion.beta_end},
                      {"embed_dim", diffusion.embed_dim},
                      {"epochs", diffusion.epochs},
                      {"batch_size", diffusion.batch_size},
                      {"lr", diffusion.lr}};
    j["views"] = {{"alpha", diffusion.view_policy.alpha_frac},
                  {"beta_low", diffusion.view_policy.beta_low_frac},
                  {"beta_high", diffusion.view_policy.beta_high_frac}};
    j["pretrain"] = {{"epochs", pretrain.epochs},
                     {"batch_size", pretrain.batch_size},
                     {"tau", pretrain.tau},
                     {"lr", pretrain.lr},
                     {"fresh_views_per_epoch", pretrain.fresh_views_per_epoch}};
    j["encoder"] = {{"c1", pretrain.encoder.c1},
                    {"c2", pretrain.encoder.c2},
                    {"c3", pretrain.encoder.c3},
                    {"kernel", pretrain.encoder.kernel}};
    j["finetune"] = {{"epochs", finetune.epochs},
                     {"batch_size", finetune.batch_size},
                     {"lr", finetune.lr},
                     {"encoder_lr_scale", finetune.encoder_lr_scale},
                     {"mode", finetune.mode == FinetuneMode::LINEAR ? "linear" : "full"}};
    j["eval"] = {{"battery_samples", eval.battery_samples},
                 {"audit_samples", eval.audit_samples}};
    j["seeds"] = {{"count", n_seeds}, {"base", base_seed}};
    return j.dump(2);
}

PipelineConfig PipelineConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    PipelineConfig c;
    try {
        if (j.contains("data")) {
            const auto& d = j["data"];
            c.data.n_rule = d.value("n_rule", c.data.n_rule);
            c.data.n_expert = d.value("n_expert", c.data.n_expert);
            c.data.l = d.value("l", c.data.l);
            c.data.scale = d.value("scale", c.data.scale);
            c.data.seed = d.value("seed", c.data.seed);
        }
        if (j.contains("expert_split")) {
            const auto& d = j["expert_split"];
            c.expert_split.train = d.value("train", c.expert_split.train);
            c.expert_split.val = d.value("val", c.expert_split.val);
            c.expert_split.test = d.value("test", c.expert_split.test);
        }
        if (j.contains("diffusion")) {
            const auto& d = j["diffusion"];
            c.diffusion.T = d.value("T", c.diffusion.T);
            c.diffusion.beta_start = d.value("beta_start", c.diffusion.beta_start);
            c.diffusion.beta_end = d.value("beta_end", c.diffusion.beta_end);
            c.diffusion.embed_dim = d.value("embed_dim", c.diffusion.embed_dim);
            c.diffusion.epochs = d.value("epochs", c.diffusion.epochs);
            c.diffusion.batch_size = d.value("batch_size", c.diffusion.batch_size);
            c.diffusion.lr = d.value("lr", c.diffusion.lr);
        }
        if (j.contains("views")) {
            const auto& d = j["views"];
            c.diffusion.view_policy.alpha_frac = d.value("alpha", 0.2);
            c.diffusion.view_policy.beta_low_frac = d.value("beta_low", 0.2);
            c.diffusion.view_policy.beta_high_frac = d.value("beta_high", 0.5);
        }
        if (j.contains("pretrain")) {
            const auto& d = j["pretrain"];
            c.pretrain.epochs = d.value("epochs", c.pretrain.epochs);
            c.pretrain.batch_size = d.value("batch_size", c.pretrain.batch_size);
            c.pretrain.tau = d.value("tau", c.pretrain.tau);
            c.pretrain.lr = d.value("lr", c.pretrain.lr);
            c.pretrain.fresh_views_per_epoch =
                d.value("fresh_views_per_epoch", c.pretrain.fresh_views_per_epoch);
        }
        if (j.contains("encoder")) {
            const auto& d = j["encoder"];
            c.pretrain.encoder.c1 = d.value("c1", c.pretrain.encoder.c1);
            c.pretrain.encoder.c2 = d.value("c2", c.pretrain.encoder.c2);
            c.pretrain.encoder.c3 = d.value("c3", c.pretrain.encoder.c3);
            c.pretrain.encoder.kernel = d.value("kernel", c.pretrain.encoder.kernel);
        }
        if (j.contains("finetune")) {
            const auto& d = j["finetune"];
            c.finetune.epochs = d.value("epochs", c.finetune.epochs);
            c.finetune.batch_size = d.value("batch_size", c.finetune.batch_size);
            c.finetune.lr = d.value("lr", c.finetune.lr);
            c.finetune.encoder_lr_scale = d.value("encoder_lr_scale", c.finetune.encoder_lr_scale);
            const std::string mode = d.value("mode", std::string("full"));
            if (mode == "full")
                c.finetune.mode = FinetuneMode::FULL;
            else if (mode == "linear")
                c.finetune.mode = FinetuneMode::LINEAR;
            else
                throw ConfigError("config: finetune mode must be full or linear");
        }
        if (j.contains("eval")) {
            const auto& d = j["eval"];
            c.eval.battery_samples = d.value("battery_samples", c.eval.battery_samples);
            c.eval.audit_samples = d.value("audit_samples", c.eval.audit_samples);
        }
        if (j.contains("seeds")) {
            const auto& d = j["seeds"];
            c.n_seeds = d.value("count", c.n_seeds);
            c.base_seed = d.value("base", c.base_seed);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return c;
}

PipelineConfig PipelineConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot read " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return from_json(os.str());
}

std::string PipelineConfig::fingerprint() const {
    // FNV-1a over the canonical dump
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char ch : to_json()) {
        h ^= ch;
        h *= 0x100000001B3ULL;
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

// -- manifest ------------------------------------------------------------

void RunManifest::save(const std::string& path) const {
    json j;
    j["run_id"] = run_id;
    j["config_fingerprint"] = config_fingerprint;
    j["seeds"] = seeds;
    auto& st = j["stages"] = json::array();
    for (const auto& r : stages)
        st.push_back({{"stage", r.stage},
                      {"seed", r.seed},
                      {"artifacts", r.artifacts},
                      {"wall_ms", r.wall_ms}});
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    out << j.dump(2) << "\n";
}

RunManifest RunManifest::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read manifest: " + path);
    json j = json::parse(in);
    RunManifest m;
    m.run_id = j.at("run_id").get<std::string>();
    m.config_fingerprint = j.at("config_fingerprint").get<std::string>();
    m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    for (const auto& r : j.at("stages"))
        m.stages.push_back(StageRecord{r.at("stage").get<std::string>(),
                                       r.at("seed").get<std::uint64_t>(),
                                       r.at("artifacts").get<std::vector<std::string>>(),
                                       r.at("wall_ms").get<double>()});
    return m;
}

// -- pipeline ------------------------------------------------------------

namespace {

class StageTimer {
public:
    StageTimer() : start_(std::chrono::steady_clock::now()) {}
    double ms() const {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_)
            .count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

void write_curve_csv(const std::string& path, const std::string& header,
                     const std::vector<std::vector<double>>& columns) {
    std::ostringstream os;
    os.precision(17);
    os << header << "\n";
    const std::size_t n = columns.empty() ? 0 : columns[0].size();
    for (std::size_t i = 0; i < n; ++i) {
        os << i;
        for (const auto& col : columns) os << ',' << col[i];
        os << "\n";
    }
    write_text(path, os.str());
}

void require_finite(const std::vector<double>& values, const std::string& what) {
    for (double v : values)
        if (!std::isfinite(v)) throw NumericError(what + ": non-finite loss");
}

constexpr AblationMode k_modes[] = {AblationMode::CNN_EXP, AblationMode::CNN_FULL,
                                    AblationMode::DKROOT_FULL, AblationMode::FT_LINEAR};

}  // namespace

struct Pipeline::Prepared {
    KpiSchema schema;
    LabeledDataset rule;  // normalized with expert-train stats
    LabeledDataset exp_train, exp_val, exp_test;
    std::vector<ChannelStats> stats;
};

Pipeline::Pipeline(PipelineConfig cfg, std::string out_root)
    : cfg_(std::move(cfg)), out_(std::move(out_root)) {
    cfg_.validate();
    std::error_code ec;
    fs::create_directories(out_, ec);
    if (ec || !fs::is_directory(out_))
        throw ConfigError("config: cannot create output root " + out_);
    const std::string mpath = out_ + "/manifest.json";
    if (fs::exists(mpath)) {
        manifest_ = RunManifest::load(mpath);
        if (manifest_.config_fingerprint != cfg_.fingerprint()) {
            // a different configuration starts a fresh manifest
            manifest_ = RunManifest{};
        }
    }
    if (manifest_.run_id.empty()) {
        manifest_.run_id = "run-" + cfg_.fingerprint();
        manifest_.config_fingerprint = cfg_.fingerprint();
        manifest_.seeds = cfg_.seeds();
    }
    write_text(out_ + "/config.resolved.json", cfg_.to_json() + "\n");
}

std::string Pipeline::data_dir() const { return out_ + "/data"; }
std::string Pipeline::seed_dir(std::uint64_t seed) const {
    return out_ + "/seed" + std::to_string(seed);
}
std::string Pipeline::report_dir() const { return out_ + "/report"; }

void Pipeline::record(StageRecord rec) {
    // one record per (stage, seed); reruns replace
    for (auto& r : manifest_.stages)
        if (r.stage == rec.stage && r.seed == rec.seed) {
            r = std::move(rec);
            manifest_.save(out_ + "/manifest.json");
            return;
        }
    manifest_.stages.push_back(std::move(rec));
    manifest_.save(out_ + "/manifest.json");
}

void Pipeline::gen_data() {
    StageTimer timer;
    fs::create_directories(data_dir());
    const KpiSchema& schema = KpiSchema::default_schema();
    const RuleSet rs = RuleSet::default_ruleset();
    save_schema(schema, data_dir() + "/schema.json");
    save_ruleset(rs, data_dir() + "/ruleset.json");

    LabeledDataset rule = generate_rule_pool(cfg_.data.scaled_rule(), cfg_.data.seed, schema, rs,
                                             cfg_.data.l);
    LabeledDataset expert = generate_expert_pool(cfg_.data.scaled_expert(),
                                                 Rng(cfg_.data.seed).split(0xE).seed(), schema, rs,
                                                 cfg_.data.l);
    save_dataset(rule, schema, data_dir() + "/rule_samples.csv", data_dir() + "/rule_labels.csv");
    save_dataset(expert, schema, data_dir() + "/expert_samples.csv",
                 data_dir() + "/expert_labels.csv");

    auto counts = [](const LabeledDataset& ds) {
        std::array<std::size_t, RootCause::k_num_classes> c{};
        for (const auto& y : ds.labels) ++c[std::size_t(y.id - 1)];
        return c;
    };
    auto print_counts = [&](const char* name, const LabeledDataset& ds) {
        auto c = counts(ds);
        std::cout << name << ": " << ds.size() << " samples (per class:";
        for (std::size_t i = 0; i < c.size(); ++i) std::cout << ' ' << c[i];
        std::cout << ")\n";
    };
    print_counts("rule pool", rule);
    print_counts("expert pool", expert);

    record({"gen-data", 0,
            {data_dir() + "/schema.json", data_dir() + "/ruleset.json",
             data_dir() + "/rule_samples.csv", data_dir() + "/rule_labels.csv",
             data_dir() + "/expert_samples.csv", data_dir() + "/expert_labels.csv"},
            timer.ms()});
}

Pipeline::Prepared Pipeline::prepare(std::uint64_t seed) const {
    if (!fs::exists(data_dir() + "/rule_samples.csv"))
        throw DependencyError("missing dataset files; run `gen-data` first");
    Prepared p;
    p.schema = load_schema(data_dir() + "/schema.json");
    LabeledDataset rule = load_dataset(p.schema, data_dir() + "/rule_samples.csv",
                                       data_dir() + "/rule_labels.csv");
    LabeledDataset expert = load_dataset(p.schema, data_dir() + "/expert_samples.csv",
                                         data_dir() + "/expert_labels.csv");
    SplitResult split = split_dataset(expert, cfg_.expert_split.train, cfg_.expert_split.val,
                                      cfg_.expert_split.test, seed);
    LabeledDataset train_norm = zscore_fit_transform(split.train);
    p.stats = train_norm.normalization_stats;
    p.exp_train = std::move(train_norm);
    p.exp_val = zscore_apply(split.validation, p.stats);
    p.exp_test = zscore_apply(split.test, p.stats);
    p.rule = zscore_apply(rule, p.stats);
    return p;
}

static PredictorConfig predictor_config(const PipelineConfig& cfg, std::size_t m) {
    PredictorConfig pc;
    pc.m = m;
    pc.l = cfg.data.l;
    pc.T = cfg.diffusion.T;
    pc.embed_dim = cfg.diffusion.embed_dim;
    return pc;
}

static EncoderConfig encoder_config(const PipelineConfig& cfg, std::size_t m) {
    EncoderConfig ec = cfg.pretrain.encoder;
    ec.m = m;
    ec.l = cfg.data.l;
    return ec;
}

void Pipeline::run_diffusion(std::uint64_t seed) {
    StageTimer timer;
    Prepared p = prepare(seed);
    fs::create_directories(seed_dir(seed));

    PredictorConfig pc = predictor_config(cfg_, p.schema.m());
    NoisePredictor predictor(pc, Rng(seed).split(0xA1).seed());
    DiffusionConfig dc = cfg_.diffusion;
    dc.seed = seed;
    DiffusionTrainResult res = train_diffusion(p.exp_train, dc, predictor);
    require_finite(res.epoch_loss, "diffusion");
    if (!res.loss_decreased)
        std::cout << "warning: diffusion loss did not decrease (seed " << seed << ")\n";

    const std::string ckpt = seed_dir(seed) + "/diffusion.ckpt.json";
    save_params(predictor.params(), ckpt, pc.fingerprint());
    write_curve_csv(seed_dir(seed) + "/diffusion_loss.csv", "epoch,loss", {res.epoch_loss});
    std::cout << "diffusion seed " << seed << ": loss " << res.epoch_loss.front() << " -> "
              << res.epoch_loss.back() << "\n";
    record({"diffusion", seed, {ckpt, seed_dir(seed) + "/diffusion_loss.csv"}, timer.ms()});
}

NoisePredictor Pipeline::load_predictor(std::uint64_t seed) const {
    const std::string ckpt = seed_dir(seed) + "/diffusion.ckpt.json";
    if (!fs::exists(ckpt))
        throw DependencyError("missing " + ckpt + "; run `run diffusion` first");
    KpiSchema schema = load_schema(data_dir() + "/schema.json");
    PredictorConfig pc = predictor_config(cfg_, schema.m());
    NoisePredictor predictor(pc, 0);
    load_params(predictor.params(), ckpt, pc.fingerprint());
    return predictor;
}

Encoder Pipeline::load_encoder(std::uint64_t seed) const {
    const std::string ckpt = seed_dir(seed) + "/encoder.ckpt.json";
    if (!fs::exists(ckpt))
        throw DependencyError("missing " + ckpt + "; run `run pretrain` first");
    KpiSchema schema = load_schema(data_dir() + "/schema.json");
    EncoderConfig ec = encoder_config(cfg_, schema.m());
    Encoder encoder(ec, 0);
    load_params(encoder.params(), ckpt, ec.fingerprint());
    return encoder;
}

void Pipeline::run_pretrain(std::uint64_t seed) {
    StageTimer timer;
    Prepared p = prepare(seed);
    NoisePredictor predictor = load_predictor(seed);
    NoiseSchedule schedule =
        build_schedule(cfg_.diffusion.T, cfg_.diffusion.beta_start, cfg_.diffusion.beta_end);

    EncoderConfig ec = encoder_config(cfg_, p.schema.m());
    Encoder encoder(ec, Rng(seed).split(0xA2).seed());
    PretrainConfig pcfg = cfg_.pretrain;
    pcfg.seed = seed;
    pcfg.view_policy = cfg_.diffusion.view_policy;
    pcfg.encoder = ec;
    PretrainResult res = pretrain(p.rule, predictor, schedule, pcfg, encoder);
    require_finite(res.epoch_loss, "pretrain");

    const std::string ckpt = seed_dir(seed) + "/encoder.ckpt.json";
    save_params(encoder.params(), ckpt, ec.fingerprint());
    write_curve_csv(seed_dir(seed) + "/pretrain_loss.csv", "epoch,loss", {res.epoch_loss});
    {
        std::ostringstream os;
        os.precision(17);
        os << "epoch,step,loss\n";
        std::size_t step = 0, cur_epoch = 0;
        for (std::size_t i = 0; i < res.step_loss.size(); ++i) {
            if (res.step_epoch[i] != cur_epoch) {
                cur_epoch = res.step_epoch[i];
                step = 0;
            }
            os << res.step_epoch[i] << ',' << step++ << ',' << res.step_loss[i] << "\n";
        }
        write_text(seed_dir(seed) + "/pretrain_steps.csv", os.str());
    }
    std::cout << "pretrain seed " << seed << ": loss " << res.epoch_loss.front() << " -> "
              << res.epoch_loss.back() << "\n";
    record({"pretrain", seed,
            {ckpt, seed_dir(seed) + "/pretrain_loss.csv", seed_dir(seed) + "/pretrain_steps.csv"},
            timer.ms()});
}

void Pipeline::run_finetune(std::uint64_t seed) {
    StageTimer timer;
    Prepared p = prepare(seed);
    Encoder encoder = load_encoder(seed);
    ClassifierHead head(encoder.config().feature_dim(), Rng(seed).split(0xA3).seed());
    FinetuneConfig fc = cfg_.finetune;
    fc.seed = seed;
    FinetuneResult trace = finetune(p.exp_train, p.exp_val, encoder, head, fc);
    require_finite(trace.val_acc, "finetune");
    const double test_acc = evaluate_accuracy(p.exp_test, encoder, head);

    const std::string enc_ckpt = seed_dir(seed) + "/finetune.encoder.ckpt.json";
    const std::string head_ckpt = seed_dir(seed) + "/finetune.head.ckpt.json";
    save_params(encoder.params(), enc_ckpt, encoder.config().fingerprint());
    save_params(head.params(), head_ckpt, "head:" + std::to_string(head.in_dim()));
    write_curve_csv(seed_dir(seed) + "/finetune_curve.csv", "epoch,train_acc,val_acc",
                    {trace.train_acc, trace.val_acc});
    json j = {{"mode", fc.mode == FinetuneMode::LINEAR ? "linear" : "full"},
              {"best_val_acc", trace.best_val_acc},
              {"best_epoch", trace.best_epoch},
              {"test_accuracy", test_acc}};
    write_text(seed_dir(seed) + "/finetune.json", j.dump(2) + "\n");
    {
        std::ostringstream os;
        os.precision(17);
        os << "sample_id,predicted_class";
        for (int c = 1; c <= RootCause::k_num_classes; ++c) os << ",p" << c;
        os << "\n";
        for (const auto& s : p.exp_test.samples) {
            auto probs = predict_proba(s.values, encoder, head);
            os << s.sample_id << ',' << predict_class(s.values, encoder, head);
            for (double pr : probs) os << ',' << pr;
            os << "\n";
        }
        write_text(seed_dir(seed) + "/predictions.csv", os.str());
    }
    std::cout << "finetune seed " << seed << ": val " << trace.best_val_acc << ", test "
              << test_acc << "\n";
    record({"finetune", seed,
            {enc_ckpt, head_ckpt, seed_dir(seed) + "/finetune_curve.csv",
             seed_dir(seed) + "/finetune.json"},
            timer.ms()});
}

static json progression_entry(const PointCloud& cloud) {
    return {{"silhouette", silhouette(cloud)},
            {"calinski_harabasz", calinski_harabasz(cloud)},
            {"davies_bouldin", davies_bouldin(cloud)}};
}

void Pipeline::run_ablation(std::uint64_t seed) {
    StageTimer timer;
    Prepared p = prepare(seed);
    Encoder pretrained = load_encoder(seed);
    const EncoderConfig ec = encoder_config(cfg_, p.schema.m());

    AblationData data;
    data.expert_train = &p.exp_train;
    data.expert_val = &p.exp_val;
    data.expert_test = &p.exp_test;
    data.rule_data = &p.rule;
    data.pretrained = &pretrained;

    json out;
    std::vector<std::string> artifacts;
    const Encoder* dkroot_encoder = nullptr;
    std::vector<AblationResult> results;
    results.reserve(4);
    for (std::size_t i = 0; i < 4; ++i) {
        const AblationMode mode = k_modes[i];
        FinetuneConfig fc = cfg_.finetune;
        fc.seed = Rng(seed).split(0xB0 + i).seed();
        // fresh-encoder baselines need the full step size; the backbone
        // protection only applies when starting from the Stage II checkpoint
        if (mode == AblationMode::CNN_EXP || mode == AblationMode::CNN_FULL)
            fc.encoder_lr_scale = 1.0;
        // per-arm epoch budgets, tuned to each arm's validation plateau: the
        // fresh net on the small expert pool converges slowly, the mixed-pool
        // baseline plateaus within a few passes over its 20x larger pool
        if (mode == AblationMode::CNN_EXP) fc.epochs = 40;
        if (mode == AblationMode::CNN_FULL) fc.epochs = 8;
        AblationResult r =
            train_ablation(mode, data, fc, ec, Rng(seed).split(0xC0 + i).seed());
        require_finite(r.trace.val_acc, "ablation " + ablation_name(mode));
        const std::string name = ablation_name(mode);
        out[name] = {{"test_accuracy", r.test_accuracy},
                     {"best_val_acc", r.trace.best_val_acc},
                     {"best_epoch", r.trace.best_epoch},
                     {"train_acc", r.trace.train_acc},
                     {"val_acc", r.trace.val_acc}};
        const std::string curve = seed_dir(seed) + "/ablation_" + name + "_curve.csv";
        write_curve_csv(curve, "epoch,train_acc,val_acc", {r.trace.train_acc, r.trace.val_acc});
        artifacts.push_back(curve);
        std::cout << "ablation seed " << seed << " " << name << ": test " << r.test_accuracy
                  << "\n";
        results.push_back(std::move(r));
        if (mode == AblationMode::DKROOT_FULL) dkroot_encoder = &results.back().encoder;
    }
    const std::string apath = seed_dir(seed) + "/ablation.json";
    write_text(apath, out.dump(2) + "\n");
    artifacts.push_back(apath);

    // Stage II vs Stage III representation progression on held-out expert
    // data (val + test; neither is trained on).
    LabeledDataset held = p.exp_val;
    held.samples.insert(held.samples.end(), p.exp_test.samples.begin(), p.exp_test.samples.end());
    held.labels.insert(held.labels.end(), p.exp_test.labels.begin(), p.exp_test.labels.end());
    held.sources.insert(held.sources.end(), p.exp_test.sources.begin(), p.exp_test.sources.end());
    json prog;
    if (held.size() > RootCause::k_num_classes + 1) {
        PointCloud pre = cloud_from_embeddings(embed_dataset(held, pretrained), held.labels);
        PointCloud post = cloud_from_embeddings(embed_dataset(held, *dkroot_encoder), held.labels);
        prog = {{"post_pretrain", progression_entry(pre)},
                {"post_finetune", progression_entry(post)}};
    } else {
        prog = {{"skipped", "held-out expert set too small for cluster metrics"}};
    }
    const std::string ppath = seed_dir(seed) + "/progression.json";
    write_text(ppath, prog.dump(2) + "\n");
    artifacts.push_back(ppath);

    record({"ablation", seed, std::move(artifacts), timer.ms()});
}

namespace {

struct FourViews {
    Tensor weak_noised, weak_denoised, strong_noised, strong_denoised;
};

Tensor reverse_step(const Tensor& x_t, const Tensor& eps_hat, double ab) {
    Tensor out = x_t;
    const double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data[i] = (x_t.data[i] - sb * eps_hat.data[i]) / sa;
    return out;
}

FourViews make_four_views(const Tensor& x0, int y, const ViewPolicy& policy,
                          const NoiseSchedule& sched, const PredictFn& predict, Rng rng) {
    ViewTimesteps ts = sample_view_timesteps(policy, sched.T, rng);
    FourViews v;
    auto one = [&](std::size_t t, Tensor& noised, Tensor& denoised) {
        Tensor eps = x0;
        for (double& e : eps.data) e = rng.normal();
        noised = forward_noise(x0, t, eps, sched);
        denoised = reverse_step(noised, predict(noised, t, y), sched.ab(t));
    };
    one(ts.t_weak, v.weak_noised, v.weak_denoised);
    one(ts.t_strong, v.strong_noised, v.strong_denoised);
    return v;
}

PointCloud cloud_from_tensors(const std::vector<Tensor>& rows, const std::vector<int>& labels) {
    PointCloud c;
    c.vectors = Tensor({rows.size(), rows[0].size()});
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(rows[i].data.begin(), rows[i].data.end(),
                  c.vectors.data.begin() + long(i * rows[0].size()));
    c.labels = labels;
    return c;
}

}  // namespace

void Pipeline::evaluate() {
    StageTimer timer;
    const auto seeds = cfg_.seeds();
    fs::create_directories(report_dir());
    std::vector<std::string> artifacts;

    // -- ablation accuracy table over seeds ------------------------------
    std::map<std::string, std::vector<double>> acc;
    std::map<std::string, json> curves;
    std::vector<json> progressions;
    for (std::uint64_t seed : seeds) {
        const std::string apath = seed_dir(seed) + "/ablation.json";
        if (!fs::exists(apath))
            throw DependencyError("missing " + apath + "; run `run ablation` first");
        std::ifstream in(apath);
        json j = json::parse(in);
        for (const auto mode : k_modes) {
            const std::string name = ablation_name(mode);
            acc[name].push_back(j.at(name).at("test_accuracy").get<double>());
            curves[name].push_back(j.at(name).at("val_acc"));
        }
        std::ifstream pin(seed_dir(seed) + "/progression.json");
        if (!pin)
            throw DependencyError("missing progression.json for seed " + std::to_string(seed));
        progressions.push_back(json::parse(pin));
    }
    json table;
    std::ostringstream tcsv;
    tcsv.precision(17);
    tcsv << "mode,accuracy_mean,accuracy_std\n";
    for (const auto& [name, values] : acc) {
        MeanStd ms = mean_std(values);
        table[name] = {{"accuracy_mean", ms.mean}, {"accuracy_std", ms.std}, {"per_seed", values}};
        tcsv << name << ',' << ms.mean << ',' << ms.std << "\n";
    }
    write_text(report_dir() + "/ablation_table.json", table.dump(2) + "\n");
    write_text(report_dir() + "/ablation_table.csv", tcsv.str());
    artifacts.push_back(report_dir() + "/ablation_table.json");
    artifacts.push_back(report_dir() + "/ablation_table.csv");

    // accuracy-vs-epoch curves (per seed and mode)
    {
        std::ostringstream os;
        os.precision(17);
        os << "seed,mode,epoch,val_acc\n";
        for (std::size_t si = 0; si < seeds.size(); ++si)
            for (const auto mode : k_modes) {
                const std::string name = ablation_name(mode);
                const auto& c = curves[name][si];
                for (std::size_t e = 0; e < c.size(); ++e)
                    os << seeds[si] << ',' << name << ',' << e << ',' << c[e].get<double>()
                       << "\n";
            }
        write_text(report_dir() + "/accuracy_curves.csv", os.str());
        artifacts.push_back(report_dir() + "/accuracy_curves.csv");
    }

    // -- representation progression mean over seeds ----------------------
    {
        std::vector<json> usable;
        for (const auto& p : progressions)
            if (p.contains("post_pretrain")) usable.push_back(p);
        json prog;
        if (usable.empty()) {
            prog = {{"skipped", "held-out expert set too small for cluster metrics"}};
        } else {
            auto avg = [&](const char* phase, const char* metric) {
                double s = 0.0;
                for (const auto& p : usable) s += p.at(phase).at(metric).get<double>();
                return s / double(usable.size());
            };
            for (const char* phase : {"post_pretrain", "post_finetune"})
                prog[phase] = {{"silhouette", avg(phase, "silhouette")},
                               {"calinski_harabasz", avg(phase, "calinski_harabasz")},
                               {"davies_bouldin", avg(phase, "davies_bouldin")}};
        }
        write_text(report_dir() + "/progression.json", prog.dump(2) + "\n");
        artifacts.push_back(report_dir() + "/progression.json");
    }

    // -- augmentation battery and L2 audit (first seed's Stage I model) ---
    Prepared p = prepare(seeds.front());
    NoisePredictor predictor = load_predictor(seeds.front());
    NoiseSchedule schedule =
        build_schedule(cfg_.diffusion.T, cfg_.diffusion.beta_start, cfg_.diffusion.beta_end);
    PredictFn predict = [&](const Tensor& x_t, std::size_t t, int y) {
        return predictor.predict(x_t, t, y);
    };

    const std::size_t nb = std::min<std::size_t>(cfg_.eval.battery_samples, p.rule.size());
    std::vector<int> labels(nb);
    std::vector<Tensor> orig(nb), weak(nb), strong(nb), noise_aug(nb), scale_aug(nb);
    const Rng base = Rng(cfg_.base_seed).split(0xEA);
    parallel_for(nb, [&](std::size_t i) {
        labels[i] = p.rule.labels[i].id;
        orig[i] = p.rule.samples[i].values;
        FourViews v = make_four_views(orig[i], labels[i], cfg_.diffusion.view_policy, schedule,
                                      predict, base.split(i));
        weak[i] = std::move(v.weak_denoised);
        strong[i] = std::move(v.strong_denoised);
        KpiSample s = p.rule.samples[i];
        Rng arng = base.split(0x10000 + i);
        noise_aug[i] = classical_augment(AugmentKind::NOISE_INJECTION, s, {}, arng).values;
        scale_aug[i] = classical_augment(AugmentKind::SCALING, s, {}, arng).values;
    });

    std::ostringstream bcsv;
    bcsv << "variant," << MetricsReport::csv_header() << "\n";
    auto battery = [&](const char* name, const std::vector<Tensor>& rows) {
        MetricsReport r = metrics_battery(cloud_from_tensors(rows, labels), {});
        write_text(report_dir() + "/metrics_" + name + ".json", r.to_json() + "\n");
        artifacts.push_back(report_dir() + "/metrics_" + std::string(name) + ".json");
        bcsv << name << ',' << r.to_csv_row() << "\n";
        return r;
    };
    battery("original", orig);
    battery("weak", weak);
    battery("strong", strong);
    battery("noise_injection", noise_aug);
    battery("scaling", scale_aug);
    write_text(report_dir() + "/metrics_table.csv", bcsv.str());
    artifacts.push_back(report_dir() + "/metrics_table.csv");

    // L2 audit on the expert test subset
    {
        const std::size_t na = std::min<std::size_t>(cfg_.eval.audit_samples, p.exp_test.size());
        std::vector<KpiSample> originals(na), wn(na), wd(na), sn(na), sd(na);
        const Rng arng = Rng(cfg_.base_seed).split(0xAD);
        parallel_for(na, [&](std::size_t i) {
            const KpiSample& s = p.exp_test.samples[i];
            originals[i] = s;
            FourViews v = make_four_views(s.values, p.exp_test.labels[i].id,
                                          cfg_.diffusion.view_policy, schedule, predict,
                                          arng.split(i));
            wn[i] = {s.sample_id, std::move(v.weak_noised)};
            wd[i] = {s.sample_id, std::move(v.weak_denoised)};
            sn[i] = {s.sample_id, std::move(v.strong_noised)};
            sd[i] = {s.sample_id, std::move(v.strong_denoised)};
        });
        ViewAuditSummary audit = l2_view_audit(originals, wn, wd, sn, sd);
        json ja = {{"weak_noise", {{"mean", audit.weak_noise.mean}, {"std", audit.weak_noise.std}}},
                   {"weak_denoise",
                    {{"mean", audit.weak_denoise.mean}, {"std", audit.weak_denoise.std}}},
                   {"strong_noise",
                    {{"mean", audit.strong_noise.mean}, {"std", audit.strong_noise.std}}},
                   {"strong_denoise",
                    {{"mean", audit.strong_denoise.mean}, {"std", audit.strong_denoise.std}}}};
        write_text(report_dir() + "/audit.json", ja.dump(2) + "\n");
        std::ostringstream acsv;
        acsv.precision(17);
        acsv << "condition,mean,std\n";
        for (const auto& [name, c] :
             {std::pair<const char*, ViewAuditCondition>{"weak_noise", audit.weak_noise},
              {"weak_denoise", audit.weak_denoise},
              {"strong_noise", audit.strong_noise},
              {"strong_denoise", audit.strong_denoise}})
            acsv << name << ',' << c.mean << ',' << c.std << "\n";
        write_text(report_dir() + "/audit.csv", acsv.str());
        artifacts.push_back(report_dir() + "/audit.json");
        artifacts.push_back(report_dir() + "/audit.csv");

        // denoised-view export with role-suffixed ids
        LabeledDataset views_ds;
        for (std::size_t i = 0; i < na; ++i) {
            views_ds.samples.push_back({originals[i].sample_id + ":weak", wd[i].values});
            views_ds.samples.push_back({originals[i].sample_id + ":strong", sd[i].values});
            for (int r = 0; r < 2; ++r) {
                views_ds.labels.push_back(p.exp_test.labels[i]);
                views_ds.sources.push_back(LabelSource::EXPERT);
            }
        }
        save_dataset(views_ds, p.schema, report_dir() + "/views_samples.csv",
                     report_dir() + "/views_labels.csv");
        artifacts.push_back(report_dir() + "/views_samples.csv");
        artifacts.push_back(report_dir() + "/views_labels.csv");
    }

    std::cout << "evaluate: report written to " << report_dir() << "\n";
    record({"evaluate", 0, std::move(artifacts), timer.ms()});
}

void Pipeline::run_all() {
    gen_data();
    for (std::uint64_t seed : cfg_.seeds()) {
        run_diffusion(seed);
        run_pretrain(seed);
        run_finetune(seed);
        run_ablation(seed);
    }
    evaluate();
}

std::pair<std::size_t, std::size_t> label_samples_file(const KpiSchema& schema, const RuleSet& rs,
                                                       const std::string& samples_path,
                                                       const std::string& labels_out) {
    std::vector<KpiSample> samples = load_samples_csv(schema, samples_path);
    std::ostringstream os;
    os << "sample_id,class_id,source\n";
    std::size_t labeled = 0, unmatched = 0;
    for (const auto& s : samples) {
        auto y = rule_label(s, rs, schema);
        if (y) {
            os << s.sample_id << ',' << y->id << ",rule\n";
            ++labeled;
        } else {
            ++unmatched;
        }
    }
    write_text(labels_out, os.str());
    return {labeled, unmatched};
}

}  // namespace dkroot
