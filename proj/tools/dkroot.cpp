// Command-line front end: data generation, weak labeling, stage runs and
// report printing over one output root.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "dkroot/pipeline.hpp"
#include "json.hpp"

using namespace dkroot;

namespace {

std::string default_out_root() {
    if (const char* env = std::getenv("DKROOT_OUT")) return env;
    return "out";
}

PipelineConfig resolve_config(const std::string& config_path) {
    if (config_path.empty()) return PipelineConfig{};
    return PipelineConfig::from_json_file(config_path);
}

int print_report(const std::string& out_root) {
    namespace fs = std::filesystem;
    const std::string rd = out_root + "/report";
    if (!fs::exists(rd + "/ablation_table.json"))
        throw DependencyError("no report found in " + rd + "; run `run evaluate` first");
    auto slurp = [](const std::string& path) {
        std::ifstream in(path);
        return nlohmann::json::parse(in);
    };
    std::cout << "== ablation accuracy (mean +- std over seeds) ==\n";
    const auto table = slurp(rd + "/ablation_table.json");
    for (const auto& [name, row] : table.items())
        std::cout << "  " << name << ": " << row.at("accuracy_mean").get<double>() << " +- "
                  << row.at("accuracy_std").get<double>() << "\n";
    if (fs::exists(rd + "/progression.json")) {
        auto prog = slurp(rd + "/progression.json");
        std::cout << "== embedding progression (held-out expert) ==\n";
        for (const char* phase : {"post_pretrain", "post_finetune"})
            if (prog.contains(phase))
            std::cout << "  " << phase << ": silhouette "
                      << prog.at(phase).at("silhouette").get<double>() << ", CH "
                      << prog.at(phase).at("calinski_harabasz").get<double>() << ", DB "
                      << prog.at(phase).at("davies_bouldin").get<double>() << "\n";
    }
    if (fs::exists(rd + "/audit.json")) {
        auto audit = slurp(rd + "/audit.json");
        std::cout << "== L2 view audit ==\n";
        for (const char* cond : {"weak_noise", "weak_denoise", "strong_noise", "strong_denoise"})
            std::cout << "  " << cond << ": " << audit.at(cond).at("mean").get<double>()
                      << " +- " << audit.at(cond).at("std").get<double>() << "\n";
    }
    if (fs::exists(rd + "/metrics_table.csv")) {
        std::cout << "== augmentation metric battery ==\n";
        std::ifstream in(rd + "/metrics_table.csv");
        std::string line;
        while (std::getline(in, line)) std::cout << "  " << line << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DK-Root: diffusion-augmented contrastive root-cause analysis pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_root = default_out_root();
    app.add_option("-c,--config", config_path, "JSON config file (flags override fields)");
    app.add_option("-o,--out", out_root, "output root directory (env DKROOT_OUT)");

    std::optional<double> scale;
    std::optional<std::uint64_t> data_seed;
    auto* gen = app.add_subcommand("gen-data", "generate the synthetic rule/expert pools");
    gen->add_option("--scale", scale, "pool-size multiplier");
    gen->add_option("--seed", data_seed, "generator seed");

    std::string label_samples, label_out, label_schema, label_ruleset;
    auto* lab = app.add_subcommand("label", "weak-label a samples CSV with the ruleset");
    lab->add_option("--samples", label_samples, "samples CSV to label")->required();
    lab->add_option("--labels-out", label_out, "output labels CSV")->required();
    lab->add_option("--schema", label_schema, "schema JSON (default: <out>/data/schema.json)");
    lab->add_option("--ruleset", label_ruleset, "ruleset JSON (default: <out>/data/ruleset.json)");

    std::string stage;
    std::optional<std::size_t> n_seeds;
    std::optional<std::uint64_t> base_seed;
    std::optional<std::uint64_t> only_seed;
    auto* run = app.add_subcommand("run", "run pipeline stages");
    run->add_option("stage", stage, "diffusion|pretrain|finetune|ablation|evaluate|all")
        ->required();
    run->add_option("--seeds", n_seeds, "number of seeds");
    run->add_option("--base-seed", base_seed, "first seed value");
    run->add_option("--seed", only_seed, "run a single specific seed");
    run->add_option("--scale", scale, "pool-size multiplier");

    auto* rep = app.add_subcommand("report", "print the evaluation report");
    (void)rep;

    CLI11_PARSE(app, argc, argv);

    try {
        PipelineConfig cfg = resolve_config(config_path);
        if (scale) cfg.data.scale = *scale;
        if (data_seed) cfg.data.seed = *data_seed;
        if (n_seeds) cfg.n_seeds = *n_seeds;
        if (base_seed) cfg.base_seed = *base_seed;
        if (only_seed) {
            cfg.base_seed = *only_seed;
            cfg.n_seeds = 1;
        }

        if (app.got_subcommand("report")) return print_report(out_root);

        if (app.got_subcommand("label")) {
            if (label_schema.empty()) label_schema = out_root + "/data/schema.json";
            if (label_ruleset.empty()) label_ruleset = out_root + "/data/ruleset.json";
            KpiSchema schema = load_schema(label_schema);
            RuleSet rs = load_ruleset(label_ruleset);
            auto [labeled, unmatched] = label_samples_file(schema, rs, label_samples, label_out);
            std::cout << "labeled " << labeled << " samples, " << unmatched
                      << " matched no rule\n";
            return 0;
        }

        Pipeline pipeline(cfg, out_root);
        if (app.got_subcommand("gen-data")) {
            pipeline.gen_data();
            return 0;
        }

        // run <stage>
        if (stage == "all") {
            pipeline.run_all();
        } else if (stage == "evaluate") {
            pipeline.evaluate();
        } else if (stage == "diffusion" || stage == "pretrain" || stage == "finetune" ||
                   stage == "ablation") {
            for (std::uint64_t seed : cfg.seeds()) {
                if (stage == "diffusion") pipeline.run_diffusion(seed);
                if (stage == "pretrain") pipeline.run_pretrain(seed);
                if (stage == "finetune") pipeline.run_finetune(seed);
                if (stage == "ablation") pipeline.run_ablation(seed);
            }
        } else {
            throw ConfigError("unknown stage: " + stage);
        }
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DependencyError& e) {
        std::cerr << "dependency error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
