// python surface for the dkroot core: data generation, the three training
// stages, the metric battery and the pipeline driver. Tensors cross the
// boundary as numpy arrays (copied; everything here is small).

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dkroot/pipeline.hpp"

namespace py = pybind11;
using namespace dkroot;

namespace {

Tensor tensor_from_array(py::array_t<double, py::array::c_style | py::array::forcecast> arr) {
    std::vector<std::size_t> shape(arr.ndim());
    for (py::ssize_t i = 0; i < arr.ndim(); ++i) shape[i] = std::size_t(arr.shape(i));
    std::vector<double> data(arr.data(), arr.data() + arr.size());
    return Tensor(std::move(shape), std::move(data));
}

py::array tensor_to_array(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
    py::array_t<double> out(shape);
    std::copy(t.data.begin(), t.data.end(), out.mutable_data());
    return out;
}

std::vector<int> dataset_label_ids(const LabeledDataset& ds) {
    std::vector<int> ids;
    ids.reserve(ds.size());
    for (const auto& l : ds.labels) ids.push_back(l.id);
    return ids;
}

}  // namespace

PYBIND11_MODULE(_dkroot, m) {
    m.doc() = "diffusion-augmented contrastive root-cause pipeline (C++ core)";

    py::register_exception<ConfigError>(m, "ConfigError");
    py::register_exception<DependencyError>(m, "DependencyError");
    py::register_exception<NumericError>(m, "NumericError");

    // -- domain types ----------------------------------------------------
    py::class_<KpiSchema>(m, "KpiSchema")
        .def_property_readonly("m", &KpiSchema::m)
        .def("index_of", &KpiSchema::index_of)
        .def("has", &KpiSchema::has)
        .def_property_readonly("names",
                               [](const KpiSchema& s) {
                                   std::vector<std::string> out;
                                   for (const auto& d : s.descriptors) out.push_back(d.name);
                                   return out;
                               })
        .def_static("default", []() { return KpiSchema::default_schema(); });

    py::class_<KpiSample>(m, "KpiSample")
        .def(py::init([](std::string id, py::array_t<double> values) {
                 KpiSample s;
                 s.sample_id = std::move(id);
                 s.values = tensor_from_array(values);
                 if (s.values.shape.size() != 2)
                     throw py::value_error("values must be a [m, l] matrix");
                 return s;
             }),
             py::arg("sample_id"), py::arg("values"))
        .def_readwrite("sample_id", &KpiSample::sample_id)
        .def_property_readonly("values", [](const KpiSample& s) { return tensor_to_array(s.values); })
        .def_property_readonly("m", &KpiSample::m)
        .def_property_readonly("l", &KpiSample::l);

    py::class_<LabeledDataset>(m, "LabeledDataset")
        .def_property_readonly("size", &LabeledDataset::size)
        .def("__len__", &LabeledDataset::size)
        .def_property_readonly("samples", [](const LabeledDataset& d) { return d.samples; })
        .def_property_readonly("labels", &dataset_label_ids)
        .def_property_readonly("sources",
                               [](const LabeledDataset& d) {
                                   std::vector<std::string> out;
                                   for (auto s : d.sources)
                                       out.push_back(s == LabelSource::RULE ? "rule" : "expert");
                                   return out;
                               })
        .def("validate", &LabeledDataset::validate);

    py::class_<RuleSet>(m, "RuleSet")
        .def_static("default", &RuleSet::default_ruleset)
        .def("referenced_kpis", &RuleSet::referenced_kpis);

    m.def("rule_label",
          [](const KpiSample& s, const RuleSet& rs, const KpiSchema& schema) -> py::object {
              auto lbl = rule_label(s, rs, schema);
              if (!lbl) return py::none();
              return py::int_(lbl->id);
          },
          py::arg("sample"), py::arg("ruleset"), py::arg("schema"));

    // -- generation / normalization / splits -----------------------------
    m.def("synth_generate",
          [](int class_id, std::size_t n, std::uint64_t seed, double severity, std::size_t l,
             const KpiSchema& schema) {
              ScenarioConfig cfg{RootCause::from_id(class_id), n, seed, severity, l};
              return synth_generate(cfg, schema);
          },
          py::arg("class_id"), py::arg("n") = 1, py::arg("seed") = 0, py::arg("severity") = 1.0,
          py::arg("l") = 40, py::arg("schema") = KpiSchema::default_schema());

    m.def("generate_rule_pool", &generate_rule_pool, py::arg("n"), py::arg("seed"),
          py::arg("schema"), py::arg("ruleset"), py::arg("l") = 40);
    m.def("generate_expert_pool", &generate_expert_pool, py::arg("n"), py::arg("seed"),
          py::arg("schema"), py::arg("ruleset"), py::arg("l") = 40);

    m.def("zscore_fit_transform", &zscore_fit_transform);
    m.def("split_dataset", [](const LabeledDataset& ds, double tr, double va, double te,
                              std::uint64_t seed) {
        SplitResult r = split_dataset(ds, tr, va, te, seed);
        return py::make_tuple(r.train, r.validation, r.test);
    });
    m.def("save_dataset", &save_dataset);
    m.def("load_dataset", &load_dataset);

    // -- diffusion --------------------------------------------------------
    py::class_<NoiseSchedule>(m, "NoiseSchedule")
        .def_readonly("T", &NoiseSchedule::T)
        .def_readonly("beta", &NoiseSchedule::beta)
        .def_readonly("alpha_bar", &NoiseSchedule::alpha_bar)
        .def("ab", &NoiseSchedule::ab);
    m.def("build_schedule", &build_schedule, py::arg("T"), py::arg("beta_start") = 1e-4,
          py::arg("beta_end") = 0.02);

    py::class_<PredictorConfig>(m, "PredictorConfig")
        .def(py::init<>())
        .def_readwrite("m", &PredictorConfig::m)
        .def_readwrite("l", &PredictorConfig::l)
        .def_readwrite("T", &PredictorConfig::T)
        .def_readwrite("embed_dim", &PredictorConfig::embed_dim)
        .def_readwrite("c1", &PredictorConfig::c1)
        .def_readwrite("c2", &PredictorConfig::c2);

    py::class_<NoisePredictor>(m, "NoisePredictor")
        .def(py::init<const PredictorConfig&, std::uint64_t>(), py::arg("config"),
             py::arg("init_seed"))
        .def("predict",
             [](const NoisePredictor& p, py::array_t<double> x_t, std::size_t t, int y) {
                 return tensor_to_array(p.predict(tensor_from_array(x_t), t, y));
             })
        .def("save", [](const NoisePredictor& p, const std::string& path) {
            nn::save_params(p.params(), path, p.config().fingerprint());
        })
        .def("load", [](NoisePredictor& p, const std::string& path) {
            nn::load_params(p.params(), path, p.config().fingerprint());
        });

    py::class_<DiffusionConfig>(m, "DiffusionConfig")
        .def(py::init<>())
        .def_readwrite("T", &DiffusionConfig::T)
        .def_readwrite("beta_start", &DiffusionConfig::beta_start)
        .def_readwrite("beta_end", &DiffusionConfig::beta_end)
        .def_readwrite("embed_dim", &DiffusionConfig::embed_dim)
        .def_readwrite("epochs", &DiffusionConfig::epochs)
        .def_readwrite("batch_size", &DiffusionConfig::batch_size)
        .def_readwrite("lr", &DiffusionConfig::lr)
        .def_readwrite("seed", &DiffusionConfig::seed);

    m.def("train_diffusion",
          [](const LabeledDataset& expert, const DiffusionConfig& cfg, NoisePredictor& pred) {
              return train_diffusion(expert, cfg, pred).epoch_loss;
          });

    m.def("augment_single_step",
          [](py::array_t<double> x0, std::size_t t, int y, const NoisePredictor& pred,
             const NoiseSchedule& sched, std::uint64_t seed) {
              Rng rng(seed);
              auto fn = [&](const Tensor& xt, std::size_t tt, int yy) {
                  return pred.predict(xt, tt, yy);
              };
              return tensor_to_array(
                  augment_single_step(tensor_from_array(x0), t, y, fn, sched, rng));
          },
          py::arg("x0"), py::arg("t"), py::arg("y"), py::arg("predictor"), py::arg("schedule"),
          py::arg("seed"));

    m.def("augment_pair",
          [](py::array_t<double> x0, int y, const NoisePredictor& pred, const NoiseSchedule& sched,
             std::uint64_t seed) {
              Rng rng(seed);
              auto fn = [&](const Tensor& xt, std::size_t tt, int yy) {
                  return pred.predict(xt, tt, yy);
              };
              ViewPair p = augment_pair(tensor_from_array(x0), y, ViewPolicy{}, fn, sched, rng);
              return py::make_tuple(tensor_to_array(p.weak), tensor_to_array(p.strong),
                                    p.steps.t_weak, p.steps.t_strong);
          },
          py::arg("x0"), py::arg("y"), py::arg("predictor"), py::arg("schedule"), py::arg("seed"));

    // -- contrastive ------------------------------------------------------
    py::class_<EncoderConfig>(m, "EncoderConfig")
        .def(py::init<>())
        .def_readwrite("m", &EncoderConfig::m)
        .def_readwrite("l", &EncoderConfig::l)
        .def_readwrite("c1", &EncoderConfig::c1)
        .def_readwrite("c2", &EncoderConfig::c2)
        .def_readwrite("c3", &EncoderConfig::c3)
        .def_property_readonly("feature_dim", &EncoderConfig::feature_dim);

    py::class_<Encoder>(m, "Encoder")
        .def(py::init<const EncoderConfig&, std::uint64_t>(), py::arg("config"),
             py::arg("init_seed"))
        .def("encode",
             [](const Encoder& e, py::array_t<double> x) {
                 return tensor_to_array(e.encode(tensor_from_array(x)));
             })
        .def("save", [](const Encoder& e, const std::string& path) {
            nn::save_params(e.params(), path, e.config().fingerprint());
        })
        .def("load", [](Encoder& e, const std::string& path) {
            nn::load_params(e.params(), path, e.config().fingerprint());
        });

    m.def("normalize_flatten", [](py::array_t<double> x) {
        return tensor_to_array(normalize_flatten(tensor_from_array(x)));
    });
    m.def("positive_mask",
          [](const std::vector<int>& labels) { return tensor_to_array(positive_mask(labels)); });
    m.def("supcon_loss",
          [](py::array_t<double> features, const std::vector<int>& labels, double tau) {
              ContrastBatch b{tensor_from_array(features), labels};
              return supcon_loss(b, tau);
          },
          py::arg("features"), py::arg("labels"), py::arg("tau") = 0.1);

    py::class_<PretrainConfig>(m, "PretrainConfig")
        .def(py::init<>())
        .def_readwrite("epochs", &PretrainConfig::epochs)
        .def_readwrite("batch_size", &PretrainConfig::batch_size)
        .def_readwrite("tau", &PretrainConfig::tau)
        .def_readwrite("lr", &PretrainConfig::lr)
        .def_readwrite("seed", &PretrainConfig::seed)
        .def_readwrite("encoder", &PretrainConfig::encoder);

    m.def("pretrain",
          [](const LabeledDataset& rule_data, const NoisePredictor& pred,
             const NoiseSchedule& sched, const PretrainConfig& cfg, Encoder& enc) {
              return pretrain(rule_data, pred, sched, cfg, enc).epoch_loss;
          });

    m.def("embed_dataset", [](const LabeledDataset& ds, const Encoder& enc) {
        return tensor_to_array(embed_dataset(ds, enc));
    });

    // -- classifier -------------------------------------------------------
    py::class_<ClassifierHead>(m, "ClassifierHead")
        .def(py::init<std::size_t, std::uint64_t>(), py::arg("in_dim"), py::arg("init_seed"))
        .def("logits", [](const ClassifierHead& h, py::array_t<double> f) {
            return tensor_to_array(h.logits(tensor_from_array(f)));
        });

    m.def("predict_proba", [](py::array_t<double> x, const Encoder& e, const ClassifierHead& h) {
        return predict_proba(tensor_from_array(x), e, h);
    });
    m.def("predict_class", [](py::array_t<double> x, const Encoder& e, const ClassifierHead& h) {
        return predict_class(tensor_from_array(x), e, h);
    });
    m.def("evaluate_accuracy", &evaluate_accuracy);
    m.def("cross_entropy", &cross_entropy);

    py::class_<FinetuneConfig>(m, "FinetuneConfig")
        .def(py::init<>())
        .def_property("mode",
                      [](const FinetuneConfig& c) {
                          return c.mode == FinetuneMode::FULL ? "full" : "linear";
                      },
                      [](FinetuneConfig& c, const std::string& s) {
                          if (s == "full") c.mode = FinetuneMode::FULL;
                          else if (s == "linear") c.mode = FinetuneMode::LINEAR;
                          else throw py::value_error("mode must be 'full' or 'linear'");
                      })
        .def_readwrite("epochs", &FinetuneConfig::epochs)
        .def_readwrite("batch_size", &FinetuneConfig::batch_size)
        .def_readwrite("lr", &FinetuneConfig::lr)
        .def_readwrite("encoder_lr_scale", &FinetuneConfig::encoder_lr_scale)
        .def_readwrite("seed", &FinetuneConfig::seed);

    py::class_<FinetuneResult>(m, "FinetuneResult")
        .def_readonly("train_acc", &FinetuneResult::train_acc)
        .def_readonly("val_acc", &FinetuneResult::val_acc)
        .def_readonly("best_val_acc", &FinetuneResult::best_val_acc)
        .def_readonly("best_epoch", &FinetuneResult::best_epoch);

    m.def("finetune", &finetune, py::arg("train"), py::arg("val"), py::arg("encoder"),
          py::arg("head"), py::arg("config"));

    m.def("train_ablation",
          [](const std::string& mode, const LabeledDataset& train, const LabeledDataset& val,
             const LabeledDataset& test, const FinetuneConfig& cfg, const EncoderConfig& enc_cfg,
             std::uint64_t init_seed, const LabeledDataset* rule_data,
             const Encoder* pretrained) {
              AblationData data;
              data.expert_train = &train;
              data.expert_val = &val;
              data.expert_test = &test;
              data.rule_data = rule_data;
              data.pretrained = pretrained;
              AblationResult r =
                  train_ablation(ablation_from_name(mode), data, cfg, enc_cfg, init_seed);
              py::dict out;
              out["mode"] = mode;
              out["test_accuracy"] = r.test_accuracy;
              out["best_val_acc"] = r.trace.best_val_acc;
              out["best_epoch"] = r.trace.best_epoch;
              return out;
          },
          py::arg("mode"), py::arg("train"), py::arg("val"), py::arg("test"), py::arg("config"),
          py::arg("encoder_config"), py::arg("init_seed"), py::arg("rule_data") = nullptr,
          py::arg("pretrained") = nullptr);

    // -- metrics ----------------------------------------------------------
    auto make_cloud = [](py::array_t<double> vectors, const std::vector<int>& labels) {
        PointCloud c{tensor_from_array(vectors), labels};
        c.validate();
        return c;
    };
    py::class_<PointCloud>(m, "PointCloud")
        .def(py::init(make_cloud), py::arg("vectors"), py::arg("labels"))
        .def_property_readonly("n", &PointCloud::n)
        .def_property_readonly("dim", &PointCloud::dim);

    m.def("avg_interclass_distance", &avg_interclass_distance);
    m.def("silhouette", &silhouette);
    m.def("calinski_harabasz", &calinski_harabasz);
    m.def("davies_bouldin", &davies_bouldin);
    m.def("mutual_information", &mutual_information);
    m.def("intra_class_variance", [](const PointCloud& c) {
        py::dict out;
        auto v = intra_class_variance(c);
        for (int i = 0; i < RootCause::k_num_classes; ++i)
            if (v[i]) out[py::int_(i + 1)] = *v[i];
        return out;
    });
    m.def("metrics_battery",
          [](const PointCloud& c, const std::vector<double>& accs) {
              return metrics_battery(c, accs).to_json();
          },
          py::arg("cloud"), py::arg("seed_accuracies") = std::vector<double>{});
    m.def("cloud_from_dataset", &cloud_from_dataset);

    m.def("classical_augment",
          [](const std::string& kind, const KpiSample& s, double ratio, double sigma,
             std::uint64_t seed) {
              AugmentKind k;
              if (kind == "noise") k = AugmentKind::NOISE_INJECTION;
              else if (kind == "scaling") k = AugmentKind::SCALING;
              else throw py::value_error("kind must be 'noise' or 'scaling'");
              Rng rng(seed);
              return classical_augment(k, s, AugmentParams{ratio, sigma}, rng);
          },
          py::arg("kind"), py::arg("sample"), py::arg("ratio") = 0.1, py::arg("sigma") = 1.1,
          py::arg("seed") = 0);

    m.def("knn_baseline",
          [](const std::string& kind, const LabeledDataset& train, const LabeledDataset& test,
             std::size_t k, std::size_t window) {
              KnnKind kk;
              if (kind == "sliding") kk = KnnKind::SLIDING;
              else if (kind == "stat") kk = KnnKind::STAT;
              else throw py::value_error("kind must be 'sliding' or 'stat'");
              return knn_baseline(kk, train, test, k, window);
          },
          py::arg("kind"), py::arg("train"), py::arg("test"), py::arg("k") = 3,
          py::arg("window") = 20);

    // -- pipeline ---------------------------------------------------------
    py::class_<PipelineConfig>(m, "PipelineConfig")
        .def(py::init<>())
        .def_static("from_json", &PipelineConfig::from_json)
        .def_static("from_json_file", &PipelineConfig::from_json_file)
        .def("to_json", &PipelineConfig::to_json)
        .def("fingerprint", &PipelineConfig::fingerprint)
        .def("validate", &PipelineConfig::validate)
        .def_property("scale", [](const PipelineConfig& c) { return c.data.scale; },
                      [](PipelineConfig& c, double v) { c.data.scale = v; })
        .def_property("n_seeds", [](const PipelineConfig& c) { return c.n_seeds; },
                      [](PipelineConfig& c, std::size_t v) { c.n_seeds = v; })
        .def_property("base_seed", [](const PipelineConfig& c) { return c.base_seed; },
                      [](PipelineConfig& c, std::uint64_t v) { c.base_seed = v; });

    py::class_<Pipeline>(m, "Pipeline")
        .def(py::init<PipelineConfig, std::string>(), py::arg("config"), py::arg("out_root"))
        .def("gen_data", &Pipeline::gen_data)
        .def("run_diffusion", &Pipeline::run_diffusion)
        .def("run_pretrain", &Pipeline::run_pretrain)
        .def("run_finetune", &Pipeline::run_finetune)
        .def("run_ablation", &Pipeline::run_ablation)
        .def("evaluate", &Pipeline::evaluate)
        .def("run_all", &Pipeline::run_all)
        .def("data_dir", &Pipeline::data_dir)
        .def("seed_dir", &Pipeline::seed_dir)
        .def("report_dir", &Pipeline::report_dir);

    m.def("label_samples_file", &label_samples_file);
}
