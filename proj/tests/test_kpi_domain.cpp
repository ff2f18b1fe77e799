#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "dkroot/kpi.hpp"

using namespace dkroot;

namespace {

// zero sample over the default schema; set channels via set(name, t, v)
struct SampleBuilder {
    const KpiSchema& schema = KpiSchema::default_schema();
    KpiSample s;

    explicit SampleBuilder(std::size_t l = 8) {
        s.sample_id = "tb";
        s.values = Tensor({schema.m(), l});
    }
    SampleBuilder& set(const std::string& kpi, std::size_t t, double v) {
        s.values.at(schema.index_of(kpi), t) = v;
        return *this;
    }
    std::optional<RootCause> label() const {
        return rule_label(s, RuleSet::default_ruleset(), schema);
    }
};

// all class-2 conditions satisfied via the UL branches
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

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("schema basics") {
    const KpiSchema& schema = KpiSchema::default_schema();
    CHECK(schema.m() >= 20);
    CHECK(schema.has("PDCP_UL_LATENCY"));
    CHECK(schema.has("UL_DMRS_RSRP_MIN"));
    CHECK_FALSE(schema.has("NOT_A_KPI"));
    CHECK_THROWS(schema.index_of("NOT_A_KPI"));

    // names unique
    std::set<std::string> names;
    for (const auto& d : schema.descriptors) names.insert(d.name);
    CHECK(names.size() == schema.m());

    // every KPI the default ruleset references exists
    for (const auto& name : RuleSet::default_ruleset().referenced_kpis())
        CHECK(schema.has(name));

    // round trip
    const std::string p = tmp_path("dkroot_schema_test.json");
    save_schema(schema, p);
    KpiSchema loaded = load_schema(p);
    REQUIRE(loaded.m() == schema.m());
    for (std::size_t i = 0; i < schema.m(); ++i) {
        CHECK(loaded.descriptors[i].name == schema.descriptors[i].name);
        CHECK(loaded.descriptors[i].layer == schema.descriptors[i].layer);
    }
    std::filesystem::remove(p);

    CHECK(layer_from_name(layer_name(Layer::PDCP)) == Layer::PDCP);
    CHECK_THROWS(layer_from_name("bogus"));
    CHECK_THROWS(RootCause::from_id(0));
    CHECK_THROWS(RootCause::from_id(7));
    CHECK(RootCause::from_id(2).name() == "Uplink Weak Coverage");
}

// 12-case truth table for the five-condition class-2 rule
TEST_CASE("rule truth table") {
    // 1: reference pass through the UL branches
    CHECK(class2_base().label().value().id == 2);

    // 2: all zeros -> no rule fires
    CHECK_FALSE(SampleBuilder().label().has_value());

    // 3: RSRP swap (-120 / -125): condition (5) fails on both branches
    {
        auto b = class2_base();
        b.set("UL_DMRS_RSRP_MIN", 5, 0).set("UL_DMRS_RSRP_MIN", 5, 0);
        b.s.values.at(b.schema.index_of("UL_DMRS_RSRP_MIN"), 5) = -120;
        b.set("UL_SRS_RSRP", 5, -125);
        CHECK_FALSE(b.label().has_value());
    }

    // 4: condition (1) satisfied via the DL latency branch instead
    {
        auto b = class2_base();
        b.s.values.at(b.schema.index_of("PDCP_UL_LATENCY"), 3) = 0;
        b.set("PDCP_DL_LATENCY", 0, 220);
        CHECK(b.label().value().id == 2);
    }

    // 5: condition (1) fails at 199 on both branches
    {
        auto b = class2_base();
        b.s.values.at(b.schema.index_of("PDCP_UL_LATENCY"), 3) = 199;
        CHECK_FALSE(b.label().has_value());
    }

    // 6: condition (2) fails (RLC latencies below 200)
    {
        auto b = class2_base();
        b.s.values.at(b.schema.index_of("RLC_UL_LATENCY"), 2) = 150;
        CHECK_FALSE(b.label().has_value());
    }

    // 7: condition (3) ratio 0.05 <= 0.1 fails
    {
        auto b = class2_base();
        b.s.values.at(b.schema.index_of("UL_RLC_RETX_SDU"), 4) = 0.05;
        CHECK_FALSE(b.label().has_value());
    }

    // 8: condition (3) with zero denominator: ratio = 2e-6 / (0 + 1e-5) = 0.2 > 0.1
    {
        auto b = class2_base();
        b.s.values.at(b.schema.index_of("UL_RLC_SDU"), 4) = 0;
        b.s.values.at(b.schema.index_of("UL_RLC_RETX_SDU"), 4) = 2e-6;
        CHECK(b.label().value().id == 2);
    }

    // 9: condition (3) with zero denominator, ratio 5e-7/1e-5 = 0.05 fails
    {
        auto b = class2_base();
        b.s.values.at(b.schema.index_of("UL_RLC_SDU"), 4) = 0;
        b.s.values.at(b.schema.index_of("UL_RLC_RETX_SDU"), 4) = 5e-7;
        CHECK_FALSE(b.label().has_value());
    }

    // 10: condition (4) fails with every branch just below threshold
    {
        auto b = class2_base();
        b.s.values.at(b.schema.index_of("UL_RBLER"), 1) = 0.099;
        CHECK_FALSE(b.label().has_value());
    }

    // 11: condition (4) via the UL_DTX_Ratio branch at the exact GE boundary 0.2
    {
        auto b = class2_base();
        b.s.values.at(b.schema.index_of("UL_RBLER"), 1) = 0;
        b.set("UL_DTX_Ratio", 6, 0.2);
        CHECK(b.label().value().id == 2);
    }

    // 12: condition (5) via UL_SRS_RSRP at the exact LE boundary -130; and the
    // GE boundary of condition (1) at exactly 200
    {
        auto b = class2_base();
        b.s.values.at(b.schema.index_of("PDCP_UL_LATENCY"), 3) = 200;
        b.s.values.at(b.schema.index_of("UL_DMRS_RSRP_MIN"), 5) = 0;
        b.set("UL_SRS_RSRP", 0, -130);
        CHECK(b.label().value().id == 2);
    }
}

TEST_CASE("rule evaluation is pure and reductions apply over the window") {
    auto b = class2_base();
    auto first = b.label();
    auto second = b.label();
    REQUIRE(first.has_value());
    REQUIRE(second.has_value());
    CHECK(first->id == second->id);

    // MIN reduction: a single high-RSRP timestep must not mask the low one
    auto c = class2_base();
    c.set("UL_DMRS_RSRP_MIN", 0, 50);
    CHECK(c.label().value().id == 2);
}

TEST_CASE("generator determinism and contract checks") {
    const KpiSchema& schema = KpiSchema::default_schema();
    ScenarioConfig cfg{RootCause::from_id(2), 1, 7, 1.0, 40};
    auto a = synth_generate(cfg, schema);
    auto b = synth_generate(cfg, schema);
    REQUIRE(a.size() == 1);
    CHECK(a[0].values.data == b[0].values.data);

    // spec example: class 2, severity 1.0 plants the class-2 signature
    std::size_t pdcp = schema.index_of("PDCP_UL_LATENCY");
    std::size_t rsrp = schema.index_of("UL_DMRS_RSRP_MIN");
    double pdcp_max = -1e300, rsrp_min = 1e300;
    for (std::size_t t = 0; t < 40; ++t) {
        pdcp_max = std::max(pdcp_max, a[0].values.at(pdcp, t));
        rsrp_min = std::min(rsrp_min, a[0].values.at(rsrp, t));
    }
    CHECK(pdcp_max >= 200.0);
    CHECK(rsrp_min <= -125.0);
    CHECK(rule_label(a[0], RuleSet::default_ruleset(), schema).value().id == 2);

    ScenarioConfig bad = cfg;
    bad.n_samples = 0;
    CHECK_THROWS(synth_generate(bad, schema));
}

TEST_CASE("generator-rule consistency across classes and severities") {
    const KpiSchema& schema = KpiSchema::default_schema();
    RuleSet rs = RuleSet::default_ruleset();
    for (int cls = 1; cls <= 6; ++cls) {
        ScenarioConfig cfg{RootCause::from_id(cls), 10, std::uint64_t(40 + cls), 1.0, 40};
        auto samples = synth_generate(cfg, schema);
        for (const auto& s : samples) {
            auto lbl = rule_label(s, rs, schema);
            REQUIRE(lbl.has_value());
            CHECK(lbl->id == cls);
        }

        // at severity 0.5 the rule may miss, but should still fire >= 60%
        ScenarioConfig half = cfg;
        half.severity = 0.5;
        half.n_samples = 30;
        std::size_t hit = 0;
        for (const auto& s : synth_generate(half, schema)) {
            auto lbl = rule_label(s, rs, schema);
            if (lbl && lbl->id == cls) ++hit;
        }
        CHECK(double(hit) / 30.0 >= 0.6);
    }
}

TEST_CASE("pool generation: sources and labels") {
    const KpiSchema& schema = KpiSchema::default_schema();
    RuleSet rs = RuleSet::default_ruleset();
    LabeledDataset rule = generate_rule_pool(60, 5, schema, rs, 16);
    CHECK(rule.size() == 60);
    rule.validate();
    for (std::size_t i = 0; i < rule.size(); ++i) {
        CHECK(rule.sources[i] == LabelSource::RULE);
        // rule labels come from the labeler itself, so they must agree with it
        CHECK(rule_label(rule.samples[i], rs, schema).value().id == rule.labels[i].id);
    }

    LabeledDataset expert = generate_expert_pool(24, 5, schema, RuleSet::default_ruleset(), 16);
    CHECK(expert.size() == 24);
    expert.validate();
    std::set<int> classes;
    for (std::size_t i = 0; i < expert.size(); ++i) {
        CHECK(expert.sources[i] == LabelSource::EXPERT);
        classes.insert(expert.labels[i].id);
    }
    CHECK(classes.size() == 6);  // expert pool covers all classes
}

TEST_CASE("zscore fixtures") {
    const KpiSchema& schema = KpiSchema::default_schema();
    LabeledDataset ds;
    KpiSample s;
    s.sample_id = "z0";
    s.values = Tensor({schema.m(), 3});
    // channel 0: {1,2,3}; channel 1: constant 5
    for (std::size_t t = 0; t < 3; ++t) {
        s.values.at(0, t) = double(t + 1);
        s.values.at(1, t) = 5.0;
    }
    ds.samples.push_back(s);
    ds.labels.push_back(RootCause::from_id(1));
    ds.sources.push_back(LabelSource::EXPERT);

    LabeledDataset z = zscore_fit_transform(ds);
    const double r = std::sqrt(1.5);  // 1 / (population std of {1,2,3}) = 1/sqrt(2/3)
    CHECK(z.samples[0].values.at(0, 0) == doctest::Approx(-r).epsilon(1e-9));
    CHECK(z.samples[0].values.at(0, 1) == doctest::Approx(0.0));
    CHECK(z.samples[0].values.at(0, 2) == doctest::Approx(r).epsilon(1e-9));
    CHECK(z.normalization_stats[0].mean == doctest::Approx(2.0));
    CHECK(z.normalization_stats[0].std == doctest::Approx(std::sqrt(2.0 / 3.0)));

    // constant channel -> zeros with stats (5, 1)
    for (std::size_t t = 0; t < 3; ++t) CHECK(z.samples[0].values.at(1, t) == 0.0);
    CHECK(z.normalization_stats[1].mean == doctest::Approx(5.0));
    CHECK(z.normalization_stats[1].std == doctest::Approx(1.0));

    // idempotence on already-standardized data
    LabeledDataset z2 = zscore_fit_transform(z);
    for (std::size_t i = 0; i < z.samples[0].values.size(); ++i)
        CHECK(z2.samples[0].values.data[i] ==
              doctest::Approx(z.samples[0].values.data[i]).epsilon(1e-9));

    // invert reproduces the input
    LabeledDataset back = zscore_invert(z);
    for (std::size_t i = 0; i < s.values.size(); ++i)
        CHECK(back.samples[0].values.data[i] == doctest::Approx(s.values.data[i]).epsilon(1e-9));

    // apply uses the fitted stats verbatim
    LabeledDataset applied = zscore_apply(ds, z.normalization_stats);
    CHECK(applied.samples[0].values.data == z.samples[0].values.data);

    CHECK_THROWS(zscore_fit_transform(LabeledDataset{}));
}

TEST_CASE("split_dataset contracts") {
    const KpiSchema& schema = KpiSchema::default_schema();
    // 60 samples, 6 balanced classes
    LabeledDataset ds;
    for (int cls = 1; cls <= 6; ++cls) {
        ScenarioConfig cfg{RootCause::from_id(cls), 10, std::uint64_t(cls), 1.0, 8};
        for (auto& s : synth_generate(cfg, schema)) {
            ds.samples.push_back(std::move(s));
            ds.labels.push_back(RootCause::from_id(cls));
            ds.sources.push_back(LabelSource::EXPERT);
        }
    }

    auto sp = split_dataset(ds, 0.5, 0.25, 0.25, 3);
    CHECK(sp.train.size() == 30);
    CHECK(sp.validation.size() == 15);
    CHECK(sp.test.size() == 15);
    // stratified: 5 train / per class
    std::map<int, int> per_class;
    for (const auto& l : sp.train.labels) per_class[l.id]++;
    for (int cls = 1; cls <= 6; ++cls) CHECK(per_class[cls] == 5);

    // disjoint + exhaustive by sample_id
    std::set<std::string> seen;
    for (const auto* part : {&sp.train, &sp.validation, &sp.test})
        for (const auto& s : part->samples) CHECK(seen.insert(s.sample_id).second);
    CHECK(seen.size() == 60);

    // determinism
    auto sp2 = split_dataset(ds, 0.5, 0.25, 0.25, 3);
    for (std::size_t i = 0; i < sp.train.size(); ++i)
        CHECK(sp.train.samples[i].sample_id == sp2.train.samples[i].sample_id);

    // (1,0,0) puts everything in train
    auto all_train = split_dataset(ds, 1.0, 0.0, 0.0, 3);
    CHECK(all_train.train.size() == 60);
    CHECK(all_train.validation.size() == 0);

    CHECK_THROWS(split_dataset(ds, 0.5, 0.25, 0.3, 3));
    CHECK_THROWS(split_dataset(LabeledDataset{}, 0.5, 0.25, 0.25, 3));
}

TEST_CASE("dataset CSV round trip and malformed files") {
    const KpiSchema& schema = KpiSchema::default_schema();
    RuleSet rs = RuleSet::default_ruleset();
    LabeledDataset ds = generate_rule_pool(12, 9, schema, rs, 10);
    // mix in an expert-labeled sample to cover both source values
    LabeledDataset ex = generate_expert_pool(6, 9, schema, RuleSet::default_ruleset(), 10);
    for (std::size_t i = 0; i < ex.size(); ++i) {
        ds.samples.push_back(ex.samples[i]);
        ds.labels.push_back(ex.labels[i]);
        ds.sources.push_back(ex.sources[i]);
    }

    const std::string sp = tmp_path("dkroot_samples_test.csv");
    const std::string lp = tmp_path("dkroot_labels_test.csv");
    save_dataset(ds, schema, sp, lp);
    LabeledDataset back = load_dataset(schema, sp, lp);
    REQUIRE(back.size() == ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(back.samples[i].sample_id == ds.samples[i].sample_id);
        CHECK(back.labels[i].id == ds.labels[i].id);
        CHECK(back.sources[i] == ds.sources[i]);
        REQUIRE(back.samples[i].values.shape == ds.samples[i].values.shape);
        for (std::size_t j = 0; j < ds.samples[i].values.size(); ++j)
            CHECK(back.samples[i].values.data[j] ==
                  doctest::Approx(ds.samples[i].values.data[j]).epsilon(1e-12));
    }

    // label file with class id 7 -> rejected
    {
        std::ofstream bad(lp);
        bad << "sample_id,class_id,source\n" << ds.samples[0].sample_id << ",7,rule\n";
    }
    CHECK_THROWS(load_dataset(schema, sp, lp));
    std::filesystem::remove(sp);
    std::filesystem::remove(lp);

    // truncated row -> error
    {
        std::ofstream badsp(sp);
        badsp << "sample_id,t";
        for (const auto& d : schema.descriptors) badsp << "," << d.name;
        badsp << "\n";
        badsp << "s0,0,1.0,2.0\n";  // too few columns
    }
    CHECK_THROWS(load_samples_csv(schema, sp));
    std::filesystem::remove(sp);
}

TEST_CASE("ruleset JSON round trip") {
    RuleSet rs = RuleSet::default_ruleset();
    const std::string p = tmp_path("dkroot_ruleset_test.json");
    save_ruleset(rs, p);
    RuleSet back = load_ruleset(p);
    REQUIRE(back.rules.size() == rs.rules.size());
    for (std::size_t i = 0; i < rs.rules.size(); ++i) {
        CHECK(back.rules[i].class_id == rs.rules[i].class_id);
        REQUIRE(back.rules[i].groups.size() == rs.rules[i].groups.size());
        for (std::size_t g = 0; g < rs.rules[i].groups.size(); ++g) {
            const auto& ga = rs.rules[i].groups[g].any_of;
            const auto& gb = back.rules[i].groups[g].any_of;
            REQUIRE(gb.size() == ga.size());
            for (std::size_t c = 0; c < ga.size(); ++c) {
                CHECK(gb[c].kpi == ga[c].kpi);
                CHECK(gb[c].ratio_num == ga[c].ratio_num);
                CHECK(gb[c].threshold == ga[c].threshold);
                CHECK(gb[c].cmp == ga[c].cmp);
                CHECK(gb[c].reduction == ga[c].reduction);
            }
        }
    }
    std::filesystem::remove(p);

    // labeling agrees through the round trip
    auto b = class2_base();
    CHECK(rule_label(b.s, back, b.schema).value().id == 2);
}
