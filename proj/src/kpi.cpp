#include "dkroot/kpi.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace dkroot {

std::string layer_name(Layer l) {
    switch (l) {
        case Layer::PHY: return "PHY";
        case Layer::MAC: return "MAC";
        case Layer::RLC: return "RLC";
        case Layer::PDCP: return "PDCP";
    }
    throw std::invalid_argument("bad layer");
}

Layer layer_from_name(const std::string& s) {
    if (s == "PHY") return Layer::PHY;
    if (s == "MAC") return Layer::MAC;
    if (s == "RLC") return Layer::RLC;
    if (s == "PDCP") return Layer::PDCP;
    throw std::invalid_argument("unknown layer: " + s);
}

std::size_t KpiSchema::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < descriptors.size(); ++i)
        if (descriptors[i].name == name) return i;
    throw std::out_of_range("schema: unknown KPI " + name);
}

bool KpiSchema::has(const std::string& name) const {
    for (const auto& d : descriptors)
        if (d.name == name) return true;
    return false;
}

const KpiSchema& KpiSchema::default_schema() {
    static const KpiSchema schema = [] {
        KpiSchema s;
        auto add = [&s](const char* n, Layer lay, const char* u) {
            if (!s.has(n)) s.descriptors.push_back({n, lay, u});
        };
        // rule-side KPIs
        add("PDCP_UL_LATENCY", Layer::PDCP, "ms");
        add("PDCP_DL_LATENCY", Layer::PDCP, "ms");
        add("RLC_UL_LATENCY", Layer::RLC, "ms");
        add("RLC_DL_LATENCY", Layer::RLC, "ms");
        add("UL_RLC_RETX_SDU", Layer::RLC, "count");
        add("UL_RLC_SDU", Layer::RLC, "count");
        add("UL_RBLER", Layer::PHY, "ratio");
        add("DL_RBLER", Layer::PHY, "ratio");
        add("UL_DTX_Ratio", Layer::MAC, "ratio");
        add("UL_MAC_HARQ_RETX_MAX", Layer::MAC, "count");
        add("DL_MAC_HARQ_RETX_MAX", Layer::MAC, "count");
        add("UL_DMRS_RSRP_MIN", Layer::PHY, "dBm");
        add("UL_SRS_RSRP", Layer::PHY, "dBm");
        // full feature set (duplicates skipped)
        add("UL_DMRS_SINR", Layer::PHY, "dB");
        add("UL_WB_PRE_SINR", Layer::PHY, "dB");
        add("UL_DMRS_RSRP_AVG", Layer::PHY, "dBm");
        add("SS_SINR", Layer::PHY, "dB");
        add("RSRP_DIFF_NEIGH_CNT", Layer::PHY, "count");
        add("TOP1_NEIGH_SSB_RSRP", Layer::PHY, "dBm");
        add("SERV_SSB_RSRP", Layer::PHY, "dBm");
        add("SERV_SSB_RSRQ", Layer::PHY, "dB");
        add("CQI_AVG_CW0", Layer::PHY, "index");
        add("DL_PRB_UTIL", Layer::MAC, "ratio");
        add("UL_PRB_UTIL", Layer::MAC, "ratio");
        add("DL_CCE_FAIL_RATE", Layer::MAC, "ratio");
        add("UL_CCE_FAIL_RATE", Layer::MAC, "ratio");
        add("CCE_UTIL_RATE", Layer::MAC, "ratio");
        add("DL_CCE_USAGE_RATIO", Layer::MAC, "ratio");
        add("COMMON_CCE_USAGE", Layer::MAC, "ratio");
        add("UL_CCE_USAGE_RATIO", Layer::MAC, "ratio");
        add("UL_SCHED_FAIL_RATE_CCE", Layer::MAC, "ratio");
        add("UL_SCHED_FAIL_CNT_CCE", Layer::MAC, "count");
        add("DL_SCHED_FAIL_RATE_CCE", Layer::MAC, "ratio");
        add("DL_SCHED_FAIL_CNT_CCE", Layer::MAC, "count");
        add("DL_CCE_FAIL_CNT_TOTAL", Layer::MAC, "count");
        add("DL_CCE_FAIL_RATE_TOTAL", Layer::MAC, "ratio");
        add("DL_CCE_FAIL_CNT_QUOTA", Layer::MAC, "count");
        add("DL_CCE_FAIL_CNT_CONFLICT", Layer::MAC, "count");
        add("UL_CCE_FAIL_CNT_TOTAL", Layer::MAC, "count");
        add("UL_CCE_FAIL_RATE_TOTAL", Layer::MAC, "ratio");
        add("UL_CCE_FAIL_CNT_CONFLICT", Layer::MAC, "count");
        add("DL_RLC_TPUT", Layer::RLC, "Mbit");
        add("DL_RLC_LASTTTI_RATIO", Layer::RLC, "ratio");
        add("UL_RLC_TPUT", Layer::RLC, "Mbit");
        add("UL_RLC_SMALLPKT_RATIO", Layer::RLC, "ratio");
        add("PDCP_DL_TPUT", Layer::PDCP, "Mbit");
        add("PDCP_UL_TPUT", Layer::PDCP, "Mbit");
        return s;
    }();
    return schema;
}

void save_schema(const KpiSchema& schema, const std::string& path) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& d : schema.descriptors)
        j.push_back({{"name", d.name}, {"layer", layer_name(d.layer)}, {"unit", d.unit}});
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write schema: " + path);
    out << j.dump(2);
}

KpiSchema load_schema(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read schema: " + path);
    nlohmann::json j;
    in >> j;
    KpiSchema s;
    for (const auto& e : j) {
        KpiDescriptor d{e.at("name").get<std::string>(),
                        layer_from_name(e.at("layer").get<std::string>()),
                        e.at("unit").get<std::string>()};
        if (s.has(d.name)) throw std::runtime_error("schema: duplicate KPI " + d.name);
        s.descriptors.push_back(std::move(d));
    }
    return s;
}

std::string RootCause::name() const {
    switch (id) {
        case 1: return "Uplink Interference";
        case 2: return "Uplink Weak Coverage";
        case 3: return "Downlink Interference";
        case 4: return "Downlink Weak Coverage";
        case 5: return "Traffic Channel Overload";
        case 6: return "Control Channel Overload";
    }
    throw std::out_of_range("unknown class id");
}

RootCause RootCause::from_id(int id) {
    if (id < 1 || id > k_num_classes) throw std::out_of_range("unknown class id");
    return RootCause{id};
}

void LabeledDataset::validate() const {
    if (labels.size() != samples.size() || sources.size() != samples.size())
        throw std::invalid_argument("dataset: samples/labels/sources length mismatch");
    for (const auto& l : labels) RootCause::from_id(l.id);
    for (const auto& s : samples)
        if (!s.values.all_finite())
            throw std::invalid_argument("dataset: non-finite value in sample " + s.sample_id);
    for (const auto& st : normalization_stats)
        if (!(st.std > 0.0))
            throw std::invalid_argument("dataset: non-positive normalization std");
}

// -- rule engine --------------------------------------------------------

static double reduce_series(const std::vector<double>& xs, Reduction r) {
    switch (r) {
        case Reduction::MAX: return *std::max_element(xs.begin(), xs.end());
        case Reduction::MIN: return *std::min_element(xs.begin(), xs.end());
        case Reduction::MEAN: {
            double s = 0.0;
            for (double v : xs) s += v;
            return s / double(xs.size());
        }
    }
    throw std::invalid_argument("bad reduction");
}

static bool compare(double v, Comparator c, double thr) {
    switch (c) {
        case Comparator::GE: return v >= thr;
        case Comparator::LE: return v <= thr;
        case Comparator::GT: return v > thr;
        case Comparator::LT: return v < thr;
    }
    throw std::invalid_argument("bad comparator");
}

static bool eval_condition(const RuleCondition& c, const KpiSample& s, const KpiSchema& schema) {
    const std::size_t l = s.l();
    std::vector<double> series(l);
    if (c.is_ratio()) {
        const std::size_t ni = schema.index_of(c.ratio_num);
        const std::size_t di = schema.index_of(c.ratio_den);
        for (std::size_t t = 0; t < l; ++t)
            series[t] = s.values.at(ni, t) / (s.values.at(di, t) + c.epsilon);
    } else {
        const std::size_t i = schema.index_of(c.kpi);
        for (std::size_t t = 0; t < l; ++t) series[t] = s.values.at(i, t);
    }
    return compare(reduce_series(series, c.reduction), c.cmp, c.threshold);
}

std::optional<RootCause> rule_label(const KpiSample& sample, const RuleSet& rs,
                                    const KpiSchema& schema) {
    if (sample.m() != schema.m())
        throw std::invalid_argument("rule_label: sample channel count does not match schema");
    auto rules = rs.rules;
    std::sort(rules.begin(), rules.end(),
              [](const Rule& a, const Rule& b) { return a.class_id < b.class_id; });
    for (const auto& rule : rules) {
        bool all = true;
        for (const auto& g : rule.groups) {
            bool any = false;
            for (const auto& c : g.any_of)
                if (eval_condition(c, sample, schema)) {
                    any = true;
                    break;
                }
            if (!any) {
                all = false;
                break;
            }
        }
        if (all) return RootCause::from_id(rule.class_id);
    }
    return std::nullopt;
}

static RuleCondition cond(const char* kpi, Comparator cmp, double thr, Reduction red) {
    RuleCondition c;
    c.kpi = kpi;
    c.cmp = cmp;
    c.threshold = thr;
    c.reduction = red;
    return c;
}

static RuleCondition ratio_cond(const char* num, const char* den, double eps, Comparator cmp,
                                double thr, Reduction red) {
    RuleCondition c;
    c.ratio_num = num;
    c.ratio_den = den;
    c.epsilon = eps;
    c.cmp = cmp;
    c.threshold = thr;
    c.reduction = red;
    return c;
}

RuleSet RuleSet::default_ruleset() {
    using C = Comparator;
    using R = Reduction;
    RuleSet rs;

    // Shared high-latency gate for degraded sessions.
    RuleGroup lat_gate{{cond("PDCP_DL_LATENCY", C::GE, 200, R::MAX),
                        cond("PDCP_UL_LATENCY", C::GE, 200, R::MAX)}};

    {  // 1: Uplink Interference -- poor uplink SINR despite healthy received power
        Rule r;
        r.class_id = 1;
        r.groups.push_back(lat_gate);
        r.groups.push_back({{cond("UL_DMRS_SINR", C::LE, -2, R::MIN)}});
        r.groups.push_back({{cond("UL_WB_PRE_SINR", C::LE, 0, R::MIN)}});
        r.groups.push_back({{cond("UL_DMRS_RSRP_AVG", C::GE, -112, R::MAX)}});
        rs.rules.push_back(std::move(r));
    }
    {  // 2: Uplink Weak Coverage -- the five-condition reference rule
        Rule r;
        r.class_id = 2;
        r.groups.push_back(lat_gate);
        r.groups.push_back({{cond("RLC_DL_LATENCY", C::GE, 200, R::MAX),
                             cond("RLC_UL_LATENCY", C::GE, 200, R::MAX)}});
        r.groups.push_back(
            {{ratio_cond("UL_RLC_RETX_SDU", "UL_RLC_SDU", 1e-5, C::GT, 0.1, R::MAX)}});
        r.groups.push_back({{cond("DL_RBLER", C::GE, 0.1, R::MAX),
                             cond("UL_RBLER", C::GE, 0.1, R::MAX),
                             cond("UL_DTX_Ratio", C::GE, 0.2, R::MAX),
                             cond("UL_MAC_HARQ_RETX_MAX", C::GE, 50, R::MAX),
                             cond("DL_MAC_HARQ_RETX_MAX", C::GE, 50, R::MAX)}});
        r.groups.push_back({{cond("UL_DMRS_RSRP_MIN", C::LE, -125, R::MIN),
                             cond("UL_SRS_RSRP", C::LE, -130, R::MIN)}});
        rs.rules.push_back(std::move(r));
    }
    {  // 3: Downlink Interference
        Rule r;
        r.class_id = 3;
        r.groups.push_back(lat_gate);
        r.groups.push_back({{cond("SS_SINR", C::LE, -3, R::MIN)}});
        r.groups.push_back({{cond("DL_RBLER", C::GE, 0.1, R::MAX)}});
        r.groups.push_back({{cond("SERV_SSB_RSRP", C::GE, -105, R::MAX)}});
        rs.rules.push_back(std::move(r));
    }
    {  // 4: Downlink Weak Coverage
        Rule r;
        r.class_id = 4;
        r.groups.push_back(lat_gate);
        r.groups.push_back({{cond("SERV_SSB_RSRP", C::LE, -115, R::MIN)}});
        r.groups.push_back({{cond("SERV_SSB_RSRQ", C::LE, -15, R::MIN),
                             cond("CQI_AVG_CW0", C::LE, 5, R::MIN)}});
        rs.rules.push_back(std::move(r));
    }
    {  // 5: Traffic Channel Overload
        Rule r;
        r.class_id = 5;
        r.groups.push_back(lat_gate);
        r.groups.push_back({{cond("DL_PRB_UTIL", C::GE, 0.9, R::MAX),
                             cond("UL_PRB_UTIL", C::GE, 0.9, R::MAX)}});
        r.groups.push_back({{cond("DL_RLC_LASTTTI_RATIO", C::GE, 0.8, R::MAX)}});
        rs.rules.push_back(std::move(r));
    }
    {  // 6: Control Channel Overload
        Rule r;
        r.class_id = 6;
        r.groups.push_back(lat_gate);
        r.groups.push_back({{cond("CCE_UTIL_RATE", C::GE, 0.85, R::MAX)}});
        r.groups.push_back({{cond("DL_CCE_FAIL_RATE", C::GE, 0.2, R::MAX),
                             cond("UL_CCE_FAIL_RATE", C::GE, 0.2, R::MAX)}});
        rs.rules.push_back(std::move(r));
    }
    return rs;
}

std::vector<std::string> RuleSet::referenced_kpis() const {
    std::vector<std::string> out;
    auto push = [&out](const std::string& s) {
        if (!s.empty() && std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
    };
    for (const auto& r : rules)
        for (const auto& g : r.groups)
            for (const auto& c : g.any_of) {
                push(c.kpi);
                push(c.ratio_num);
                push(c.ratio_den);
            }
    return out;
}

static std::string cmp_name(Comparator c) {
    switch (c) {
        case Comparator::GE: return "ge";
        case Comparator::LE: return "le";
        case Comparator::GT: return "gt";
        case Comparator::LT: return "lt";
    }
    throw std::invalid_argument("bad comparator");
}
static Comparator cmp_from(const std::string& s) {
    if (s == "ge") return Comparator::GE;
    if (s == "le") return Comparator::LE;
    if (s == "gt") return Comparator::GT;
    if (s == "lt") return Comparator::LT;
    throw std::invalid_argument("unknown comparator: " + s);
}
static std::string red_name(Reduction r) {
    switch (r) {
        case Reduction::MAX: return "max";
        case Reduction::MIN: return "min";
        case Reduction::MEAN: return "mean";
    }
    throw std::invalid_argument("bad reduction");
}
static Reduction red_from(const std::string& s) {
    if (s == "max") return Reduction::MAX;
    if (s == "min") return Reduction::MIN;
    if (s == "mean") return Reduction::MEAN;
    throw std::invalid_argument("unknown reduction: " + s);
}

void save_ruleset(const RuleSet& rs, const std::string& path) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rs.rules) {
        nlohmann::json jr;
        jr["class_id"] = r.class_id;
        auto& groups = jr["groups"] = nlohmann::json::array();
        for (const auto& g : r.groups) {
            nlohmann::json jg;
            auto& any = jg["any_of"] = nlohmann::json::array();
            for (const auto& c : g.any_of) {
                nlohmann::json jc;
                if (c.is_ratio()) {
                    jc["ratio_of"] = {c.ratio_num, c.ratio_den};
                    jc["epsilon"] = c.epsilon;
                } else {
                    jc["kpi"] = c.kpi;
                }
                jc["comparator"] = cmp_name(c.cmp);
                jc["threshold"] = c.threshold;
                jc["reduction"] = red_name(c.reduction);
                any.push_back(std::move(jc));
            }
            groups.push_back(std::move(jg));
        }
        j.push_back(std::move(jr));
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write ruleset: " + path);
    out << j.dump(2);
}

RuleSet load_ruleset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read ruleset: " + path);
    nlohmann::json j;
    in >> j;
    RuleSet rs;
    for (const auto& jr : j) {
        Rule r;
        r.class_id = jr.at("class_id").get<int>();
        RootCause::from_id(r.class_id);
        for (const auto& jg : jr.at("groups")) {
            RuleGroup g;
            for (const auto& jc : jg.at("any_of")) {
                RuleCondition c;
                if (jc.contains("ratio_of")) {
                    c.ratio_num = jc.at("ratio_of").at(0).get<std::string>();
                    c.ratio_den = jc.at("ratio_of").at(1).get<std::string>();
                    c.epsilon = jc.value("epsilon", 1e-5);
                } else {
                    c.kpi = jc.at("kpi").get<std::string>();
                }
                c.cmp = cmp_from(jc.at("comparator").get<std::string>());
                c.threshold = jc.at("threshold").get<double>();
                c.reduction = red_from(jc.at("reduction").get<std::string>());
                g.any_of.push_back(std::move(c));
            }
            r.groups.push_back(std::move(g));
        }
        rs.rules.push_back(std::move(r));
    }
    return rs;
}

// -- synthetic generator ------------------------------------------------

namespace {

struct Background {
    const char* kpi;
    double mean, std;
};

// Quiet-session statistics; planted degradation patterns sit on top.
const Background k_background[] = {
    {"PDCP_UL_LATENCY", 80, 15},      {"PDCP_DL_LATENCY", 80, 15},
    {"RLC_UL_LATENCY", 70, 12},       {"RLC_DL_LATENCY", 70, 12},
    {"UL_RLC_RETX_SDU", 20, 6},       {"UL_RLC_SDU", 400, 50},
    {"UL_RBLER", 0.03, 0.01},         {"DL_RBLER", 0.03, 0.01},
    {"UL_DTX_Ratio", 0.05, 0.02},     {"UL_MAC_HARQ_RETX_MAX", 8, 3},
    {"DL_MAC_HARQ_RETX_MAX", 8, 3},   {"UL_DMRS_RSRP_MIN", -105, 4},
    {"UL_SRS_RSRP", -102, 4},         {"UL_DMRS_SINR", 14, 3},
    {"UL_WB_PRE_SINR", 12, 3},        {"UL_DMRS_RSRP_AVG", -98, 4},
    {"SS_SINR", 10, 3},               {"RSRP_DIFF_NEIGH_CNT", 2, 1},
    {"TOP1_NEIGH_SSB_RSRP", -100, 5}, {"SERV_SSB_RSRP", -92, 4},
    {"SERV_SSB_RSRQ", -10, 1.5},      {"CQI_AVG_CW0", 10, 1.5},
    {"DL_PRB_UTIL", 0.45, 0.1},       {"UL_PRB_UTIL", 0.4, 0.1},
    {"DL_CCE_FAIL_RATE", 0.05, 0.02}, {"UL_CCE_FAIL_RATE", 0.05, 0.02},
    {"CCE_UTIL_RATE", 0.4, 0.1},      {"DL_CCE_USAGE_RATIO", 0.3, 0.08},
    {"COMMON_CCE_USAGE", 0.2, 0.05},  {"UL_CCE_USAGE_RATIO", 0.3, 0.08},
    {"UL_SCHED_FAIL_RATE_CCE", 0.04, 0.015},
    {"UL_SCHED_FAIL_CNT_CCE", 5, 2},  {"DL_SCHED_FAIL_RATE_CCE", 0.04, 0.015},
    {"DL_SCHED_FAIL_CNT_CCE", 5, 2},  {"DL_CCE_FAIL_CNT_TOTAL", 4, 2},
    {"DL_CCE_FAIL_RATE_TOTAL", 0.04, 0.015},
    {"DL_CCE_FAIL_CNT_QUOTA", 2, 1},  {"DL_CCE_FAIL_CNT_CONFLICT", 2, 1},
    {"UL_CCE_FAIL_CNT_TOTAL", 4, 2},  {"UL_CCE_FAIL_RATE_TOTAL", 0.04, 0.015},
    {"UL_CCE_FAIL_CNT_CONFLICT", 2, 1},
    {"DL_RLC_TPUT", 60, 15},          {"DL_RLC_LASTTTI_RATIO", 0.3, 0.08},
    {"UL_RLC_TPUT", 25, 8},           {"UL_RLC_SMALLPKT_RATIO", 0.25, 0.07},
    {"PDCP_DL_TPUT", 55, 14},         {"PDCP_UL_TPUT", 22, 7},
};

struct PlantSpec {
    const char* kpi;
    int dir;           // +1: cross above threshold, -1: dip below
    double threshold;  // rule threshold the plant targets
    double reach;      // severity scale of the excursion
    const char* pin_kpi = nullptr;  // optionally pin another channel at the
    double pin_value = 0.0;         // planted timesteps (ratio denominators)
};

// Margin law: excursion = (severity - 0.40) * reach + U(-0.25, 0.25) * reach.
// Crossing is guaranteed for severity >= 0.8 and ~70% likely per peak at 0.5.
double excursion(double severity, double reach, Rng& rng) {
    return (severity - 0.40) * reach + rng.uniform(-0.25, 0.25) * reach;
}

constexpr double k_background_rho = 0.9;  // temporal AR(1) correlation

const std::vector<PlantSpec>& class_signature(int class_id) {
    static const std::vector<std::vector<PlantSpec>> sigs = {
        // 1: Uplink Interference
        {{"UL_DMRS_SINR", -1, -2, 12}, {"UL_WB_PRE_SINR", -1, 0, 12}},
        // 2: Uplink Weak Coverage
        {{"RLC_UL_LATENCY", +1, 200, 180},
         {"UL_RLC_RETX_SDU", +1, 40, 120, "UL_RLC_SDU", 400.0},
         {"UL_RBLER", +1, 0.1, 0.3},
         {"UL_DMRS_RSRP_MIN", -1, -125, 20},
         {"UL_SRS_RSRP", -1, -130, 20}},
        // 3: Downlink Interference
        {{"SS_SINR", -1, -3, 12}, {"DL_RBLER", +1, 0.1, 0.3}},
        // 4: Downlink Weak Coverage
        {{"SERV_SSB_RSRP", -1, -115, 15},
         {"SERV_SSB_RSRQ", -1, -15, 8},
         {"CQI_AVG_CW0", -1, 5, 5}},
        // 5: Traffic Channel Overload
        {{"DL_PRB_UTIL", +1, 0.9, 0.45},
         {"UL_PRB_UTIL", +1, 0.9, 0.45},
         {"DL_RLC_LASTTTI_RATIO", +1, 0.8, 0.5}},
        // 6: Control Channel Overload
        {{"CCE_UTIL_RATE", +1, 0.85, 0.45},
         {"DL_CCE_FAIL_RATE", +1, 0.2, 0.4},
         {"UL_CCE_FAIL_RATE", +1, 0.2, 0.4}},
    };
    return sigs.at(std::size_t(class_id - 1));
}

constexpr int k_peaks_per_condition = 3;
constexpr double k_confusion_rate = 0.45;  // scaled by (1 - severity)

// Degradation bursts persist several timesteps: a peak at t with tapering
// shoulders out to t +/- 3. Writes are extremal in the excursion direction so
// overlapping bursts never pull an already-planted crossing back across its
// threshold.
void plant_peak(Tensor& x, std::size_t ch, std::size_t t, int dir, double peak, double base) {
    const std::size_t l = x.dim(1);
    auto put = [&](long tt, double frac) {
        if (tt < 0 || tt >= long(l)) return;
        double& cell = x.at(ch, std::size_t(tt));
        const double v = base + frac * (peak - base);
        if ((dir > 0 && v > cell) || (dir < 0 && v < cell)) cell = v;
    };
    static constexpr double k_taper[4] = {1.0, 0.75, 0.5, 0.3};
    for (int d = -3; d <= 3; ++d) put(long(t) + d, k_taper[d < 0 ? -d : d]);
}

// subthreshold: plant the signature as clear off-background cues that stay on
// the rule-safe side of every threshold (the "expert can tell, rules cannot"
// regime used for the ambiguous-session model).
void plant_signature(Tensor& x, const KpiSchema& schema, int class_id, double severity,
                     Rng& rng, bool subthreshold = false) {
    const std::size_t l = x.dim(1);
    for (const auto& spec : class_signature(class_id)) {
        const std::size_t ch = schema.index_of(spec.kpi);
        for (int p = 0; p < k_peaks_per_condition; ++p) {
            const std::size_t t = std::size_t(rng.uniform_int(0, long(l) - 1));
            double peak;
            if (subthreshold) {
                peak = spec.threshold -
                       double(spec.dir) * (0.15 + rng.uniform(0.0, 0.15)) * spec.reach;
            } else {
                peak = spec.threshold + double(spec.dir) * excursion(severity, spec.reach, rng);
            }
            plant_peak(x, ch, t, spec.dir, peak, x.at(ch, t));
            if (spec.pin_kpi) x.at(schema.index_of(spec.pin_kpi), t) = spec.pin_value;
        }
    }
}

}  // namespace

std::vector<KpiSample> synth_generate(const ScenarioConfig& config, const KpiSchema& schema) {
    RootCause::from_id(config.class_id.id);
    if (config.n_samples < 1) throw std::invalid_argument("synth_generate: n_samples >= 1");
    if (config.severity < 0.0 || config.severity > 1.0)
        throw std::invalid_argument("synth_generate: severity must lie in [0, 1]");
    if (config.l < 2) throw std::invalid_argument("synth_generate: l too small");
    for (const auto& spec : class_signature(config.class_id.id))
        if (!schema.has(spec.kpi))
            throw std::invalid_argument(std::string("synth_generate: schema missing ") + spec.kpi);

    std::unordered_map<std::string, Background> bg;
    for (const auto& b : k_background) bg[b.kpi] = b;

    Rng base(config.seed);
    std::vector<KpiSample> out;
    out.reserve(config.n_samples);
    for (std::size_t i = 0; i < config.n_samples; ++i) {
        Rng rng = base.split(i);
        Tensor x({schema.m(), config.l});
        const double rho = k_background_rho;
        const double innov = std::sqrt(1.0 - rho * rho);
        for (std::size_t c = 0; c < schema.m(); ++c) {
            auto it = bg.find(schema.descriptors[c].name);
            const double mu = it != bg.end() ? it->second.mean : 0.0;
            const double sd = it != bg.end() ? it->second.std : 1.0;
            // smooth AR(1) background with unit marginal variance; clipping
            // keeps planted threshold margins hard
            double z = rng.normal();
            for (std::size_t t = 0; t < config.l; ++t) {
                x.at(c, t) = mu + sd * std::clamp(z, -3.0, 3.0);
                z = rho * z + innov * rng.normal();
            }
        }
        // every degraded session shows the latency burst
        {
            const std::size_t pdcp = schema.index_of("PDCP_UL_LATENCY");
            for (int p = 0; p < k_peaks_per_condition; ++p) {
                const std::size_t t = std::size_t(rng.uniform_int(0, long(config.l) - 1));
                plant_peak(x, pdcp, t, +1,
                           210.0 + 150.0 * config.severity + rng.uniform(0.0, 40.0),
                           x.at(pdcp, t));
            }
        }
        // Ambiguous low-severity sessions: the true signature stays below every
        // rule threshold (visible cues only) while a second class's blatant
        // signature is planted on top -- the ruleset mislabels these, only the
        // expert ground truth resolves them. Severity >= 0.8 is never confused.
        const bool confuse = config.severity < 0.8 &&
                             rng.uniform() < k_confusion_rate * (1.0 - config.severity);
        plant_signature(x, schema, config.class_id.id, config.severity, rng, confuse);
        if (confuse) {
            int other = 1 + int(rng.uniform_int(0, 4));
            if (other >= config.class_id.id) ++other;
            plant_signature(x, schema, other, 0.9, rng);
        }
        KpiSample s;
        s.sample_id = "c" + std::to_string(config.class_id.id) + "-" +
                      std::to_string(config.seed) + "-" + std::to_string(i);
        s.values = std::move(x);
        out.push_back(std::move(s));
    }
    return out;
}

LabeledDataset generate_rule_pool(std::size_t n, std::uint64_t seed, const KpiSchema& schema,
                                  const RuleSet& rs, std::size_t l) {
    LabeledDataset ds;
    Rng meta(seed);
    std::size_t made = 0;
    for (std::size_t i = 0; made < n; ++i) {
        if (i > 40 * n) throw std::runtime_error("generate_rule_pool: ruleset rejects everything");
        Rng r = meta.split(i);
        const int cls = 1 + int(r.uniform_int(0, 5));
        const double severity = r.uniform(0.5, 1.0);
        ScenarioConfig cfg{RootCause::from_id(cls), 1, r.raw(), severity, l};
        auto samples = synth_generate(cfg, schema);
        auto label = rule_label(samples[0], rs, schema);
        if (!label) continue;  // no rule fired; session is not rule-labelable
        samples[0].sample_id = "r-" + std::to_string(seed) + "-" + std::to_string(made);
        ds.samples.push_back(std::move(samples[0]));
        ds.labels.push_back(*label);
        ds.sources.push_back(LabelSource::RULE);
        ++made;
    }
    return ds;
}

LabeledDataset generate_expert_pool(std::size_t n, std::uint64_t seed, const KpiSchema& schema,
                                    const RuleSet& rs, std::size_t l) {
    LabeledDataset ds;
    Rng meta(seed);
    for (std::size_t i = 0; i < n; ++i) {
        Rng r = meta.split(i);
        const int cls = 1 + int(i % 6);  // balanced classes
        // Expert tickets are the escalated sessions: mild primary degradations
        // the threshold rules misdiagnosed or could not label, often with an
        // unrelated blatant secondary fault that draws the rules off target.
        // A small share of rule-consistent sessions still reaches the queue.
        for (int attempt = 0;; ++attempt) {
            const double severity = r.uniform(0.35, 0.65);
            ScenarioConfig cfg{RootCause::from_id(cls), 1, r.raw(), severity, l};
            auto samples = synth_generate(cfg, schema);
            if (r.uniform() < 0.7) {
                int other = 1 + int(r.uniform_int(0, 4));
                if (other >= cls) ++other;
                plant_signature(samples[0].values, schema, other, 0.95, r);
            }
            auto label = rule_label(samples[0], rs, schema);
            const bool escalated = !label || label->id != cls;
            if (!escalated && attempt < 40 && r.uniform() >= 0.25) continue;
            samples[0].sample_id = "e-" + std::to_string(seed) + "-" + std::to_string(i);
            ds.samples.push_back(std::move(samples[0]));
            ds.labels.push_back(RootCause::from_id(cls));  // ground truth, not the rule
            ds.sources.push_back(LabelSource::EXPERT);
            break;
        }
    }
    return ds;
}

// -- normalization ------------------------------------------------------

LabeledDataset zscore_fit_transform(const LabeledDataset& ds) {
    if (ds.samples.empty()) throw std::invalid_argument("zscore: empty dataset");
    const std::size_t m = ds.samples[0].m();
    std::vector<ChannelStats> stats(m);
    for (std::size_t c = 0; c < m; ++c) {
        double sum = 0.0, sq = 0.0;
        std::size_t n = 0;
        for (const auto& s : ds.samples)
            for (std::size_t t = 0; t < s.l(); ++t) {
                sum += s.values.at(c, t);
                sq += s.values.at(c, t) * s.values.at(c, t);
                ++n;
            }
        const double mean = sum / double(n);
        double var = sq / double(n) - mean * mean;  // population variance
        if (var < 0.0) var = 0.0;
        stats[c].mean = mean;
        stats[c].std = var > 1e-24 ? std::sqrt(var) : 1.0;  // constant channel -> std 1
    }
    LabeledDataset out = zscore_apply(ds, stats);
    out.normalization_stats = std::move(stats);
    return out;
}

LabeledDataset zscore_apply(const LabeledDataset& ds, const std::vector<ChannelStats>& stats) {
    LabeledDataset out = ds;
    for (auto& s : out.samples)
        for (std::size_t c = 0; c < s.m(); ++c)
            for (std::size_t t = 0; t < s.l(); ++t)
                s.values.at(c, t) = (s.values.at(c, t) - stats[c].mean) / stats[c].std;
    out.normalization_stats = stats;
    return out;
}

LabeledDataset zscore_invert(const LabeledDataset& ds) {
    if (ds.normalization_stats.empty())
        throw std::invalid_argument("zscore_invert: dataset has no stored stats");
    LabeledDataset out = ds;
    for (auto& s : out.samples) s.values = zscore_invert_matrix(s.values, ds.normalization_stats);
    out.normalization_stats.clear();
    return out;
}

Tensor zscore_invert_matrix(const Tensor& values, const std::vector<ChannelStats>& stats) {
    Tensor out = values;
    for (std::size_t c = 0; c < out.dim(0); ++c)
        for (std::size_t t = 0; t < out.dim(1); ++t)
            out.at(c, t) = out.at(c, t) * stats[c].std + stats[c].mean;
    return out;
}

// -- splits -------------------------------------------------------------

SplitResult split_dataset(const LabeledDataset& ds, double f_train, double f_val, double f_test,
                          std::uint64_t seed) {
    if (ds.samples.empty()) throw std::invalid_argument("split: empty dataset");
    if (f_train < 0 || f_val < 0 || f_test < 0 ||
        std::abs(f_train + f_val + f_test - 1.0) > 1e-9)
        throw std::invalid_argument("split: fractions must be nonnegative and sum to 1");

    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i].id].push_back(i);

    std::vector<std::size_t> idx_train, idx_val, idx_test;
    std::size_t tie_rank = 0;  // rotates exact-remainder ties so global counts balance
    for (auto& [cls, idx] : by_class) {
        Rng rng = Rng(seed).split(std::uint64_t(cls));
        for (std::size_t i = idx.size(); i > 1; --i)
            std::swap(idx[i - 1], idx[std::size_t(rng.uniform_int(0, long(i) - 1))]);

        const double n = double(idx.size());
        const double exact[3] = {f_train * n, f_val * n, f_test * n};
        std::size_t cnt[3] = {std::size_t(exact[0]), std::size_t(exact[1]), std::size_t(exact[2])};
        std::size_t assigned = cnt[0] + cnt[1] + cnt[2];
        while (assigned < idx.size()) {
            double best_rem = -1.0;
            for (int k = 0; k < 3; ++k)
                best_rem = std::max(best_rem, exact[k] - double(cnt[k]));
            std::vector<int> tied;
            for (int k = 0; k < 3; ++k)
                if (exact[k] - double(cnt[k]) > best_rem - 1e-9) tied.push_back(k);
            cnt[tied[tie_rank % tied.size()]] += 1;
            ++tie_rank;
            ++assigned;
        }
        std::size_t p = 0;
        for (std::size_t i = 0; i < cnt[0]; ++i) idx_train.push_back(idx[p++]);
        for (std::size_t i = 0; i < cnt[1]; ++i) idx_val.push_back(idx[p++]);
        for (std::size_t i = 0; i < cnt[2]; ++i) idx_test.push_back(idx[p++]);
    }

    auto take = [&ds](const std::vector<std::size_t>& idx) {
        LabeledDataset out;
        out.normalization_stats = ds.normalization_stats;
        for (auto i : idx) {
            out.samples.push_back(ds.samples[i]);
            out.labels.push_back(ds.labels[i]);
            out.sources.push_back(ds.sources[i]);
        }
        return out;
    };
    return {take(idx_train), take(idx_val), take(idx_test)};
}

// -- file formats -------------------------------------------------------

static std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

void save_dataset(const LabeledDataset& ds, const KpiSchema& schema,
                  const std::string& samples_path, const std::string& labels_path) {
    ds.validate();
    std::ofstream sf(samples_path);
    if (!sf) throw std::runtime_error("cannot write " + samples_path);
    sf << "sample_id,t";
    for (const auto& d : schema.descriptors) sf << "," << d.name;
    sf << "\n";
    for (const auto& s : ds.samples) {
        if (s.m() != schema.m())
            throw std::runtime_error("save_dataset: sample " + s.sample_id + " channel mismatch");
        for (std::size_t t = 0; t < s.l(); ++t) {
            sf << s.sample_id << "," << t;
            for (std::size_t c = 0; c < s.m(); ++c) sf << "," << fmt_double(s.values.at(c, t));
            sf << "\n";
        }
    }

    std::ofstream lf(labels_path);
    if (!lf) throw std::runtime_error("cannot write " + labels_path);
    lf << "sample_id,class_id,source\n";
    for (std::size_t i = 0; i < ds.size(); ++i)
        lf << ds.samples[i].sample_id << "," << ds.labels[i].id << ","
           << (ds.sources[i] == LabelSource::RULE ? "rule" : "expert") << "\n";
}

static std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

std::vector<KpiSample> load_samples_csv(const KpiSchema& schema, const std::string& samples_path) {
    std::ifstream sf(samples_path);
    if (!sf) throw std::runtime_error("cannot read " + samples_path);
    std::string line;
    if (!std::getline(sf, line)) throw std::runtime_error(samples_path + ": empty file");
    {
        auto hdr = split_csv_line(line);
        if (hdr.size() != schema.m() + 2 || hdr[0] != "sample_id" || hdr[1] != "t")
            throw std::runtime_error(samples_path + ": malformed header");
        for (std::size_t c = 0; c < schema.m(); ++c)
            if (hdr[c + 2] != schema.descriptors[c].name)
                throw std::runtime_error(samples_path + ": header KPI mismatch at column " +
                                         std::to_string(c + 2));
    }

    // ordered accumulation of per-sample rows
    std::vector<std::string> order;
    std::unordered_map<std::string, std::vector<std::vector<double>>> rows;
    std::size_t lineno = 1;
    while (std::getline(sf, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != schema.m() + 2)
            throw std::runtime_error(samples_path + ": row " + std::to_string(lineno) +
                                     " has " + std::to_string(f.size()) + " columns, expected " +
                                     std::to_string(schema.m() + 2));
        const std::string& id = f[0];
        const std::size_t t = std::stoul(f[1]);
        auto it = rows.find(id);
        if (it == rows.end()) {
            order.push_back(id);
            it = rows.emplace(id, std::vector<std::vector<double>>{}).first;
        }
        if (t != it->second.size())
            throw std::runtime_error(samples_path + ": row " + std::to_string(lineno) +
                                     ": non-contiguous timestep for " + id);
        std::vector<double> vals(schema.m());
        for (std::size_t c = 0; c < schema.m(); ++c) {
            vals[c] = std::stod(f[c + 2]);
            if (!std::isfinite(vals[c]))
                throw std::runtime_error(samples_path + ": row " + std::to_string(lineno) +
                                         ": non-finite value");
        }
        it->second.push_back(std::move(vals));
    }

    std::vector<KpiSample> samples;
    samples.reserve(order.size());
    for (const auto& id : order) {
        const auto& rws = rows[id];
        KpiSample s;
        s.sample_id = id;
        s.values = Tensor({schema.m(), rws.size()});
        for (std::size_t t = 0; t < rws.size(); ++t)
            for (std::size_t c = 0; c < schema.m(); ++c) s.values.at(c, t) = rws[t][c];
        samples.push_back(std::move(s));
    }
    return samples;
}

LabeledDataset load_dataset(const KpiSchema& schema, const std::string& samples_path,
                            const std::string& labels_path) {
    std::vector<KpiSample> samples = load_samples_csv(schema, samples_path);
    std::string line;
    std::ifstream lf(labels_path);
    if (!lf) throw std::runtime_error("cannot read " + labels_path);
    if (!std::getline(lf, line) || split_csv_line(line) !=
                                       std::vector<std::string>{"sample_id", "class_id", "source"})
        throw std::runtime_error(labels_path + ": malformed header");
    std::unordered_map<std::string, std::pair<int, LabelSource>> labels;
    while (std::getline(lf, line)) {
        if (line.empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != 3) throw std::runtime_error(labels_path + ": malformed row");
        const int cls = std::stoi(f[1]);
        if (cls < 1 || cls > RootCause::k_num_classes)
            throw std::runtime_error(labels_path + ": unknown class id " + f[1]);
        LabelSource src;
        if (f[2] == "rule")
            src = LabelSource::RULE;
        else if (f[2] == "expert")
            src = LabelSource::EXPERT;
        else
            throw std::runtime_error(labels_path + ": unknown source " + f[2]);
        labels[f[0]] = {cls, src};
    }

    LabeledDataset ds;
    for (auto& s : samples) {
        auto lit = labels.find(s.sample_id);
        if (lit == labels.end())
            throw std::runtime_error(labels_path + ": missing label for sample " + s.sample_id);
        ds.labels.push_back(RootCause::from_id(lit->second.first));
        ds.sources.push_back(lit->second.second);
        ds.samples.push_back(std::move(s));
    }
    if (ds.size() != labels.size())
        throw std::runtime_error("load_dataset: samples/labels length mismatch");
    ds.validate();
    return ds;
}

}  // namespace dkroot
