#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>
#include <openssl/evp.h>
#include <yaml-cpp/yaml.h>

#include "reportgap/bootstrap.hpp"
#include "reportgap/calendar.hpp"
#include "reportgap/counterfactual.hpp"
#include "reportgap/did.hpp"
#include "reportgap/error.hpp"
#include "reportgap/eventstudy.hpp"
#include "reportgap/ingest.hpp"
#include "reportgap/synth.hpp"
#include "reportgap/treatments.hpp"

namespace reportgap::cli {

using json = nlohmann::ordered_json;

/// Every accepted key with its default. Null marks an optional value.
inline json default_config() {
    return json::parse(R"({
  "study": {"start": "2018-01-01", "end": "2020-12-31", "closure_date": "2020-03-16"},
  "inputs": {"records": null, "population": null, "school_status": null, "epidemiology": null,
             "quarantine": null, "panel": null},
  "schemas": {
    "records": {"event_date": "event_date", "municipality": "municipality_id", "category": "category",
                "subclass": "subclass", "age": "age", "sex": "sex"},
    "population": {"municipality": "municipality_id", "year": "year", "age": "age", "sex": "sex", "count": "count"},
    "school_status": {"municipality": "municipality_id", "date": "week_start", "openness": "openness",
                      "attendance": "attendance"},
    "epidemiology": {"municipality": "municipality_id", "date": "week_start",
                     "covid_cases_per_1000": "covid_cases_per_1000", "tests_per_1000": "tests_per_1000",
                     "positivity_pct": "positivity_pct"},
    "quarantine": {"municipality": "municipality_id", "date": "week_start", "quarantine": "quarantine"}
  },
  "categories": ["intrafamily_violence", "sexual_abuse", "rape"],
  "smoothing_categories": ["sexual_abuse", "rape"],
  "estimation": {
    "control_sets": ["none", "fe_only", "fe_plus_lockdown_epi"],
    "reopening_modes": ["binary", "continuous"],
    "sample_rule": "full",
    "weighted": true,
    "demean_tolerance": 1e-8,
    "demean_max_iter": 10000,
    "design_control_set": "fe_only",
    "design_reopening_mode": "binary",
    "attendance_quantiles": [0.25, 0.5, 0.75, 0.9],
    "dv_subclasses": true,
    "heterogeneity": {"age_bands": [[0, 5], [6, 11], [12, 17]], "sexes": true, "lockdown_strata": true,
                      "lockdown_early_until": "2020-08-30"}
  },
  "event_study": {
    "closure": {"leads": 60, "lags": 20},
    "reopening": {"leads": 20, "lags": 40},
    "control_set": "fe_only"
  },
  "diagnostics": {"bacon_weighted": true},
  "counterfactual": {
    "categories": ["intrafamily_violence", "sexual_abuse", "rape"],
    "channels": ["time_only", "with_school_opening", "with_school_opening_and_epi"],
    "degrees": [0, 1, 2],
    "window_starts": [2015, 2016, 2017, 2018],
    "validation_from": "2019-01-01",
    "validation_to": "2020-02-29",
    "scale_factors": [1.0, 1.1, 1.2, 1.3, 1.4],
    "weighted_projection": true,
    "weighted_rmspe": false
  },
  "bootstrap": {"replicates": 250, "seed": 20200316, "reselect": false, "alpha": 0.05},
  "synth": {
    "municipalities": 12, "start": "2015-01-05", "end": "2021-06-27", "closure_date": "2020-03-16",
    "first_reopen_date": "2020-08-03", "adoption": "staggered", "reopen_spread_weeks": 30, "cohorts": 3,
    "never_reopen_share": 0.0, "municipal_sd": 3.0, "woy_amplitude": 2.0, "noise_sd": 1.0, "ar1": 0.3,
    "pop_min": 20000, "pop_max": 120000, "seed": 7, "first_day_heaping": 0.15, "invalid_records": 0,
    "outcomes": {
      "intrafamily_violence": {"base_rate": 30.0, "closure_effect": -6.0, "reopening_effect": -3.0, "trend": [1.0]},
      "sexual_abuse": {"base_rate": 14.0, "closure_effect": -4.0, "reopening_effect": -2.0, "trend": [0.6, -0.05]},
      "rape": {"base_rate": 6.0, "closure_effect": -1.5, "reopening_effect": -0.8, "trend": [0.2, 0.02]}
    }
  },
  "runtime": {"output_dir": "out", "threads": 1}
})");
}

struct Override {
    std::string key;
    json file_value;
    json flag_value;
};

struct InputPaths {
    std::optional<std::filesystem::path> records, population, school_status, epidemiology, quarantine, panel;
    [[nodiscard]] bool has_raw() const { return records && population && school_status; }
};

struct RunConfig {
    json effective;
    std::string hash;
    std::vector<Override> overrides;

    DateRange range;
    Date closure_date;
    InputPaths inputs;
    RecordSchema record_schema;
    PopulationSchema population_schema;
    StatusSchema school_schema = school_status_schema();
    StatusSchema epi_schema_ = epi_schema();
    StatusSchema quarantine_schema_ = quarantine_schema();
    std::vector<std::string> categories;
    std::set<Category> smoothing;

    Table1Grid table1;
    DesignOptions design;
    std::vector<double> attendance_quantiles;
    bool dv_subclasses = true;
    std::vector<Group> groups;
    Date lockdown_early_until;

    EventWindow closure_window = EventWindow::closure_default();
    EventWindow reopening_window = EventWindow::reopening_default();
    EventStudyOptions event_options;

    bool bacon_weighted = true;

    std::vector<std::string> cf_categories;
    std::vector<Channel> channels;
    SelectionOptions selection;
    std::vector<double> scale_factors;

    BootstrapOptions bootstrap;
    bool reselect = false;

    DgpSpec synth;
    RawOptions synth_raw;

    std::filesystem::path output_dir;
    unsigned threads = 1;
};

namespace detail {

inline json scalar_to_json(const YAML::Node& n) {
    const std::string& s = n.Scalar();
    if (n.Tag() == "!") return s; // quoted
    if (s == "~" || s == "null" || s == "Null" || s == "NULL" || s.empty()) return nullptr;
    if (s == "true" || s == "True" || s == "TRUE") return true;
    if (s == "false" || s == "False" || s == "FALSE") return false;
    if (auto i = csv::to_int(s)) return *i;
    if (s != "NA" && s != ".") {
        if (auto d = csv::to_double(s)) return *d;
    }
    return s;
}

inline json yaml_to_json(const YAML::Node& n) {
    switch (n.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined: return nullptr;
    case YAML::NodeType::Scalar: return scalar_to_json(n);
    case YAML::NodeType::Sequence: {
        json a = json::array();
        for (const auto& e : n) a.push_back(yaml_to_json(e));
        return a;
    }
    case YAML::NodeType::Map: {
        json o = json::object();
        for (const auto& kv : n) o[kv.first.as<std::string>()] = yaml_to_json(kv.second);
        return o;
    }
    }
    return nullptr;
}

/// Keys whose objects accept arbitrary member names (checked later by content).
inline bool open_object(const std::string& path) { return path == "synth.outcomes"; }

/// Overlays `user` onto `base`, rejecting keys absent from the defaults.
inline void merge(json& base, const json& user, const std::string& path) {
    if (!user.is_object()) throw ConfigError(fmt::format("config section '{}' must be a mapping", path.empty() ? "<root>" : path));
    for (const auto& [k, v] : user.items()) {
        const std::string key = path.empty() ? k : path + "." + k;
        if (!base.contains(k)) {
            if (open_object(path)) {
                base[k] = v;
                continue;
            }
            throw ConfigError(fmt::format("unknown config key '{}'", key));
        }
        if (base[k].is_object() && !open_object(key)) {
            merge(base[k], v, key);
        } else {
            base[k] = v;
        }
    }
}

inline json& at_path(json& root, const std::string& dotted, bool create_missing) {
    json* cur = &root;
    std::size_t pos = 0;
    std::string walked;
    while (true) {
        const auto dot = dotted.find('.', pos);
        const std::string part = dotted.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
        walked += (walked.empty() ? "" : ".") + part;
        if (!cur->is_object() || (!cur->contains(part) && !create_missing))
            throw ConfigError(fmt::format("unknown config key '{}'", walked));
        cur = &(*cur)[part];
        if (dot == std::string::npos) return *cur;
        pos = dot + 1;
    }
}

template <class T>
T get(const json& root, const std::string& dotted) {
    const json* cur = &root;
    std::size_t pos = 0;
    while (true) {
        const auto dot = dotted.find('.', pos);
        const std::string part = dotted.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
        if (!cur->is_object() || !cur->contains(part)) throw ConfigError(fmt::format("missing config key '{}'", dotted));
        cur = &(*cur)[part];
        if (dot == std::string::npos) break;
        pos = dot + 1;
    }
    try {
        if constexpr (std::is_same_v<T, double>) {
            if (!cur->is_number()) throw ConfigError(fmt::format("config key '{}' must be a number", dotted));
        }
        return cur->get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("config key '{}' has the wrong type: {}", dotted, e.what()));
    }
}

inline Date get_date(const json& root, const std::string& key) {
    const auto s = get<std::string>(root, key);
    try {
        return calendar::parse_date(s);
    } catch (const DataError&) {
        throw ConfigError(fmt::format("config key '{}' is not a YYYY-MM-DD date: '{}'", key, s));
    }
}

inline std::string sha256_hex(const std::string& data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 digest failed");
    std::string out;
    for (unsigned i = 0; i < len; ++i) out += fmt::format("{:02x}", md[i]);
    return out;
}

template <class E, class F>
std::vector<E> parse_list(const json& root, const std::string& key, F parse) {
    std::vector<E> out;
    for (const auto& s : get<std::vector<std::string>>(root, key)) out.push_back(parse(s));
    return out;
}

} // namespace detail

/// Parses a YAML scalar given on the command line into a typed value.
inline json parse_flag_value(const std::string& text) {
    try {
        return detail::yaml_to_json(YAML::Load(text));
    } catch (const YAML::Exception& e) {
        throw ConfigError(fmt::format("cannot parse override value '{}': {}", text, e.what()));
    }
}

/// Builds the effective configuration: defaults, then the file, then `key=value`
/// overrides (flags win over file values and are recorded).
inline RunConfig load_config(const std::optional<std::filesystem::path>& file,
                             const std::vector<std::pair<std::string, std::string>>& sets = {}) {
    RunConfig cfg;
    json eff = default_config();
    std::filesystem::path base_dir = std::filesystem::current_path();
    json file_json = json::object();
    if (file) {
        if (!std::filesystem::exists(*file)) throw ConfigError(fmt::format("config file '{}' not found", file->string()));
        try {
            file_json = detail::yaml_to_json(YAML::LoadFile(file->string()));
        } catch (const YAML::Exception& e) {
            throw ConfigError(fmt::format("cannot parse config '{}': {}", file->string(), e.what()));
        }
        if (file_json.is_null()) file_json = json::object();
        detail::merge(eff, file_json, "");
        base_dir = std::filesystem::absolute(*file).parent_path();
    }
    for (const auto& [key, text] : sets) {
        json& slot = detail::at_path(eff, key, key.rfind("synth.outcomes.", 0) == 0);
        const json value = parse_flag_value(text);
        json file_value = nullptr;
        try {
            file_value = detail::at_path(file_json, key, false);
        } catch (const ConfigError&) {
        }
        if (slot.is_object() && !key.starts_with("synth.outcomes"))
            throw ConfigError(fmt::format("override '{}' targets a section, not a value", key));
        slot = value;
        cfg.overrides.push_back({key, file_value, value});
    }

    // runtime settings never change results and stay out of the hash
    json hashed = eff;
    hashed.erase("runtime");
    for (auto& [k, v] : hashed["inputs"].items())
        if (v.is_string()) v = std::filesystem::path(v.get<std::string>()).filename().string();
    cfg.hash = detail::sha256_hex(hashed.dump()).substr(0, 16);
    cfg.effective = eff;

    using detail::get;
    using detail::get_date;
    cfg.range = {get_date(eff, "study.start"), get_date(eff, "study.end")};
    if (cfg.range.end < cfg.range.start) throw ConfigError("study.end precedes study.start");
    cfg.closure_date = get_date(eff, "study.closure_date");
    if (!cfg.range.contains(cfg.closure_date)) throw ConfigError("study.closure_date lies outside the study range");

    auto path_of = [&](const std::string& key) -> std::optional<std::filesystem::path> {
        const json& v = eff["inputs"][key];
        if (v.is_null()) return std::nullopt;
        if (!v.is_string()) throw ConfigError(fmt::format("config key 'inputs.{}' must be a path", key));
        std::filesystem::path p(v.get<std::string>());
        if (p.is_relative()) p = base_dir / p;
        if (!std::filesystem::exists(p))
            throw ConfigError(fmt::format("config key 'inputs.{}': file '{}' not found", key, p.string()));
        return p;
    };
    cfg.inputs = {path_of("records"),      path_of("population"), path_of("school_status"),
                  path_of("epidemiology"), path_of("quarantine"), path_of("panel")};

    const auto s = [&](const std::string& k) { return get<std::string>(eff, "schemas." + k); };
    cfg.record_schema = {s("records.event_date"), s("records.municipality"), s("records.category"),
                         s("records.subclass"),   s("records.age"),          s("records.sex")};
    cfg.population_schema = {s("population.municipality"), s("population.year"), s("population.age"),
                             s("population.sex"), s("population.count")};
    cfg.school_schema.municipality = s("school_status.municipality");
    cfg.school_schema.date = s("school_status.date");
    cfg.school_schema.fields = {{"openness", s("school_status.openness")}, {col::attendance, s("school_status.attendance")}};
    cfg.epi_schema_.municipality = s("epidemiology.municipality");
    cfg.epi_schema_.date = s("epidemiology.date");
    for (const char* c : {col::covid_cases, col::tests, col::positivity})
        cfg.epi_schema_.fields[c] = s(std::string("epidemiology.") + c);
    cfg.quarantine_schema_.municipality = s("quarantine.municipality");
    cfg.quarantine_schema_.date = s("quarantine.date");
    cfg.quarantine_schema_.fields = {{col::quarantine, s("quarantine.quarantine")}};

    cfg.categories = get<std::vector<std::string>>(eff, "categories");
    for (const auto& c : cfg.categories)
        if (!parse_category(c)) throw ConfigError(fmt::format("unknown category '{}' in 'categories'", c));
    for (const auto& c : get<std::vector<std::string>>(eff, "smoothing_categories")) {
        const auto cat = parse_category(c);
        if (!cat) throw ConfigError(fmt::format("unknown category '{}' in 'smoothing_categories'", c));
        cfg.smoothing.insert(*cat);
    }

    auto& t1 = cfg.table1;
    t1.outcomes = cfg.categories;
    t1.control_sets = detail::parse_list<ControlSet>(eff, "estimation.control_sets", parse_control_set);
    t1.modes = detail::parse_list<ReopeningMode>(eff, "estimation.reopening_modes", parse_reopening_mode);
    t1.sample_rule = parse_sample_rule(get<std::string>(eff, "estimation.sample_rule"));
    t1.weighted = get<bool>(eff, "estimation.weighted");
    t1.demean_tolerance = get<double>(eff, "estimation.demean_tolerance");
    t1.demean_max_iter = get<int>(eff, "estimation.demean_max_iter");
    if (!(t1.demean_tolerance > 0.0)) throw ConfigError("estimation.demean_tolerance must be positive");
    if (t1.demean_max_iter < 1) throw ConfigError("estimation.demean_max_iter must be positive");
    cfg.design.control_set = parse_control_set(get<std::string>(eff, "estimation.design_control_set"));
    cfg.design.reopening_mode = parse_reopening_mode(get<std::string>(eff, "estimation.design_reopening_mode"));
    cfg.design.sample_rule = t1.sample_rule;
    cfg.design.weighted = t1.weighted;
    cfg.design.demean_tolerance = t1.demean_tolerance;
    cfg.design.demean_max_iter = t1.demean_max_iter;
    cfg.attendance_quantiles = get<std::vector<double>>(eff, "estimation.attendance_quantiles");
    for (double p : cfg.attendance_quantiles)
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("estimation.attendance_quantiles must lie in [0,1]");
    cfg.dv_subclasses = get<bool>(eff, "estimation.dv_subclasses");
    for (const auto& band : get<std::vector<std::vector<int>>>(eff, "estimation.heterogeneity.age_bands")) {
        if (band.size() != 2) throw ConfigError("estimation.heterogeneity.age_bands entries must be [lo, hi]");
        cfg.groups.push_back({fmt::format("age_{}_{}", band[0], band[1]), AgeBand{band[0], band[1]}});
    }
    if (get<bool>(eff, "estimation.heterogeneity.sexes")) {
        cfg.groups.push_back({"female", SexGroup{Sex::female}});
        cfg.groups.push_back({"male", SexGroup{Sex::male}});
    }
    if (get<bool>(eff, "estimation.heterogeneity.lockdown_strata")) {
        for (auto s2 : {LockdownStratum::early, LockdownStratum::late, LockdownStratum::never})
            cfg.groups.push_back({to_string(s2), s2});
    }
    cfg.lockdown_early_until = get_date(eff, "estimation.heterogeneity.lockdown_early_until");

    cfg.closure_window = {EventKind::closure, get<int>(eff, "event_study.closure.leads"),
                          get<int>(eff, "event_study.closure.lags")};
    cfg.reopening_window = {EventKind::reopening, get<int>(eff, "event_study.reopening.leads"),
                            get<int>(eff, "event_study.reopening.lags")};
    cfg.closure_window.validate();
    cfg.reopening_window.validate();
    cfg.event_options.control_set = parse_control_set(get<std::string>(eff, "event_study.control_set"));
    cfg.event_options.weighted = t1.weighted;
    cfg.event_options.demean_tolerance = t1.demean_tolerance;
    cfg.event_options.demean_max_iter = t1.demean_max_iter;

    cfg.bacon_weighted = get<bool>(eff, "diagnostics.bacon_weighted");

    cfg.cf_categories = get<std::vector<std::string>>(eff, "counterfactual.categories");
    for (const auto& c : cfg.cf_categories)
        if (std::find(cfg.categories.begin(), cfg.categories.end(), c) == cfg.categories.end())
            throw ConfigError(fmt::format("counterfactual category '{}' is not in 'categories'", c));
    cfg.channels = detail::parse_list<Channel>(eff, "counterfactual.channels", parse_channel);
    if (cfg.channels.empty() || cfg.channels.front() != Channel::time_only)
        throw ConfigError("counterfactual.channels must start with time_only");
    cfg.selection.degrees = get<std::vector<int>>(eff, "counterfactual.degrees");
    for (int d : cfg.selection.degrees)
        if (d < 0 || d > 2) throw ConfigError(fmt::format("counterfactual degree {} not in {{0,1,2}}", d));
    cfg.selection.window_starts = get<std::vector<int>>(eff, "counterfactual.window_starts");
    cfg.selection.validation = {get_date(eff, "counterfactual.validation_from"),
                                get_date(eff, "counterfactual.validation_to")};
    cfg.selection.weighted_rmspe = get<bool>(eff, "counterfactual.weighted_rmspe");
    cfg.selection.projection.weighted = get<bool>(eff, "counterfactual.weighted_projection");
    cfg.scale_factors = get<std::vector<double>>(eff, "counterfactual.scale_factors");
    for (double f : cfg.scale_factors)
        if (!(f >= 1.0)) throw ConfigError("counterfactual.scale_factors must be >= 1");

    const auto B = get<long long>(eff, "bootstrap.replicates");
    if (B < 2) throw ConfigError("bootstrap.replicates must be at least 2");
    cfg.bootstrap.replicates = static_cast<std::size_t>(B);
    cfg.bootstrap.seed = get<std::uint64_t>(eff, "bootstrap.seed");
    cfg.bootstrap.alpha = get<double>(eff, "bootstrap.alpha");
    cfg.reselect = get<bool>(eff, "bootstrap.reselect");

    auto& sy = cfg.synth;
    sy.municipalities = get<int>(eff, "synth.municipalities");
    sy.start = get_date(eff, "synth.start");
    sy.end = get_date(eff, "synth.end");
    sy.closure_date = get_date(eff, "synth.closure_date");
    sy.first_reopen_date = get_date(eff, "synth.first_reopen_date");
    sy.adoption = parse_adoption(get<std::string>(eff, "synth.adoption"));
    sy.reopen_spread_weeks = get<int>(eff, "synth.reopen_spread_weeks");
    sy.cohorts = get<int>(eff, "synth.cohorts");
    sy.never_reopen_share = get<double>(eff, "synth.never_reopen_share");
    sy.municipal_sd = get<double>(eff, "synth.municipal_sd");
    sy.woy_amplitude = get<double>(eff, "synth.woy_amplitude");
    sy.noise_sd = get<double>(eff, "synth.noise_sd");
    sy.ar1 = get<double>(eff, "synth.ar1");
    sy.pop_min = get<int>(eff, "synth.pop_min");
    sy.pop_max = get<int>(eff, "synth.pop_max");
    sy.seed = get<std::uint64_t>(eff, "synth.seed");
    sy.integer_counts = true;
    cfg.synth_raw.first_day_heaping = get<double>(eff, "synth.first_day_heaping");
    cfg.synth_raw.invalid_records = get<int>(eff, "synth.invalid_records");
    if (cfg.synth_raw.first_day_heaping < 0.0 || cfg.synth_raw.first_day_heaping > 1.0)
        throw ConfigError("synth.first_day_heaping must lie in [0,1]");
    if (cfg.synth_raw.invalid_records < 0) throw ConfigError("synth.invalid_records must be nonnegative");
    for (double v : {sy.municipal_sd, sy.woy_amplitude, sy.noise_sd})
        if (v < 0.0) throw ConfigError("synth scales must be nonnegative");
    sy.outcomes.clear();
    for (const auto& [name, o] : eff["synth"]["outcomes"].items()) {
        if (!parse_category(name)) throw ConfigError(fmt::format("unknown synth outcome '{}'", name));
        OutcomeDgp d;
        d.category = name;
        for (const auto& [k, v] : o.items()) {
            const std::string key = "synth.outcomes." + name + "." + k;
            if (k == "base_rate") d.base_rate = get<double>(eff, key);
            else if (k == "closure_effect") d.closure_effect = get<double>(eff, key);
            else if (k == "reopening_effect") d.reopening_effect = get<double>(eff, key);
            else if (k == "attendance_effect") d.attendance_effect = get<double>(eff, key);
            else if (k == "cohort_step") d.cohort_step = get<double>(eff, key);
            else if (k == "trend") d.trend = get<std::vector<double>>(eff, key);
            else throw ConfigError(fmt::format("unknown config key '{}'", key));
        }
        sy.outcomes.push_back(d);
    }
    sy.validate();

    cfg.output_dir = get<std::string>(eff, "runtime.output_dir");
    const int threads = get<int>(eff, "runtime.threads");
    if (threads < 1) throw ConfigError("runtime.threads must be at least 1");
    cfg.threads = static_cast<unsigned>(threads);
    cfg.bootstrap.threads = cfg.threads;
    return cfg;
}

} // namespace reportgap::cli
