// SPDX-License-Identifier: Apache-2.0
//
// Copyright (C) 2026 relaydof contributors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

// JSON experiment configs, dispatch to the simulators, CSV/JSON emitters.

#pragma once

#include "relaydof/channel_core.hpp"
#include "relaydof/errors.hpp"
#include "relaydof/klk_cancellation.hpp"
#include "relaydof/klk_simulation.hpp"
#include "relaydof/metrics.hpp"
#include "relaydof/opportunistic_pairing.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace relaydof {

inline constexpr std::string_view kLibraryVersion = "0.1.0";

enum class Scheme { klk, khop_genie, khop_queued, formulas, pairing_stats };

inline std::string_view to_string(Scheme s)
{
    switch (s) {
    case Scheme::klk: return "klk";
    case Scheme::khop_genie: return "khop-genie";
    case Scheme::khop_queued: return "khop-queued";
    case Scheme::formulas: return "formulas";
    case Scheme::pairing_stats: return "pairing-stats";
    }
    return "?";
}

inline Scheme parse_scheme(std::string_view name)
{
    for (Scheme s : {Scheme::klk, Scheme::khop_genie, Scheme::khop_queued, Scheme::formulas, Scheme::pairing_stats})
        if (to_string(s) == name)
            return s;
    throw ValidationError("scheme", "unknown scheme '" + std::string(name) +
                                        "' (expected klk, khop-genie, khop-queued, formulas or pairing-stats)");
}

enum class OutputFormat { csv, json };

inline OutputFormat parse_format(std::string_view name)
{
    if (name == "csv")
        return OutputFormat::csv;
    if (name == "json")
        return OutputFormat::json;
    throw ValidationError("format", "expected csv or json, got '" + std::string(name) + "'");
}

struct ExperimentConfig {
    Scheme scheme = Scheme::klk;
    int K = 2;
    int L = 3;
    /// Scheme index n for K-L-K; for formulas the table spans L..L_max.
    int n = 1;
    int L_max = 0;
    double delta = 1e-3;
    double g_min = 0.1;
    double g_max = 2.0;
    std::vector<double> snr_grid_dB{20.0, 30.0, 40.0, 50.0};
    int trials = 200;
    std::int64_t horizon = 100000;
    std::uint64_t seed = 1;
    /// Stage index m for pairing-stats.
    int stage = 2;
    std::string distribution = "rayleigh";
    std::string metric = "realized";
    std::string normalization = "realized";
    int threads = 0;
    std::string output;

    GatingWindow window() const { return GatingWindow(g_min, g_max); }

    nlohmann::ordered_json to_json() const
    {
        nlohmann::ordered_json j;
        j["scheme"] = std::string(to_string(scheme));
        j["K"] = K;
        j["L"] = L;
        j["n"] = n;
        j["L_max"] = L_max;
        j["delta"] = delta;
        j["g_min"] = g_min;
        j["g_max"] = g_max;
        j["snr_grid_dB"] = snr_grid_dB;
        j["trials"] = trials;
        j["horizon"] = horizon;
        j["seed"] = seed;
        j["stage"] = stage;
        j["distribution"] = distribution;
        j["metric"] = metric;
        j["normalization"] = normalization;
        j["threads"] = threads;
        j["output"] = output;
        return j;
    }

    /// Field-level checks against the preconditions of the dispatched scheme.
    void validate() const
    {
        if (!(g_min > 0.0) || !(g_max > g_min) || !std::isfinite(g_max))
            throw ValidationError("g_min/g_max", "need 0 < g_min < g_max < inf");
        if (K < 2)
            throw ValidationError("K", "must be at least 2");
        if (trials < 1)
            throw ValidationError("trials", "must be positive");
        if (threads < 0)
            throw ValidationError("threads", "must be nonnegative");
        parse_distribution(distribution);
        if (metric != "realized" && metric != "bound")
            throw ValidationError("metric", "expected realized or bound");
        if (normalization != "realized" && normalization != "worst-case")
            throw ValidationError("normalization", "expected realized or worst-case");
        const bool simulates = scheme == Scheme::klk || scheme == Scheme::khop_genie || scheme == Scheme::khop_queued;
        if (simulates) {
            if (snr_grid_dB.empty())
                throw ValidationError("snr_grid_dB", "must not be empty");
            for (double p : snr_grid_dB)
                if (!std::isfinite(p))
                    throw ValidationError("snr_grid_dB", "entries must be finite");
        }
        switch (scheme) {
        case Scheme::klk:
            if (L < K)
                throw ValidationError("L", "L >= K is required");
            if (n < 1)
                throw ValidationError("n", "must be at least 1");
            break;
        case Scheme::khop_genie:
        case Scheme::khop_queued:
            if (K % 2 != 0)
                throw ValidationError("K", "the K-hop scheme requires K is even, got " + std::to_string(K));
            if (!(delta > 0.0) || !std::isfinite(delta))
                throw ValidationError("delta", "must be positive");
            if (scheme == Scheme::khop_queued && K != 2)
                throw ValidationError("K", "queued pairing supports K = 2 only");
            if (scheme == Scheme::khop_queued && horizon < 1)
                throw ValidationError("horizon", "must be positive");
            break;
        case Scheme::formulas:
            if (L < K)
                throw ValidationError("L", "L >= K is required");
            if (L_max != 0 && L_max < L)
                throw ValidationError("L_max", "must be 0 or at least L");
            break;
        case Scheme::pairing_stats:
            if (stage < 1 || stage > K)
                throw ValidationError("stage", "must lie in 1..K");
            if (trials < 1000)
                throw ValidationError("trials", "pairing-stats needs at least 1000 samples");
            break;
        }
    }
};

namespace detail {

template <class T>
void read_field(const nlohmann::json& j, const char* name, T& into)
{
    const auto it = j.find(name);
    if (it == j.end() || it->is_null())
        return;
    try {
        into = it->get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(name, std::string("wrong type: ") + e.what());
    }
}

} // namespace detail

/// Missing fields keep their defaults; unknown fields are rejected.
inline ExperimentConfig config_from_json(const nlohmann::json& j)
{
    if (!j.is_object())
        throw ValidationError("config", "top level must be a JSON object");
    static const char* const known[] = {"scheme", "K",       "L",      "n",     "L_max",        "delta",
                                        "g_min",  "g_max",   "snr_grid_dB", "trials", "horizon", "seed",
                                        "stage",  "distribution", "metric", "normalization", "threads", "output"};
    for (const auto& [key, value] : j.items()) {
        if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key == k; }) ==
            std::end(known))
            throw ValidationError(key, "unknown config field");
    }
    ExperimentConfig c;
    if (j.contains("scheme")) {
        if (!j["scheme"].is_string())
            throw ValidationError("scheme", "must be a string");
        c.scheme = parse_scheme(j["scheme"].get<std::string>());
    }
    detail::read_field(j, "K", c.K);
    detail::read_field(j, "L", c.L);
    detail::read_field(j, "n", c.n);
    detail::read_field(j, "L_max", c.L_max);
    detail::read_field(j, "delta", c.delta);
    detail::read_field(j, "g_min", c.g_min);
    detail::read_field(j, "g_max", c.g_max);
    detail::read_field(j, "snr_grid_dB", c.snr_grid_dB);
    detail::read_field(j, "trials", c.trials);
    detail::read_field(j, "horizon", c.horizon);
    detail::read_field(j, "seed", c.seed);
    detail::read_field(j, "stage", c.stage);
    detail::read_field(j, "distribution", c.distribution);
    detail::read_field(j, "metric", c.metric);
    detail::read_field(j, "normalization", c.normalization);
    detail::read_field(j, "threads", c.threads);
    detail::read_field(j, "output", c.output);
    return c;
}

inline ExperimentConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ValidationError("config", "cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("config", std::string("invalid JSON: ") + e.what());
    }
    return config_from_json(j);
}

struct FormulaRow {
    int K;
    int L;
    Rational af;
    Rational df;
    int cutset;
};

inline std::vector<FormulaRow> formula_table(int users, int relays_from, int relays_to)
{
    std::vector<FormulaRow> rows;
    for (int l = relays_from; l <= relays_to; ++l)
        rows.push_back({users, l, dof_formula_af(users, l), dof_formula_df(users, l), cutset_dof_upper(users)});
    return rows;
}

struct ExperimentResult {
    std::optional<RateReport> report;
    std::vector<FormulaRow> formulas;
    std::optional<SymmetryReport> symmetry;
    std::string summary;
};

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string config_hash(const ExperimentConfig& cfg)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(cfg.to_json().dump())));
    return buf;
}

inline std::string manifest_line(const ExperimentConfig& cfg)
{
    return "relaydof " + std::string(kLibraryVersion) + " scheme=" + std::string(to_string(cfg.scheme)) +
           " seed=" + std::to_string(cfg.seed) + " config_hash=" + config_hash(cfg);
}

namespace detail {

inline std::string fmt_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string report_summary(const RateReport& r)
{
    std::ostringstream out;
    out << r.scheme << " K=" << r.users << " L=" << r.relays << " slope=" << fmt_double(r.slope)
        << " hw=" << fmt_double(r.slope_half_width);
    int failures = 0;
    int trials = 0;
    for (std::size_t p = 0; p < r.trials.size(); ++p) {
        failures = std::max(failures, r.failures[p]);
        trials = std::max(trials, r.trials[p]);
    }
    out << " failures=" << failures << "/" << trials;
    for (const auto& [key, value] : r.diagnostics)
        out << ' ' << key << '=' << fmt_double(value);
    return out.str();
}

} // namespace detail

inline ExperimentResult run_experiment(const ExperimentConfig& cfg)
{
    cfg.validate();
    ExperimentResult result;
    switch (cfg.scheme) {
    case Scheme::klk: {
        KlkSimulationConfig sim;
        sim.plan = choose_extension_plan(cfg.K, cfg.L, cfg.n);
        sim.window = cfg.window();
        sim.distribution = parse_distribution(cfg.distribution);
        sim.snr_db = cfg.snr_grid_dB;
        sim.trials = cfg.trials;
        sim.seed = cfg.seed;
        sim.threads = cfg.threads;
        sim.solver.normalization =
            cfg.normalization == "worst-case" ? PowerNormalization::worst_case : PowerNormalization::realized;
        result.report = simulate_klk_transmission(sim);
        break;
    }
    case Scheme::khop_genie:
    case Scheme::khop_queued: {
        KhopSimulationConfig sim;
        sim.users = cfg.K;
        sim.delta = cfg.delta;
        sim.window = cfg.window();
        sim.snr_db = cfg.snr_grid_dB;
        sim.trials = cfg.trials;
        sim.horizon = cfg.horizon;
        sim.mode = cfg.scheme == Scheme::khop_genie ? KhopMode::genie : KhopMode::queued;
        sim.metric = cfg.metric == "bound" ? KhopRateMetric::bound : KhopRateMetric::realized;
        sim.gain_rule = cfg.normalization == "worst-case" ? HopGainRule::worst_case : HopGainRule::realized;
        sim.seed = cfg.seed;
        sim.threads = cfg.threads;
        result.report = simulate_khop(sim);
        break;
    }
    case Scheme::formulas: {
        result.formulas = formula_table(cfg.K, cfg.L, cfg.L_max == 0 ? cfg.L : cfg.L_max);
        std::ostringstream s;
        s << "formulas K=" << cfg.K << " rows=" << result.formulas.size();
        if (const auto x = af_df_crossover(cfg.K))
            s << " df_beats_af_for_L_in=(" << detail::fmt_double(x->first) << ',' << detail::fmt_double(x->second)
              << ')';
        else
            s << " df_beats_af_for_L_in=none";
        result.summary = s.str();
        return result;
    }
    case Scheme::pairing_stats: {
        result.symmetry = distribution_symmetry_check(static_cast<std::size_t>(cfg.trials), cfg.stage, cfg.K,
                                                      cfg.seed);
        const auto& s = *result.symmetry;
        result.summary = "pairing-stats K=" + std::to_string(cfg.K) + " m=" + std::to_string(cfg.stage) +
                         " samples=" + std::to_string(s.samples) +
                         " max_norm_deviation=" + detail::fmt_double(s.max_norm_deviation) +
                         " max_ks=" + detail::fmt_double(s.max_statistic) +
                         " combined_p=" + detail::fmt_double(s.combined_p_value);
        return result;
    }
    }
    result.summary = detail::report_summary(*result.report);
    return result;
}

// ------------------------------------------------------------------------
// Emitters
// ------------------------------------------------------------------------

inline constexpr const char* kRateColumns[] = {"scheme", "K",        "L",     "P_dB",     "user", "rate",
                                               "trials", "failures", "slope", "slope_hw", "seed"};

/// Writes one record per (SNR point, user). Output is LF-terminated and
/// byte-stable for identical inputs.
inline void write_results(std::ostream& out, const RateReport& report, OutputFormat format)
{
    using detail::fmt_double;
    if (format == OutputFormat::csv) {
        for (std::size_t c = 0; c < std::size(kRateColumns); ++c)
            out << (c ? "," : "") << kRateColumns[c];
        out << '\n';
        for (std::size_t p = 0; p < report.user_rates.size(); ++p)
            for (std::size_t k = 0; k < report.user_rates[p].size(); ++k)
                out << report.scheme << ',' << report.users << ',' << report.relays << ','
                    << fmt_double(report.snr_db[p]) << ',' << k + 1 << ',' << fmt_double(report.user_rates[p][k])
                    << ',' << report.trials[p] << ',' << report.failures[p] << ',' << fmt_double(report.slope)
                    << ',' << fmt_double(report.slope_half_width) << ',' << report.seed << '\n';
        return;
    }
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (std::size_t p = 0; p < report.user_rates.size(); ++p)
        for (std::size_t k = 0; k < report.user_rates[p].size(); ++k) {
            nlohmann::ordered_json row;
            row["scheme"] = report.scheme;
            row["K"] = report.users;
            row["L"] = report.relays;
            row["P_dB"] = report.snr_db[p];
            row["user"] = k + 1;
            row["rate"] = report.user_rates[p][k];
            row["trials"] = report.trials[p];
            row["failures"] = report.failures[p];
            row["slope"] = report.slope;
            row["slope_hw"] = report.slope_half_width;
            row["seed"] = report.seed;
            rows.push_back(std::move(row));
        }
    out << rows.dump(2) << '\n';
}

inline void write_formula_table(std::ostream& out, const std::vector<FormulaRow>& rows, OutputFormat format)
{
    const auto frac = [](const Rational& r) {
        return std::to_string(r.numerator()) + "/" + std::to_string(r.denominator());
    };
    if (format == OutputFormat::csv) {
        out << "K,L,af,af_value,df,df_value,cutset\n";
        for (const auto& r : rows)
            out << r.K << ',' << r.L << ',' << frac(r.af) << ',' << detail::fmt_double(to_double(r.af)) << ','
                << frac(r.df) << ',' << detail::fmt_double(to_double(r.df)) << ',' << r.cutset << '\n';
        return;
    }
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
        nlohmann::ordered_json j;
        j["K"] = r.K;
        j["L"] = r.L;
        j["af"] = frac(r.af);
        j["af_value"] = to_double(r.af);
        j["df"] = frac(r.df);
        j["df_value"] = to_double(r.df);
        j["cutset"] = r.cutset;
        arr.push_back(std::move(j));
    }
    out << arr.dump(2) << '\n';
}

inline void write_symmetry(std::ostream& out, const SymmetryReport& s, OutputFormat format)
{
    if (format == OutputFormat::csv) {
        out << "K,m,samples,marginal,part,statistic,p_value\n";
        for (std::size_t i = 0; i < s.marginals.size(); ++i)
            out << s.users << ',' << s.stage << ',' << s.samples << ',' << i / 2 << ',' << (i % 2 ? "im" : "re")
                << ',' << detail::fmt_double(s.marginals[i].statistic) << ','
                << detail::fmt_double(s.marginals[i].p_value) << '\n';
        return;
    }
    nlohmann::ordered_json j;
    j["K"] = s.users;
    j["m"] = s.stage;
    j["samples"] = s.samples;
    j["max_norm_deviation"] = s.max_norm_deviation;
    j["max_statistic"] = s.max_statistic;
    j["min_p_value"] = s.min_p_value;
    j["combined_p_value"] = s.combined_p_value;
    j["paired_statistic"] = s.paired_statistic;
    nlohmann::ordered_json m = nlohmann::ordered_json::array();
    for (const auto& r : s.marginals)
        m.push_back({{"statistic", r.statistic}, {"p_value", r.p_value}});
    j["marginals"] = std::move(m);
    out << j.dump(2) << '\n';
}

namespace detail {

inline std::ofstream open_output(const std::string& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot open '" + path + "' for writing");
    return out;
}

inline void finish_output(std::ofstream& out, const std::string& path)
{
    out.flush();
    if (!out)
        throw Error("failed writing '" + path + "'");
}

} // namespace detail

inline void emit_results(const RateReport& report, OutputFormat format, const std::string& path)
{
    auto out = detail::open_output(path);
    write_results(out, report, format);
    detail::finish_output(out, path);
}

/// Writes whichever table the result carries.
inline void emit_experiment(const ExperimentResult& result, OutputFormat format, std::ostream& out)
{
    if (result.report)
        write_results(out, *result.report, format);
    else if (result.symmetry)
        write_symmetry(out, *result.symmetry, format);
    else
        write_formula_table(out, result.formulas, format);
}

inline void emit_experiment(const ExperimentResult& result, OutputFormat format, const std::string& path)
{
    auto out = detail::open_output(path);
    emit_experiment(result, format, out);
    detail::finish_output(out, path);
}

/// Appends the manifest line to path + ".manifest".
inline void write_manifest(const ExperimentConfig& cfg, const std::string& path)
{
    std::ofstream out(path + ".manifest", std::ios::binary | std::ios::app);
    if (!out)
        throw Error("cannot open manifest for '" + path + "'");
    out << manifest_line(cfg) << '\n';
}

} // namespace relaydof
