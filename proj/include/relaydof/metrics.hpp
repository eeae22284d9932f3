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

// Closed-form DoF expressions, rate reports and slope estimation.

#pragma once

#include "relaydof/channel_core.hpp"

#include <boost/rational.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace relaydof {

using Rational = boost::rational<std::int64_t>;

inline double to_double(const Rational& r)
{
    return static_cast<double>(r.numerator()) / static_cast<double>(r.denominator());
}

/// Achievable sum DoF of the amplify-and-forward scheme on a K-L-K network:
/// min{K, K/2 + L/(2(K-1))}.
inline Rational dof_formula_af(std::int64_t users, std::int64_t relays)
{
    if (users < 2 || relays < users)
        throw std::invalid_argument("dof_formula_af requires L >= K >= 2");
    const Rational aligned = Rational(users, 2) + Rational(relays, 2 * (users - 1));
    return std::min(Rational(users), aligned);
}

/// Decode-and-forward baseline KL/(K+L-1).
inline Rational dof_formula_df(std::int64_t users, std::int64_t relays)
{
    if (users < 2 || relays < 1)
        throw std::invalid_argument("dof_formula_df requires K >= 2 and L >= 1");
    return Rational(users * relays, users + relays - 1);
}

/// Open interval of relay counts L where decode-and-forward beats the AF
/// scheme; empty for K <= 5.
inline std::optional<std::pair<double, double>> af_df_crossover(int users)
{
    if (users < 2)
        throw std::invalid_argument("af_df_crossover requires K >= 2");
    const double k = users;
    const double disc = k * (k - 6.0) + 1.0;
    if (users <= 5 || disc < 0.0)
        return std::nullopt;
    const double root = std::sqrt(disc);
    return std::make_pair(0.5 * (k - 1.0) * (k - 1.0 - root), 0.5 * (k - 1.0) * (k - 1.0 + root));
}

/// Cut-set bound on the sum DoF.
inline int cutset_dof_upper(int users)
{
    if (users < 1)
        throw std::invalid_argument("cutset_dof_upper requires K >= 1");
    return users;
}

// ------------------------------------------------------------------------
// Rate reports
// ------------------------------------------------------------------------

/// Simulated rates over an SNR grid. Rates are bits per channel use.
struct RateReport {
    std::string scheme;
    int users = 0;
    int relays = 0;
    std::uint64_t seed = 0;
    std::vector<double> snr_db;
    /// user_rates[p][k]: mean rate of user k at snr_db[p] over successful trials.
    std::vector<std::vector<double>> user_rates;
    /// sum_rate_samples[p][t]: per-trial sum rate, used for the bootstrap.
    std::vector<std::vector<double>> sum_rate_samples;
    std::vector<int> trials;
    std::vector<int> failures;
    double slope = std::numeric_limits<double>::quiet_NaN();
    double slope_half_width = std::numeric_limits<double>::quiet_NaN();
    std::map<std::string, double> diagnostics;

    double sum_rate(std::size_t p) const
    {
        return std::accumulate(user_rates[p].begin(), user_rates[p].end(), 0.0);
    }
};

struct SlopeEstimate {
    double slope;
    double half_width;
};

inline double log2_power(double snr_db) { return snr_db / 10.0 * std::log2(10.0); }

/// Least-squares slope of ys against xs.
inline double least_squares_slope(std::span<const double> xs, std::span<const double> ys)
{
    if (xs.size() != ys.size() || xs.size() < 2)
        throw std::invalid_argument("least_squares_slope needs two or more paired points");
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    if (sxx == 0.0)
        throw std::invalid_argument("least_squares_slope needs distinct abscissae");
    return sxy / sxx;
}

/// Slope of the sum rate versus log2(P) and a 95% bootstrap half-width that
/// resamples trials (the same resampled trial set is used at every SNR).
inline SlopeEstimate estimate_dof_slope(const RateReport& report, int resamples = 200)
{
    const auto& grid = report.snr_db;
    if (grid.size() < 3)
        throw std::invalid_argument("estimate_dof_slope needs at least 3 SNR points");
    const auto [lo, hi] = std::minmax_element(grid.begin(), grid.end());
    if (*hi - *lo < 20.0)
        throw std::invalid_argument("estimate_dof_slope needs the SNR grid to span at least 20 dB");
    if (report.user_rates.size() != grid.size())
        throw std::invalid_argument("rate report is missing rates for some SNR points");

    std::vector<double> xs(grid.size());
    std::vector<double> ys(grid.size());
    for (std::size_t p = 0; p < grid.size(); ++p) {
        xs[p] = log2_power(grid[p]);
        ys[p] = report.sum_rate(p);
    }
    const double slope = least_squares_slope(xs, ys);

    const auto& samples = report.sum_rate_samples;
    const bool have_samples = samples.size() == grid.size() && !samples.empty() && !samples.front().empty() &&
                              std::all_of(samples.begin(), samples.end(),
                                          [&](const auto& s) { return s.size() == samples.front().size(); });
    if (!have_samples || resamples <= 0)
        return {slope, 0.0};

    const std::size_t n = samples.front().size();
    Rng rng = make_rng(report.seed, 0xb007u);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<double> slopes;
    slopes.reserve(static_cast<std::size_t>(resamples));
    std::vector<std::size_t> idx(n);
    for (int b = 0; b < resamples; ++b) {
        for (auto& i : idx)
            i = pick(rng);
        for (std::size_t p = 0; p < grid.size(); ++p) {
            double acc = 0.0;
            for (auto i : idx)
                acc += samples[p][i];
            ys[p] = acc / static_cast<double>(n);
        }
        slopes.push_back(least_squares_slope(xs, ys));
    }
    std::sort(slopes.begin(), slopes.end());
    const auto at = [&](double q) {
        const auto i = static_cast<std::size_t>(std::lround(q * static_cast<double>(slopes.size() - 1)));
        return slopes[i];
    };
    return {slope, 0.5 * (at(0.975) - at(0.025))};
}

/// Fills report.slope / report.slope_half_width in place.
inline void attach_slope(RateReport& report, int resamples = 200)
{
    const auto est = estimate_dof_slope(report, resamples);
    report.slope = est.slope;
    report.slope_half_width = est.half_width;
}

// ------------------------------------------------------------------------
// Two-sample Kolmogorov-Smirnov test
// ------------------------------------------------------------------------

struct KsResult {
    double statistic;
    double p_value;
};

/// Survival function of the Kolmogorov distribution, Q(lambda).
inline double kolmogorov_survival(double lambda)
{
    if (lambda < 1e-3)
        return 1.0;
    double sum = 0.0;
    double sign = 1.0;
    for (int j = 1; j <= 100; ++j) {
        const double term = sign * std::exp(-2.0 * j * j * lambda * lambda);
        sum += term;
        if (std::abs(term) < 1e-16)
            break;
        sign = -sign;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

/// Asymptotic two-sample KS test. Inputs are taken by value and sorted.
inline KsResult two_sample_ks(std::vector<double> a, std::vector<double> b)
{
    if (a.empty() || b.empty())
        throw std::invalid_argument("two_sample_ks needs two nonempty samples");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0;
    std::size_t j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x)
            ++i;
        while (j < b.size() && b[j] <= x)
            ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    const double ne = std::sqrt(na * nb / (na + nb));
    return {d, kolmogorov_survival((ne + 0.12 + 0.11 / ne) * d)};
}

} // namespace relaydof
