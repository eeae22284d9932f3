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

// End-to-end Monte Carlo of the K-L-K amplify-and-forward scheme.

#pragma once

#include "relaydof/channel_core.hpp"
#include "relaydof/detail/parallel.hpp"
#include "relaydof/interference_alignment.hpp"
#include "relaydof/klk_cancellation.hpp"
#include "relaydof/metrics.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

namespace relaydof {

using BeamProvider = std::function<BeamformerSet(const EffectiveChannelSet&, const ExtensionPlan&, std::uint64_t)>;

struct KlkSimulationConfig {
    ExtensionPlan plan;
    GatingWindow window{0.1, 2.0};
    ChannelDistribution distribution = ChannelDistribution::rayleigh;
    std::vector<double> snr_db{20.0, 30.0, 40.0, 50.0};
    int trials = 500;
    std::uint64_t seed = 1;
    /// Drop all noise; decoded symbols must then equal the transmitted ones.
    bool noiseless = false;
    GainSolverOptions solver;
    /// Beam construction for plans with beamformed symbols; defaults to
    /// align_beams() with up to 10 generator retries.
    BeamProvider beams;
    int max_gate_attempts = 100000;
    int threads = 0;
    int bootstrap = 200;
};

namespace detail {

struct KlkTrial {
    bool ok = false;
    bool aligned = true;
    std::vector<std::vector<double>> rates; // [p][k]
    double max_noiseless_error = 0.0;
    double squared_error = 0.0;
    double symbols = 0.0;
};

inline ComplexMatrix hstack(const std::vector<ComplexMatrix>& parts, Eigen::Index rows)
{
    Eigen::Index cols = 0;
    for (const auto& p : parts)
        cols += p.cols();
    ComplexMatrix out(rows, cols);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        out.middleCols(at, p.cols()) = p;
        at += p.cols();
    }
    return out;
}

inline ComplexVector draw_vector(Rng& rng, Eigen::Index n)
{
    ComplexVector v(n);
    for (Eigen::Index i = 0; i < n; ++i)
        v(i) = draw_rayleigh(rng);
    return v;
}

inline KlkTrial run_klk_trial(const KlkSimulationConfig& cfg, int trial)
{
    const ExtensionPlan& plan = cfg.plan;
    const int k_users = plan.users;
    const int relays = plan.relays;
    const int n = plan.extension;
    KlkTrial out;
    Rng rng = make_rng(cfg.seed, static_cast<std::uint64_t>(trial) + 1);

    std::vector<ComplexMatrix> hop1(static_cast<std::size_t>(n));
    std::vector<ComplexMatrix> hop2(static_cast<std::size_t>(n));
    for (int t = 0; t < n; ++t) {
        for (int attempt = 0;; ++attempt) {
            if (attempt >= cfg.max_gate_attempts)
                return out;
            hop1[t] = draw_matrix(rng, relays, k_users, cfg.distribution, cfg.window);
            hop2[t] = draw_matrix(rng, k_users, relays, cfg.distribution, cfg.window);
            const ComplexMatrix slot[] = {hop1[t], hop2[t]};
            if (gate_slot(slot, cfg.window))
                break;
        }
    }
    const ExtendedChannels ch = extend_slots(hop1, hop2);

    try {
        const ComplexMatrix system = build_cancellation_system(ch, plan.cancelled);
        GainSolverOptions opts = cfg.solver;
        opts.seed = cfg.seed ^ (0x51ed2701ull * (static_cast<std::uint64_t>(trial) + 1));
        RelayGainSet gains = solve_relay_gains(system, plan, ch, cfg.window, PowerBudget(1.0), opts);
        gains.scale = 1.0;
        const EffectiveChannelSet unit = effective_extended_channel(ch, gains);

        BeamformerSet beams;
        if (plan.needs_beams()) {
            const std::uint64_t beam_seed = opts.seed ^ 0xbea3ull;
            if (cfg.beams) {
                beams = cfg.beams(unit, plan, beam_seed);
                out.aligned = verify_alignment(unit, beams, plan).pass();
            } else {
                auto aligned = align_beams(unit, plan, beam_seed);
                beams = std::move(aligned.beams);
                out.aligned = aligned.report.pass();
            }
        }
        const BeamformerSet* beam_ptr = plan.needs_beams() ? &beams : nullptr;
        std::vector<ComplexMatrix> precoders;
        for (int i = 0; i < k_users; ++i)
            precoders.push_back(source_precoder(plan, beam_ptr, i));

        // Relay-noise colouring seen by destination k, before the gain scale.
        std::vector<ComplexMatrix> relay_noise_cov;
        for (int k = 0; k < k_users; ++k) {
            ComplexMatrix cov = ComplexMatrix::Zero(n, n);
            for (int j = 0; j < relays; ++j) {
                const ComplexMatrix m = ch.hop2(k, j).diagonal().asDiagonal() * gains.gains[static_cast<std::size_t>(j)];
                cov.noalias() += m * m.adjoint();
            }
            relay_noise_cov.push_back(std::move(cov));
        }

        out.rates.assign(cfg.snr_db.size(), std::vector<double>(static_cast<std::size_t>(k_users), 0.0));
        for (std::size_t p = 0; p < cfg.snr_db.size(); ++p) {
            const PowerBudget budget = PowerBudget::from_db(cfg.snr_db[p]);
            const double power = budget.power();
            const double scale =
                relay_power_scale(ch, gains.gains, precoders, budget, cfg.solver.normalization, cfg.window);

            std::vector<ComplexVector> symbols;
            for (int i = 0; i < k_users; ++i)
                symbols.push_back(draw_vector(rng, precoders[static_cast<std::size_t>(i)].cols()));
            std::vector<ComplexVector> relay_noise;
            for (int j = 0; j < relays; ++j)
                relay_noise.push_back(draw_vector(rng, n));

            for (int k = 0; k < k_users; ++k) {
                const ComplexMatrix desired = scale * unit(k, k) * precoders[static_cast<std::size_t>(k)];
                std::vector<ComplexMatrix> parts;
                for (int i = 0; i < k_users; ++i)
                    if (i != k)
                        parts.push_back(scale * unit(k, i) * precoders[static_cast<std::size_t>(i)]);
                const ComplexMatrix interference = hstack(parts, n);
                const ComplexMatrix filter = zero_forcing_filter(desired, interference);
                const ComplexMatrix noise_cov =
                    ComplexMatrix::Identity(n, n) + scale * scale * relay_noise_cov[static_cast<std::size_t>(k)];

                double rate = 0.0;
                for (Eigen::Index s = 0; s < desired.cols(); ++s) {
                    const auto w = filter.row(s);
                    const double noise = (w * noise_cov * w.adjoint())(0, 0).real();
                    double leak = 0.0;
                    for (Eigen::Index c = 0; c < desired.cols(); ++c)
                        if (c != s)
                            leak += std::norm(w.dot(desired.col(c).conjugate()));
                    for (Eigen::Index c = 0; c < interference.cols(); ++c)
                        leak += std::norm((w * interference.col(c))(0, 0));
                    const double gain = std::norm((w * desired.col(s))(0, 0));
                    rate += std::log2(1.0 + power * gain / (noise + power * leak));
                }
                out.rates[p][static_cast<std::size_t>(k)] = rate / n;

                // Received block and decode.
                ComplexVector y = ComplexVector::Zero(n);
                for (int i = 0; i < k_users; ++i)
                    y += std::sqrt(power) * scale * unit(k, i) * precoders[static_cast<std::size_t>(i)] *
                         symbols[static_cast<std::size_t>(i)];
                if (!cfg.noiseless) {
                    for (int j = 0; j < relays; ++j)
                        y += scale * ch.hop2(k, j).diagonal().asDiagonal() * gains.gains[static_cast<std::size_t>(j)] *
                             relay_noise[static_cast<std::size_t>(j)];
                    y += draw_vector(rng, n);
                }
                const ComplexVector estimate = filter * y / std::sqrt(power);
                const ComplexVector err = estimate - symbols[static_cast<std::size_t>(k)];
                if (cfg.noiseless)
                    out.max_noiseless_error = std::max(out.max_noiseless_error, err.cwiseAbs().maxCoeff());
                out.squared_error += err.squaredNorm();
                out.symbols += static_cast<double>(err.size());
            }
        }
        out.ok = true;
    } catch (const Error&) {
        out.ok = false;
    }
    return out;
}

} // namespace detail

/// Monte Carlo sweep over cfg.snr_db. Each trial draws gated channels, solves
/// relay gains, builds beams when the plan needs them, forms the received
/// block including forwarded relay noise, and decodes by zero forcing. Rates
/// are log2(1 + SINR) per symbol divided by N, averaged over trials that
/// succeeded; failed trials are counted, not fatal.
inline RateReport simulate_klk_transmission(const KlkSimulationConfig& cfg)
{
    if (cfg.trials < 1)
        throw std::invalid_argument("simulate_klk_transmission needs at least one trial");
    if (cfg.snr_db.empty())
        throw std::invalid_argument("simulate_klk_transmission needs a nonempty SNR grid");
    if (cfg.plan.cancelled > max_cancellable_symbols(cfg.plan.users, cfg.plan.relays, cfg.plan.extension))
        throw std::invalid_argument("plan cancels more symbols than the relays can null");

    std::vector<detail::KlkTrial> results(static_cast<std::size_t>(cfg.trials));
    detail::parallel_for(
        cfg.trials, [&](int t) { results[static_cast<std::size_t>(t)] = detail::run_klk_trial(cfg, t); },
        cfg.threads);

    const auto k_users = static_cast<std::size_t>(cfg.plan.users);
    RateReport report;
    report.scheme = "klk";
    report.users = cfg.plan.users;
    report.relays = cfg.plan.relays;
    report.seed = cfg.seed;
    report.snr_db = cfg.snr_db;
    report.user_rates.assign(cfg.snr_db.size(), std::vector<double>(k_users, 0.0));
    report.sum_rate_samples.assign(cfg.snr_db.size(), {});

    int ok = 0;
    int aligned = 0;
    double max_err = 0.0;
    double sq = 0.0;
    double count = 0.0;
    for (const auto& r : results) {
        if (!r.ok)
            continue;
        ++ok;
        aligned += r.aligned ? 1 : 0;
        max_err = std::max(max_err, r.max_noiseless_error);
        sq += r.squared_error;
        count += r.symbols;
        for (std::size_t p = 0; p < cfg.snr_db.size(); ++p) {
            double total = 0.0;
            for (std::size_t k = 0; k < k_users; ++k) {
                report.user_rates[p][k] += r.rates[p][k];
                total += r.rates[p][k];
            }
            report.sum_rate_samples[p].push_back(total);
        }
    }
    for (auto& row : report.user_rates)
        for (auto& v : row)
            v = ok > 0 ? v / ok : 0.0;
    report.trials.assign(cfg.snr_db.size(), cfg.trials);
    report.failures.assign(cfg.snr_db.size(), cfg.trials - ok);
    report.diagnostics["alignment_pass_rate"] = ok > 0 ? static_cast<double>(aligned) / ok : 0.0;
    report.diagnostics["decode_mse"] = count > 0.0 ? sq / count : 0.0;
    if (cfg.noiseless)
        report.diagnostics["max_noiseless_error"] = max_err;
    report.diagnostics["extension"] = cfg.plan.extension;

    if (ok > 0 && cfg.snr_db.size() >= 3) {
        const auto [lo, hi] = std::minmax_element(cfg.snr_db.begin(), cfg.snr_db.end());
        if (*hi - *lo >= 20.0)
            attach_slope(report, cfg.bootstrap);
    }
    return report;
}

} // namespace relaydof
