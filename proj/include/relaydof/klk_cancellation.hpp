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

// Amplify-and-forward interference cancellation over symbol extensions for
// two-hop networks with K sources, L relays and K destinations.
//
// Relay j forwards Gamma_j * y_j over the N-slot block, so source i reaches
// destination k through G_ki = sum_j H2_kj Gamma_j H1_ji. The first N1
// symbols of every source are spread over the block along fixed DFT
// directions and their interference is removed by choosing the Gamma_j in
// the null space of a linear system.

#pragma once

#include "relaydof/channel_core.hpp"
#include "relaydof/metrics.hpp"

#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace relaydof {

enum class KlkRegime {
    full_cancellation, ///< L > K(K-1): one symbol per user, no extension
    boundary,          ///< L = K(K-1): n of n+1 slots cancelled
    alignment,         ///< K <= L < K(K-1): cancellation plus alignment
};

inline std::string_view to_string(KlkRegime r)
{
    switch (r) {
    case KlkRegime::full_cancellation:
        return "full-cancellation";
    case KlkRegime::boundary:
        return "boundary";
    case KlkRegime::alignment:
        return "alignment";
    }
    return "unknown";
}

/// Symbol-extension parameters of one scheme instance.
struct ExtensionPlan {
    int users = 0;
    int relays = 0;
    int n = 1;
    int alignment_maps = 0;  ///< T = (K-1)(K-2)-1 in the alignment regime, else 0
    int cancelled = 0;       ///< N1, symbols per user whose interference is cancelled
    int first_user_beams = 0; ///< N2
    int other_user_beams = 0; ///< N3
    int extension = 1;       ///< N, block length in channel uses
    KlkRegime regime = KlkRegime::full_cancellation;

    int symbols_for(int user) const { return cancelled + (user == 0 ? first_user_beams : other_user_beams); }
    bool needs_beams() const { return first_user_beams + other_user_beams > 0; }
};

/// min{floor((L N^2 - 1) / (K (K-1) N)), N}
inline int max_cancellable_symbols(int users, int relays, int extension)
{
    if (users < 2 || relays < users || extension < 1)
        throw std::invalid_argument("max_cancellable_symbols requires K >= 2, L >= K, N >= 1");
    const std::int64_t k = users;
    const std::int64_t l = relays;
    const std::int64_t n = extension;
    const std::int64_t bound = (l * n * n - 1) / (k * (k - 1) * n);
    return static_cast<int>(std::min<std::int64_t>(bound, n));
}

namespace detail {

inline std::int64_t checked_pow(std::int64_t base, int exponent)
{
    std::int64_t out = 1;
    for (int e = 0; e < exponent; ++e) {
        if (out > std::numeric_limits<int>::max() / base)
            throw std::overflow_error("extension plan too large");
        out *= base;
    }
    return out;
}

} // namespace detail

inline ExtensionPlan choose_extension_plan(int users, int relays, int n)
{
    if (users < 2 || relays < users || n < 1)
        throw std::invalid_argument("choose_extension_plan requires L >= K >= 2 and n >= 1");
    ExtensionPlan plan;
    plan.users = users;
    plan.relays = relays;
    plan.n = n;
    const std::int64_t pairs = static_cast<std::int64_t>(users) * (users - 1);
    if (relays > pairs) {
        plan.regime = KlkRegime::full_cancellation;
        plan.cancelled = 1;
        plan.extension = 1;
        return plan;
    }
    if (relays == pairs) {
        plan.regime = KlkRegime::boundary;
        plan.cancelled = n;
        plan.extension = n + 1;
        return plan;
    }
    plan.regime = KlkRegime::alignment;
    plan.alignment_maps = (users - 1) * (users - 2) - 1;
    const std::int64_t n2 = detail::checked_pow(n + 1, plan.alignment_maps);
    const std::int64_t n3 = detail::checked_pow(n, plan.alignment_maps);
    const std::int64_t num = (n2 + n3) * relays - 1;
    const std::int64_t den = pairs - relays;
    plan.first_user_beams = static_cast<int>(n2);
    plan.other_user_beams = static_cast<int>(n3);
    plan.cancelled = static_cast<int>(num / den);
    plan.extension = static_cast<int>((num + den - 1) / den + n2 + n3);
    return plan;
}

struct PerUserDof {
    Rational first_user;       ///< (N1 + N2) / N
    Rational other_users;      ///< (N1 + N3) / N
    Rational first_user_bound; ///< closed-form lower bound on the first user's DoF
    Rational other_users_bound;

    Rational sum(int users) const { return first_user + other_users * Rational(users - 1); }
};

inline PerUserDof per_user_dof_bounds(const ExtensionPlan& plan)
{
    if (plan.regime != KlkRegime::alignment)
        throw std::invalid_argument("per_user_dof_bounds applies to the alignment regime only");
    const std::int64_t pairs = static_cast<std::int64_t>(plan.users) * (plan.users - 1);
    const std::int64_t l = plan.relays;
    const std::int64_t n1 = plan.cancelled;
    const std::int64_t n2 = plan.first_user_beams;
    const std::int64_t n3 = plan.other_user_beams;
    const std::int64_t n = plan.extension;
    const std::int64_t den = pairs * (n2 + n3) + (pairs - l - 1);
    const std::int64_t offset = pairs + l + 1;
    return {Rational(n1 + n2, n), Rational(n1 + n3, n), Rational(pairs * n2 + l * n3 - offset, den),
            Rational(l * n2 + pairs * n3 - offset, den)};
}

// ------------------------------------------------------------------------
// Extended channels
// ------------------------------------------------------------------------

/// N-symbol-extended (diagonal) channels of a K-L-K network.
struct ExtendedChannels {
    int users = 0;
    int relays = 0;
    int extension = 0;
    std::vector<ComplexMatrix> first_hop;  ///< index relay * K + source
    std::vector<ComplexMatrix> second_hop; ///< index destination * L + relay

    const ComplexMatrix& hop1(int relay, int source) const
    {
        return first_hop[static_cast<std::size_t>(relay * users + source)];
    }
    const ComplexMatrix& hop2(int destination, int relay) const
    {
        return second_hop[static_cast<std::size_t>(destination * relays + relay)];
    }
};

/// Builds extended channels from N per-slot draws; hop1_slots[t] is L x K and
/// hop2_slots[t] is K x L.
inline ExtendedChannels extend_slots(std::span<const ComplexMatrix> hop1_slots,
                                     std::span<const ComplexMatrix> hop2_slots)
{
    if (hop1_slots.empty() || hop1_slots.size() != hop2_slots.size())
        throw std::invalid_argument("extend_slots needs matching nonempty slot lists");
    ExtendedChannels ch;
    ch.relays = static_cast<int>(hop1_slots.front().rows());
    ch.users = static_cast<int>(hop1_slots.front().cols());
    ch.extension = static_cast<int>(hop1_slots.size());
    for (std::size_t t = 0; t < hop1_slots.size(); ++t) {
        if (hop1_slots[t].rows() != ch.relays || hop1_slots[t].cols() != ch.users ||
            hop2_slots[t].rows() != ch.users || hop2_slots[t].cols() != ch.relays)
            throw std::invalid_argument("extend_slots: inconsistent slot dimensions");
    }
    std::vector<Complex> samples(hop1_slots.size());
    for (int j = 0; j < ch.relays; ++j)
        for (int i = 0; i < ch.users; ++i) {
            for (std::size_t t = 0; t < samples.size(); ++t)
                samples[t] = hop1_slots[t](j, i);
            ch.first_hop.push_back(extend_channel(samples));
        }
    for (int k = 0; k < ch.users; ++k)
        for (int j = 0; j < ch.relays; ++j) {
            for (std::size_t t = 0; t < samples.size(); ++t)
                samples[t] = hop2_slots[t](k, j);
            ch.second_hop.push_back(extend_channel(samples));
        }
    return ch;
}

/// Directions used for the cancelled symbols: the first N1 columns of the
/// N-point unitary DFT. They do not depend on channel state.
inline ComplexMatrix cancelled_symbol_directions(int extension, int cancelled)
{
    if (cancelled < 0 || cancelled > extension)
        throw std::invalid_argument("cancelled symbol count out of range");
    return unitary_dft(extension).leftCols(cancelled);
}

/// Orthonormal complement of cancelled_symbol_directions().
inline ComplexMatrix beam_subspace(int extension, int cancelled)
{
    return unitary_dft(extension).rightCols(extension - cancelled);
}

// ------------------------------------------------------------------------
// Cancellation system
// ------------------------------------------------------------------------

/// Column index of Gamma_j(r, c) among the L N^2 unknowns.
inline Eigen::Index gain_unknown_index(int relay, int row, int col, int extension)
{
    return static_cast<Eigen::Index>(relay) * extension * extension + static_cast<Eigen::Index>(row) * extension + col;
}

/// Rows: one per (destination k, source i != k, cancelled symbol s, slot r),
/// in that nesting order. Columns: entries of all Gamma_j. A null vector makes
/// sum_j H2_kj Gamma_j H1_ji v_s vanish for every i != k and s < N1.
inline ComplexMatrix build_cancellation_system(const ExtendedChannels& ch, int cancelled)
{
    const int k_users = ch.users;
    const int relays = ch.relays;
    const int n = ch.extension;
    if (cancelled < 1 || cancelled > n)
        throw std::invalid_argument("build_cancellation_system requires 1 <= N1 <= N");
    if (ch.first_hop.size() != static_cast<std::size_t>(relays * k_users) ||
        ch.second_hop.size() != static_cast<std::size_t>(relays * k_users))
        throw std::invalid_argument("build_cancellation_system: inconsistent channel set");
    for (const auto* set : {&ch.first_hop, &ch.second_hop})
        for (const auto& h : *set)
            if (h.rows() != n || h.cols() != n)
                throw std::invalid_argument("build_cancellation_system: extended channels must be N x N");

    const ComplexMatrix dirs = cancelled_symbol_directions(n, cancelled);
    const Eigen::Index rows = static_cast<Eigen::Index>(k_users) * (k_users - 1) * cancelled * n;
    const Eigen::Index cols = static_cast<Eigen::Index>(relays) * n * n;
    ComplexMatrix system = ComplexMatrix::Zero(rows, cols);

    Eigen::Index row = 0;
    for (int k = 0; k < k_users; ++k)
        for (int i = 0; i < k_users; ++i) {
            if (i == k)
                continue;
            for (int s = 0; s < cancelled; ++s)
                for (int r = 0; r < n; ++r, ++row)
                    for (int j = 0; j < relays; ++j) {
                        const Complex a = ch.hop2(k, j)(r, r);
                        const auto& b = ch.hop1(j, i);
                        for (int c = 0; c < n; ++c)
                            system(row, gain_unknown_index(j, r, c, n)) = a * b(c, c) * dirs(c, s);
                    }
        }
    return system;
}

/// Relay gain matrices; relay j applies scale * gains[j].
struct RelayGainSet {
    std::vector<ComplexMatrix> gains;
    double scale = 1.0;
};

/// End-to-end extended channels G_ki, stored at index k * K + i.
struct EffectiveChannelSet {
    int users = 0;
    int extension = 0;
    std::vector<ComplexMatrix> channels;

    const ComplexMatrix& operator()(int destination, int source) const
    {
        return channels[static_cast<std::size_t>(destination * users + source)];
    }

    double max_norm() const
    {
        double out = 0.0;
        for (const auto& g : channels)
            out = std::max(out, g.norm());
        return out;
    }
};

/// G_ki = sum_j H2_kj (scale Gamma_j) H1_ji for every (k, i).
inline EffectiveChannelSet effective_extended_channel(const ExtendedChannels& ch, const RelayGainSet& gains)
{
    if (gains.gains.size() != static_cast<std::size_t>(ch.relays))
        throw std::invalid_argument("effective_extended_channel: one gain matrix per relay required");
    EffectiveChannelSet out;
    out.users = ch.users;
    out.extension = ch.extension;
    out.channels.reserve(static_cast<std::size_t>(ch.users * ch.users));
    for (int k = 0; k < ch.users; ++k)
        for (int i = 0; i < ch.users; ++i) {
            ComplexMatrix g = ComplexMatrix::Zero(ch.extension, ch.extension);
            for (int j = 0; j < ch.relays; ++j)
                g.noalias() += ch.hop2(k, j).diagonal().asDiagonal() * gains.gains[static_cast<std::size_t>(j)] *
                               ch.hop1(j, i).diagonal().asDiagonal();
            out.channels.push_back(gains.scale * g);
        }
    return out;
}

// ------------------------------------------------------------------------
// Gain solver
// ------------------------------------------------------------------------

enum class PowerNormalization {
    /// Busiest relay's average block power equals N P for the realized
    /// channels and the sources' actual precoders.
    realized,
    /// Bound from the gating window: |h| <= g_max on every link.
    worst_case,
};

/// Scale s such that relays transmitting s * Gamma_j y_j meet the power
/// budget. precoders[i] is source i's N x d_i transmit matrix with unit-power
/// symbols of power P each; an empty list means white full-power inputs.
inline double relay_power_scale(const ExtendedChannels& ch, std::span<const ComplexMatrix> gains,
                                std::span<const ComplexMatrix> precoders, const PowerBudget& budget,
                                PowerNormalization mode, const GatingWindow& window)
{
    const double p = budget.power();
    const double n = ch.extension;
    double worst = 0.0;
    for (int j = 0; j < ch.relays; ++j) {
        const ComplexMatrix& gamma = gains[static_cast<std::size_t>(j)];
        double power = 0.0;
        if (mode == PowerNormalization::worst_case) {
            const double op = gamma.size() ? Eigen::JacobiSVD<ComplexMatrix>(gamma).singularValues()(0) : 0.0;
            power = n * op * op * (ch.users * window.g_max() * window.g_max() * p + 1.0);
        } else {
            power = gamma.squaredNorm();
            for (int i = 0; i < ch.users; ++i) {
                const ComplexMatrix through = gamma * ch.hop1(j, i).diagonal().asDiagonal();
                power += p * (precoders.empty() ? through.squaredNorm()
                                                : (through * precoders[static_cast<std::size_t>(i)]).squaredNorm());
            }
        }
        worst = std::max(worst, power);
    }
    if (!(worst > 0.0))
        throw NoNontrivialSolution("all relay gains are zero");
    return std::sqrt(n * p / worst);
}

struct GainSolverOptions {
    /// Floor on every desired cancelled column, relative to max_ki |G_ki|_F.
    double desired_floor = 1e-3;
    int max_retries = 32;
    std::uint64_t seed = 0;
    double null_tolerance = 1e-10;
    PowerNormalization normalization = PowerNormalization::realized;
};

/// Picks relay gains from the null space of `system`. Random unit
/// combinations of the null basis are drawn until every desired cancelled
/// column clears the floor; the result carries its power-normalizing scale.
inline RelayGainSet solve_relay_gains(const ComplexMatrix& system, const ExtensionPlan& plan,
                                      const ExtendedChannels& ch, const GatingWindow& window,
                                      const PowerBudget& budget, const GainSolverOptions& opts = {})
{
    const int n = ch.extension;
    if (plan.extension != n || plan.users != ch.users || plan.relays != ch.relays)
        throw std::invalid_argument("solve_relay_gains: plan does not match channel dimensions");
    if (system.cols() != static_cast<Eigen::Index>(ch.relays) * n * n)
        throw std::invalid_argument("solve_relay_gains: system has the wrong number of unknowns");

    const ComplexMatrix basis = nullspace_basis(system, opts.null_tolerance);
    if (basis.cols() == 0)
        throw NoNontrivialSolution("cancellation system has no nontrivial null vector; N1 = " +
                                   std::to_string(plan.cancelled) + " exceeds the cancellable bound " +
                                   std::to_string(max_cancellable_symbols(ch.users, ch.relays, n)));

    const ComplexMatrix dirs = cancelled_symbol_directions(n, plan.cancelled);
    Rng rng = make_rng(opts.seed, 0x9a1u);
    RelayGainSet out;
    for (int attempt = 0; attempt < std::max(1, opts.max_retries); ++attempt) {
        ComplexVector coeffs(basis.cols());
        for (Eigen::Index c = 0; c < coeffs.size(); ++c)
            coeffs(c) = draw_rayleigh(rng);
        const ComplexVector x = basis * coeffs.normalized();

        out.gains.assign(static_cast<std::size_t>(ch.relays), ComplexMatrix(n, n));
        for (int j = 0; j < ch.relays; ++j)
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < n; ++c)
                    out.gains[static_cast<std::size_t>(j)](r, c) = x(gain_unknown_index(j, r, c, n));
        out.scale = 1.0;

        const EffectiveChannelSet eff = effective_extended_channel(ch, out);
        const double floor = opts.desired_floor * eff.max_norm();
        double weakest = std::numeric_limits<double>::infinity();
        for (int k = 0; k < ch.users; ++k)
            weakest = std::min(weakest, (eff(k, k) * dirs).colwise().norm().minCoeff());
        if (weakest >= floor && weakest > 0.0) {
            out.scale = relay_power_scale(ch, out.gains, {}, budget, opts.normalization, window);
            return out;
        }
    }
    throw DesiredGainDegenerate("no null-space combination kept the desired columns above the floor");
}

} // namespace relaydof
