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

// Transmit beamforming for the symbols that relays cannot cancel, built by
// the ordered-product alignment construction over the effective channels,
// plus a rank-based decodability verifier and a zero-forcing receiver.

#pragma once

#include "relaydof/channel_core.hpp"
#include "relaydof/klk_cancellation.hpp"

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace relaydof {

/// beams[0] is N x N2 for the first user, beams[i] is N x N3 for the others.
/// Every column has unit norm.
struct BeamformerSet {
    std::vector<ComplexMatrix> beams;
};

/// Full transmit matrix of source i: cancelled directions followed by beams.
inline ComplexMatrix source_precoder(const ExtensionPlan& plan, const BeamformerSet* beams, int source)
{
    const ComplexMatrix dirs = cancelled_symbol_directions(plan.extension, plan.cancelled);
    if (beams == nullptr || beams->beams.empty())
        return dirs;
    const ComplexMatrix& b = beams->beams[static_cast<std::size_t>(source)];
    ComplexMatrix out(plan.extension, dirs.cols() + b.cols());
    out << dirs, b;
    return out;
}

namespace detail {

inline constexpr double kRankTolerance = 1e-9;

/// Haar-distributed unitary from a QR of a complex Gaussian matrix.
inline ComplexMatrix random_unitary(Eigen::Index n, Rng& rng)
{
    const ComplexMatrix g = draw_matrix(rng, n, n);
    Eigen::HouseholderQR<ComplexMatrix> qr(g);
    ComplexMatrix q = qr.householderQ() * ComplexMatrix::Identity(n, n);
    const ComplexMatrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index i = 0; i < n; ++i) {
        const Complex d = r(i, i);
        if (std::abs(d) > 0.0)
            q.col(i) *= d / std::abs(d);
    }
    return q;
}

/// Columns M_T^{a_T} ... M_1^{a_1} w for every a in {0..max_exponent}^T,
/// enumerated with the last exponent varying fastest.
inline ComplexMatrix exponent_products(const std::vector<ComplexMatrix>& maps, const ComplexVector& w,
                                       int max_exponent)
{
    const std::size_t t = maps.size();
    std::int64_t count = 1;
    for (std::size_t i = 0; i < t; ++i)
        count *= max_exponent + 1;
    ComplexMatrix out(w.size(), count);
    std::vector<int> alpha(t, 0);
    for (std::int64_t col = 0; col < count; ++col) {
        std::int64_t rest = col;
        for (std::size_t p = t; p-- > 0;) {
            alpha[p] = static_cast<int>(rest % (max_exponent + 1));
            rest /= max_exponent + 1;
        }
        ComplexVector v = w;
        for (std::size_t p = 0; p < t; ++p)
            for (int e = 0; e < alpha[p]; ++e)
                v = maps[p] * v;
        out.col(col) = v;
    }
    return out;
}

inline void normalize_columns(ComplexMatrix& m)
{
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double nrm = m.col(c).norm();
        if (!(nrm > 0.0) || !std::isfinite(nrm))
            throw SingularEffectiveChannel("beamforming vector collapsed to zero");
        m.col(c) /= nrm;
    }
}

} // namespace detail

/// Ordered-product alignment beams for the alignment regime.
///
/// Beams live in the complement of the cancelled directions (coordinates
/// w.r.t. beam_subspace()). With A_ki = G_ki Q, the maps
///   R_i   = A_0i^+ A_01                      (i >= 1, R_1 = I)
///   T_ji  = A_j0^+ A_ji R_i                  (j != i, both >= 1)
/// are normalized by S = T_21^{-1}; the remaining (K-1)(K-2)-1 maps M = T S,
/// in lexicographic (j, i) order, generate
///   first user: { prod M^a w : a in {0..n}^T }
///   user i >= 1: R_i S { prod M^a w : a in {0..n-1}^T }.
/// Receiver j >= 1 then sees T_ji S B = M B (or B itself for (2,1)) inside
/// the first user's span; the receiver-0 span A_0i R_i S B is aligned up to
/// the projection onto range(A_0i).
inline BeamformerSet cj_beamformers(const EffectiveChannelSet& eff, const ExtensionPlan& plan, std::uint64_t seed)
{
    if (plan.regime != KlkRegime::alignment || !plan.needs_beams())
        throw std::invalid_argument("cj_beamformers requires a plan from the alignment regime");
    if (eff.users != plan.users || eff.extension != plan.extension)
        throw std::invalid_argument("cj_beamformers: effective channels do not match the plan");

    const int k_users = plan.users;
    const int reduced = plan.extension - plan.cancelled;
    const ComplexMatrix q = beam_subspace(plan.extension, plan.cancelled);

    std::vector<ComplexMatrix> restricted(static_cast<std::size_t>(k_users * k_users));
    std::vector<std::optional<ComplexMatrix>> pinv(restricted.size());
    for (int k = 0; k < k_users; ++k)
        for (int i = 0; i < k_users; ++i)
            restricted[static_cast<std::size_t>(k * k_users + i)] = eff(k, i) * q;
    const auto a = [&](int k, int i) -> const ComplexMatrix& {
        return restricted[static_cast<std::size_t>(k * k_users + i)];
    };
    const auto a_pinv = [&](int k, int i) -> const ComplexMatrix& {
        auto& slot = pinv[static_cast<std::size_t>(k * k_users + i)];
        if (!slot) {
            const ComplexMatrix& m = a(k, i);
            if (numerical_rank(m, detail::kRankTolerance) < reduced)
                throw SingularEffectiveChannel("effective channel is rank deficient on the beam subspace");
            slot = pseudo_inverse(m);
        }
        return *slot;
    };

    std::vector<ComplexMatrix> ratio(static_cast<std::size_t>(k_users));
    ratio[1] = ComplexMatrix::Identity(reduced, reduced);
    for (int i = 2; i < k_users; ++i)
        ratio[static_cast<std::size_t>(i)] = a_pinv(0, i) * a(0, 1);

    const auto t_map = [&](int j, int i) -> ComplexMatrix { return a_pinv(j, 0) * a(j, i) * ratio[i]; };
    const ComplexMatrix pivot = t_map(2, 1);
    Eigen::JacobiSVD<ComplexMatrix> pivot_svd(pivot);
    const RealVector& sv = pivot_svd.singularValues();
    if (!(sv(sv.size() - 1) > 1e-12 * sv(0)))
        throw SingularEffectiveChannel("normalizing ratio map is not invertible");
    const ComplexMatrix s = pivot.partialPivLu().inverse();

    std::vector<ComplexMatrix> maps;
    for (int j = 1; j < k_users; ++j)
        for (int i = 1; i < k_users; ++i)
            if (i != j && !(j == 2 && i == 1))
                maps.push_back(t_map(j, i) * s);

    Rng rng = make_rng(seed, 0xa119u);
    const ComplexVector w = detail::random_unitary(reduced, rng) * ComplexVector::Ones(reduced) /
                            std::sqrt(static_cast<double>(reduced));

    BeamformerSet out;
    ComplexMatrix first = q * detail::exponent_products(maps, w, plan.n);
    detail::normalize_columns(first);
    out.beams.push_back(std::move(first));

    const ComplexMatrix base = s * detail::exponent_products(maps, w, plan.n - 1);
    for (int i = 1; i < k_users; ++i) {
        ComplexMatrix bi = q * (ratio[static_cast<std::size_t>(i)] * base);
        detail::normalize_columns(bi);
        out.beams.push_back(std::move(bi));
    }
    return out;
}

// ------------------------------------------------------------------------
// Verification and decoding
// ------------------------------------------------------------------------

struct DestinationRank {
    int desired_count = 0;
    Eigen::Index desired_rank = 0;
    Eigen::Index interference_rank = 0;
    Eigen::Index stacked_rank = 0;
    bool pass = false;
};

struct AlignmentReport {
    std::vector<DestinationRank> destinations;

    bool pass() const
    {
        return std::all_of(destinations.begin(), destinations.end(), [](const auto& d) { return d.pass; });
    }
};

/// Received desired and interference columns at destination k.
inline std::pair<ComplexMatrix, ComplexMatrix> destination_bases(const EffectiveChannelSet& eff,
                                                                 const ExtensionPlan& plan,
                                                                 const BeamformerSet* beams, int destination)
{
    const ComplexMatrix desired = eff(destination, destination) * source_precoder(plan, beams, destination);
    Eigen::Index cols = 0;
    std::vector<ComplexMatrix> parts;
    for (int i = 0; i < plan.users; ++i) {
        if (i == destination)
            continue;
        parts.push_back(eff(destination, i) * source_precoder(plan, beams, i));
        cols += parts.back().cols();
    }
    ComplexMatrix interference(plan.extension, cols);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        interference.middleCols(at, p.cols()) = p;
        at += p.cols();
    }
    return {desired, interference};
}

/// Rank test of alignment and decodability at every destination. Cancelled
/// columns are included in the interference set; they vanish numerically.
inline AlignmentReport verify_alignment(const EffectiveChannelSet& eff, const BeamformerSet& beams,
                                        const ExtensionPlan& plan)
{
    if (eff.users != plan.users || eff.extension != plan.extension)
        throw std::invalid_argument("verify_alignment: effective channels do not match the plan");
    const bool with_beams = plan.needs_beams();
    if (with_beams && beams.beams.size() != static_cast<std::size_t>(plan.users))
        throw std::invalid_argument("verify_alignment: one beam matrix per user required");

    AlignmentReport report;
    for (int k = 0; k < plan.users; ++k) {
        const auto [desired, interference] = destination_bases(eff, plan, with_beams ? &beams : nullptr, k);
        ComplexMatrix stacked(plan.extension, desired.cols() + interference.cols());
        stacked << desired, interference;
        const double ref = stacked.size() ? Eigen::JacobiSVD<ComplexMatrix>(stacked).singularValues()(0) : 0.0;

        DestinationRank d;
        d.desired_count = static_cast<int>(desired.cols());
        d.desired_rank = numerical_rank(desired, detail::kRankTolerance, ref);
        d.interference_rank = numerical_rank(interference, detail::kRankTolerance, ref);
        d.stacked_rank = numerical_rank(stacked, detail::kRankTolerance, ref);
        d.pass = d.desired_rank == d.desired_count && d.interference_rank <= plan.extension - d.desired_count &&
                 d.stacked_rank == d.desired_count + d.interference_rank;
        report.destinations.push_back(d);
    }
    return report;
}

/// Rows w_s with w_s^H d_s = 1, w_s^H d_c = 0 (c != s) and w_s orthogonal to
/// the interference span.
inline ComplexMatrix zero_forcing_filter(const ComplexMatrix& desired, const ComplexMatrix& interference)
{
    if (desired.cols() == 0)
        throw std::invalid_argument("zero_forcing_filter needs at least one desired column");
    if (interference.cols() > 0 && interference.rows() != desired.rows())
        throw std::invalid_argument("zero_forcing_filter: basis row counts differ");
    const double d_ref = Eigen::JacobiSVD<ComplexMatrix>(desired).singularValues()(0);
    double ref = d_ref;
    if (interference.cols() > 0)
        ref = std::max(ref, Eigen::JacobiSVD<ComplexMatrix>(interference).singularValues()(0));
    const ComplexMatrix span = range_basis(interference, detail::kRankTolerance, ref);
    const ComplexMatrix projected = desired - span * (span.adjoint() * desired);
    if (numerical_rank(projected, detail::kRankTolerance, d_ref) < desired.cols())
        throw RankDeficient("desired columns are not separable from the interference span");
    return pseudo_inverse(projected);
}

inline ComplexVector zero_forcing_decode(const ComplexVector& received, const ComplexMatrix& desired,
                                         const ComplexMatrix& interference)
{
    if (received.size() != desired.rows())
        throw std::invalid_argument("zero_forcing_decode: received vector has the wrong length");
    return zero_forcing_filter(desired, interference) * received;
}

struct AlignedBeams {
    BeamformerSet beams;
    AlignmentReport report;
    int attempts = 0;
};

/// cj_beamformers with a fresh generator vector per attempt, keeping the
/// first set that verifies (or the last one tried).
inline AlignedBeams align_beams(const EffectiveChannelSet& eff, const ExtensionPlan& plan, std::uint64_t seed,
                                int max_attempts = 10)
{
    AlignedBeams out;
    for (int attempt = 0; attempt < std::max(1, max_attempts); ++attempt) {
        out.beams = cj_beamformers(eff, plan, seed + static_cast<std::uint64_t>(attempt) * 0x9e3779b97f4a7c15ull);
        out.report = verify_alignment(eff, out.beams, plan);
        out.attempts = attempt + 1;
        if (out.report.pass())
            break;
    }
    return out;
}

} // namespace relaydof
