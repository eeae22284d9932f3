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

// Complex linear algebra, random channel generation, symbol extension and
// slot gating shared by the two-hop and the K-hop schemes.

#pragma once

#include "relaydof/errors.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace relaydof {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;
using Rng = std::mt19937_64;

/// Generator for stream `stream` of master seed `seed`. Distinct streams are
/// statistically independent, so trial i can be simulated on any worker.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      0x5eedu};
    return Rng(seq);
}

// ------------------------------------------------------------------------
// Domain types
// ------------------------------------------------------------------------

/// Magnitude window used to decide whether a time slot is used.
class GatingWindow {
public:
    GatingWindow(double g_min, double g_max) : g_min_(g_min), g_max_(g_max)
    {
        if (!(g_min > 0.0) || !(g_max > g_min) || !std::isfinite(g_max))
            throw std::invalid_argument("gating window requires 0 < g_min < g_max < inf");
    }

    double g_min() const noexcept { return g_min_; }
    double g_max() const noexcept { return g_max_; }

    bool admits(double magnitude) const noexcept { return magnitude >= g_min_ && magnitude <= g_max_; }

private:
    double g_min_;
    double g_max_;
};

/// Per-node transmit power constraint P (linear scale).
class PowerBudget {
public:
    explicit PowerBudget(double power) : power_(power)
    {
        if (!(power > 0.0) || !std::isfinite(power))
            throw std::invalid_argument("power budget must be positive and finite");
    }

    double power() const noexcept { return power_; }

    static PowerBudget from_db(double db) { return PowerBudget(std::pow(10.0, db / 10.0)); }

private:
    double power_;
};

/// Layered relay network: layer_sizes[m] nodes in layer m (0-based), hops()
/// channel matrices between consecutive layers.
class NetworkTopology {
public:
    /// Two-hop network with K sources, L relays and K destinations.
    static NetworkTopology klk(int users, int relays)
    {
        if (users < 2 || relays < users)
            throw std::invalid_argument("K-L-K topology requires K >= 2 and L >= K");
        return NetworkTopology({users, relays, users});
    }

    /// K-hop network with K nodes in each of the K+1 layers; K must be even.
    static NetworkTopology khop(int users)
    {
        if (users < 2 || users % 2 != 0)
            throw std::invalid_argument("K-hop topology requires an even K >= 2");
        return NetworkTopology(std::vector<int>(static_cast<std::size_t>(users) + 1, users));
    }

    int users() const noexcept { return layers_.front(); }
    int hops() const noexcept { return static_cast<int>(layers_.size()) - 1; }
    const std::vector<int>& layer_sizes() const noexcept { return layers_; }

private:
    explicit NetworkTopology(std::vector<int> layers) : layers_(std::move(layers)) {}

    std::vector<int> layers_;
};

enum class ChannelDistribution { rayleigh, uniform_annulus };

inline ChannelDistribution parse_distribution(std::string_view name)
{
    if (name == "rayleigh")
        return ChannelDistribution::rayleigh;
    if (name == "uniform-annulus")
        return ChannelDistribution::uniform_annulus;
    throw ValidationError("distribution", "unsupported distribution '" + std::string(name) + "'");
}

inline std::string_view to_string(ChannelDistribution d)
{
    return d == ChannelDistribution::rayleigh ? "rayleigh" : "uniform-annulus";
}

/// Factors of H = U diag(sigma) V^H with sigma strictly descending and the
/// largest-magnitude entry of every column of V real and positive.
struct CanonicalSvd {
    ComplexMatrix U;
    RealVector sigma;
    ComplexMatrix V;

    ComplexMatrix reconstruct() const { return U * sigma.asDiagonal() * V.adjoint(); }
};

// ------------------------------------------------------------------------
// Random channels
// ------------------------------------------------------------------------

/// One CN(0,1) sample.
inline Complex draw_rayleigh(Rng& rng)
{
    std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
    const double re = normal(rng);
    const double im = normal(rng);
    return {re, im};
}

inline Complex draw_entry(Rng& rng, ChannelDistribution dist, const GatingWindow& annulus)
{
    if (dist == ChannelDistribution::rayleigh)
        return draw_rayleigh(rng);
    std::uniform_real_distribution<double> magnitude(annulus.g_min(), annulus.g_max());
    std::uniform_real_distribution<double> phase(-std::numbers::pi, std::numbers::pi);
    const double r = magnitude(rng);
    const double theta = phase(rng);
    return std::polar(r, theta);
}

inline ComplexMatrix draw_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols,
                                 ChannelDistribution dist = ChannelDistribution::rayleigh,
                                 const GatingWindow& annulus = GatingWindow(0.1, 10.0))
{
    ComplexMatrix h(rows, cols);
    // Column-major fill order is part of the reproducibility contract.
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r)
            h(r, c) = draw_entry(rng, dist, annulus);
    return h;
}

/// Per-hop channel matrices H_1..H_M; H_m is K_{m+1} x K_m.
inline std::vector<ComplexMatrix> draw_channels(const NetworkTopology& topology, ChannelDistribution dist,
                                                Rng& rng, const GatingWindow& annulus = GatingWindow(0.1, 10.0))
{
    std::vector<ComplexMatrix> hops;
    const auto& sizes = topology.layer_sizes();
    hops.reserve(sizes.size() - 1);
    for (std::size_t m = 0; m + 1 < sizes.size(); ++m)
        hops.push_back(draw_matrix(rng, sizes[m + 1], sizes[m], dist, annulus));
    return hops;
}

inline std::vector<ComplexMatrix> draw_channels(const NetworkTopology& topology, ChannelDistribution dist,
                                                std::uint64_t seed,
                                                const GatingWindow& annulus = GatingWindow(0.1, 10.0))
{
    Rng rng = make_rng(seed);
    return draw_channels(topology, dist, rng, annulus);
}

/// True iff every entry magnitude of every matrix lies inside the window.
inline bool gate_slot(std::span<const ComplexMatrix> channels, const GatingWindow& window)
{
    for (const auto& h : channels)
        for (Eigen::Index c = 0; c < h.cols(); ++c)
            for (Eigen::Index r = 0; r < h.rows(); ++r)
                if (!window.admits(std::abs(h(r, c))))
                    return false;
    return true;
}

/// diag(h[0], ..., h[N-1]): the N-symbol extension of a scalar channel.
inline ComplexMatrix extend_channel(std::span<const Complex> samples)
{
    if (samples.empty())
        throw std::invalid_argument("extend_channel needs at least one sample");
    const auto n = static_cast<Eigen::Index>(samples.size());
    ComplexMatrix out = ComplexMatrix::Zero(n, n);
    for (Eigen::Index t = 0; t < n; ++t)
        out(t, t) = samples[static_cast<std::size_t>(t)];
    return out;
}

// ------------------------------------------------------------------------
// Factorizations
// ------------------------------------------------------------------------

/// How svd_canonical treats coinciding singular values.
enum class SvdTies {
    reject,        ///< any tie raises DegenerateSingularValues
    allow_uniform, ///< accept the all-equal case (scaled unitary input)
};

inline constexpr double kSingularValueTieTolerance = 1e-10;

inline CanonicalSvd svd_canonical(const ComplexMatrix& h, SvdTies ties = SvdTies::reject,
                                  double tie_tolerance = kSingularValueTieTolerance)
{
    if (h.rows() != h.cols() || h.rows() == 0)
        throw std::invalid_argument("svd_canonical requires a nonempty square matrix");

    Eigen::JacobiSVD<ComplexMatrix> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    CanonicalSvd out{svd.matrixU(), svd.singularValues(), svd.matrixV()};

    const Eigen::Index k = h.rows();
    const double scale = out.sigma(0);
    const double tol = tie_tolerance * std::max(scale, std::numeric_limits<double>::min());
    bool any_tie = false;
    bool all_tie = true;
    for (Eigen::Index i = 0; i + 1 < k; ++i) {
        const bool tie = out.sigma(i) - out.sigma(i + 1) <= tol;
        any_tie = any_tie || tie;
        all_tie = all_tie && tie;
    }
    if (any_tie && !(ties == SvdTies::allow_uniform && all_tie))
        throw DegenerateSingularValues("singular values coincide within tolerance");

    for (Eigen::Index j = 0; j < k; ++j) {
        Eigen::Index pivot = 0;
        out.V.col(j).cwiseAbs().maxCoeff(&pivot);
        const Complex entry = out.V(pivot, j);
        if (std::abs(entry) == 0.0)
            continue;
        const Complex unphase = std::conj(entry) / std::abs(entry);
        out.V.col(j) *= unphase;
        out.U.col(j) *= unphase;
        out.V(pivot, j) = std::abs(out.V(pivot, j));
    }
    return out;
}

/// Orthonormal basis (as columns) of {v : |Av| <= tol * |A|_F * |v|}. An
/// empty result has zero columns.
inline ComplexMatrix nullspace_basis(const ComplexMatrix& a, double tol)
{
    if (a.size() == 0)
        throw std::invalid_argument("nullspace_basis requires a nonempty matrix");
    const Eigen::Index n = a.cols();
    const double norm = a.norm();
    if (norm == 0.0)
        return ComplexMatrix::Identity(n, n);

    Eigen::JacobiSVD<ComplexMatrix> svd(a, Eigen::ComputeFullV);
    const RealVector& s = svd.singularValues();
    Eigen::Index rank = 0;
    while (rank < s.size() && s(rank) > tol * norm)
        ++rank;
    return svd.matrixV().rightCols(n - rank);
}

/// Numerical rank with a threshold relative to the largest singular value
/// (or to `reference` when given, for comparing against a larger scale).
inline Eigen::Index numerical_rank(const ComplexMatrix& a, double rel_tol, double reference = 0.0)
{
    if (a.size() == 0)
        return 0;
    Eigen::JacobiSVD<ComplexMatrix> svd(a);
    const RealVector& s = svd.singularValues();
    const double scale = std::max(reference, s(0));
    Eigen::Index rank = 0;
    while (rank < s.size() && s(rank) > rel_tol * scale)
        ++rank;
    return rank;
}

/// Orthonormal basis of range(a), truncated at rel_tol * reference.
inline ComplexMatrix range_basis(const ComplexMatrix& a, double rel_tol, double reference = 0.0)
{
    if (a.cols() == 0)
        return ComplexMatrix(a.rows(), 0);
    Eigen::JacobiSVD<ComplexMatrix> svd(a, Eigen::ComputeThinU);
    const RealVector& s = svd.singularValues();
    const double scale = std::max(reference, s.size() > 0 ? s(0) : 0.0);
    Eigen::Index rank = 0;
    while (rank < s.size() && s(rank) > rel_tol * scale)
        ++rank;
    return svd.matrixU().leftCols(rank);
}

/// Moore-Penrose pseudo-inverse via complete orthogonal decomposition.
inline ComplexMatrix pseudo_inverse(const ComplexMatrix& a)
{
    return a.completeOrthogonalDecomposition().pseudoInverse();
}

struct DeterminantCofactor {
    Complex det;
    Complex cofactor;
};

/// det(H) and the (i, j) cofactor (0-based indices).
inline DeterminantCofactor determinant_and_cofactor(const ComplexMatrix& h, Eigen::Index i, Eigen::Index j)
{
    if (h.rows() != h.cols() || h.rows() == 0)
        throw std::invalid_argument("determinant_and_cofactor requires a nonempty square matrix");
    const Eigen::Index k = h.rows();
    if (i < 0 || j < 0 || i >= k || j >= k)
        throw std::out_of_range("cofactor index out of range");

    const Complex det = h.partialPivLu().determinant();
    if (k == 1)
        return {det, Complex(1.0, 0.0)};

    ComplexMatrix minor(k - 1, k - 1);
    for (Eigen::Index r = 0, mr = 0; r < k; ++r) {
        if (r == i)
            continue;
        for (Eigen::Index c = 0, mc = 0; c < k; ++c) {
            if (c == j)
                continue;
            minor(mr, mc++) = h(r, c);
        }
        ++mr;
    }
    const double sign = ((i + j) % 2 == 0) ? 1.0 : -1.0;
    return {det, sign * minor.partialPivLu().determinant()};
}

/// N x N unitary DFT matrix, F(r, c) = exp(-2 pi i r c / N) / sqrt(N).
inline ComplexMatrix unitary_dft(Eigen::Index n)
{
    ComplexMatrix f(n, n);
    const double norm = 1.0 / std::sqrt(static_cast<double>(n));
    for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index c = 0; c < n; ++c)
            f(r, c) = std::polar(norm, -2.0 * std::numbers::pi * static_cast<double>((r * c) % n) /
                                           static_cast<double>(n));
    return f;
}

} // namespace relaydof
