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

// SVD-based channel pairing for the K-user K-hop network: the stage map F_m,
// lattice binning, scalar AF gains, error/noise accounting and simulation.

#pragma once

#include "relaydof/channel_core.hpp"
#include "relaydof/detail/parallel.hpp"
#include "relaydof/errors.hpp"
#include "relaydof/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace relaydof {

/// P^power for the K x K cyclic permutation P = [[0, I_{K-1}], [1, 0]].
/// diag(P S P^T) is diag(S) shifted up by one with the first entry wrapped
/// to the end.
inline Eigen::MatrixXi cyclic_permutation(int k, int power = 1)
{
    if (k < 1)
        throw std::invalid_argument("cyclic_permutation requires K >= 1");
    const int shift = ((power % k) + k) % k;
    Eigen::MatrixXi p = Eigen::MatrixXi::Zero(k, k);
    for (int r = 0; r < k; ++r)
        p(r, (r + shift) % k) = 1;
    return p;
}

namespace detail {

inline RealVector shift_up(const RealVector& v, int shift)
{
    const auto k = v.size();
    RealVector out(k);
    for (Eigen::Index r = 0; r < k; ++r)
        out(r) = v((r + shift) % k);
    return out;
}

inline RealVector shift_down(const RealVector& v, int shift)
{
    const auto k = v.size();
    RealVector out(k);
    for (Eigen::Index r = 0; r < k; ++r)
        out((r + shift) % k) = v(r);
    return out;
}

inline void check_stage(const ComplexMatrix& h, int m)
{
    if (h.rows() != h.cols() || h.rows() == 0)
        throw std::invalid_argument("pairing stage needs a nonempty square matrix");
    if (m < 1 || m > h.rows())
        throw std::out_of_range("pairing stage index must lie in 1..K");
}

} // namespace detail

struct PairingStageResult {
    int m = 1;
    ComplexMatrix f;
    CanonicalSvd svd;
    RealVector permuted_sigma;
};

/// F_m(H). Odd m: U P^{m-1} S P^{m-1,T} V^H; even m: V P^{m-1} S P^{m-1,T} U^H.
/// F_1(H) is returned as H itself.
inline PairingStageResult pairing_stage(const ComplexMatrix& h, int m)
{
    detail::check_stage(h, m);
    PairingStageResult out;
    out.m = m;
    out.svd = svd_canonical(h, SvdTies::allow_uniform);
    out.permuted_sigma = detail::shift_up(out.svd.sigma, m - 1);
    if (m == 1) {
        out.f = h;
    } else if (m % 2 == 1) {
        out.f = out.svd.U * out.permuted_sigma.cast<Complex>().asDiagonal() * out.svd.V.adjoint();
    } else {
        out.f = out.svd.V * out.permuted_sigma.cast<Complex>().asDiagonal() * out.svd.U.adjoint();
    }
    return out;
}

/// Inverse of F_m: the H with pairing_stage(H, m).f == g.
inline ComplexMatrix invert_pairing_stage(const ComplexMatrix& g, int m)
{
    detail::check_stage(g, m);
    if (m == 1)
        return g;
    const CanonicalSvd svd = svd_canonical(g, SvdTies::allow_uniform);
    const ComplexVector middle = detail::shift_down(svd.sigma, m - 1).cast<Complex>();
    if (m % 2 == 1)
        return svd.U * middle.asDiagonal() * svd.V.adjoint();
    return svd.V * middle.asDiagonal() * svd.U.adjoint();
}

struct ScaledIdentityCheck {
    double lambda;
    double residual;
};

/// Compares F_K ... F_1 against |det H| I.
inline ScaledIdentityCheck verify_scaled_identity(const ComplexMatrix& h)
{
    if (h.rows() != h.cols() || h.rows() == 0 || h.rows() % 2 != 0)
        throw std::invalid_argument("verify_scaled_identity requires an even-sized square matrix");
    const int k = static_cast<int>(h.rows());
    ComplexMatrix product = h;
    for (int m = 2; m <= k; ++m)
        product = pairing_stage(h, m).f * product;
    const double lambda = std::abs(h.partialPivLu().determinant());
    const double denom = std::max(lambda, std::numeric_limits<double>::epsilon());
    const double residual = (product - lambda * ComplexMatrix::Identity(k, k)).norm() / denom;
    return {lambda, residual};
}

// ------------------------------------------------------------------------
// Lattice bins
// ------------------------------------------------------------------------

using KeyMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Cell of the lattice delta (Z^{KxK} + j Z^{KxK}).
struct QuantizedBin {
    double delta = 1.0;
    KeyMatrix re;
    KeyMatrix im;

    ComplexMatrix representative() const
    {
        ComplexMatrix out(re.rows(), re.cols());
        for (Eigen::Index c = 0; c < re.cols(); ++c)
            for (Eigen::Index r = 0; r < re.rows(); ++r)
                out(r, c) = Complex(delta * static_cast<double>(re(r, c)), delta * static_cast<double>(im(r, c)));
        return out;
    }

    /// Flat ordering key (column-major re parts, then im parts).
    std::vector<std::int64_t> flat() const
    {
        std::vector<std::int64_t> out;
        out.reserve(static_cast<std::size_t>(2 * re.size()));
        out.insert(out.end(), re.data(), re.data() + re.size());
        out.insert(out.end(), im.data(), im.data() + im.size());
        return out;
    }

    /// True if h lies in this cell.
    bool contains(const ComplexMatrix& h) const;
};

/// Rounds each real and imaginary part to the nearest lattice point, ties
/// away from zero.
inline QuantizedBin quantize_channel(const ComplexMatrix& h, double delta)
{
    if (!(delta > 0.0) || !std::isfinite(delta))
        throw std::invalid_argument("quantization pitch must be positive");
    QuantizedBin bin;
    bin.delta = delta;
    bin.re.resize(h.rows(), h.cols());
    bin.im.resize(h.rows(), h.cols());
    for (Eigen::Index c = 0; c < h.cols(); ++c) {
        for (Eigen::Index r = 0; r < h.rows(); ++r) {
            bin.re(r, c) = static_cast<std::int64_t>(std::round(h(r, c).real() / delta));
            bin.im(r, c) = static_cast<std::int64_t>(std::round(h(r, c).imag() / delta));
        }
    }
    return bin;
}

inline bool QuantizedBin::contains(const ComplexMatrix& h) const
{
    if (h.rows() != re.rows() || h.cols() != re.cols())
        return false;
    const QuantizedBin other = quantize_channel(h, delta);
    return other.re == re && other.im == im;
}

/// Transmission test on a bin: g_min K <= ||H^delta||_F <= g_max K.
inline bool bin_admitted(const QuantizedBin& bin, const GatingWindow& window)
{
    const double norm = bin.representative().norm();
    const auto k = static_cast<double>(bin.re.rows());
    return norm >= window.g_min() * k && norm <= window.g_max() * k;
}

// ------------------------------------------------------------------------
// Gains, noise and error accounting
// ------------------------------------------------------------------------

enum class HopGainRule {
    realized,  ///< per-node power computed from the actual channels
    worst_case ///< per-node bound over any input with node powers <= P, bin-inflated
};

/// gamma_2..gamma_K for hops H_1..H_K so that no relay node exceeds power P.
/// Sources transmit i.i.d. symbols of power P. With worst_case each entry
/// magnitude is inflated by delta/sqrt(2) to cover the whole bin.
inline std::vector<double> hop_gains(std::span<const ComplexMatrix> hops, const PowerBudget& budget,
                                     HopGainRule rule = HopGainRule::realized, double delta = 0.0)
{
    if (hops.size() < 2)
        throw std::invalid_argument("hop_gains needs at least two hops");
    const double power = budget.power();
    const auto k = hops.front().rows();
    std::vector<double> gains;
    gains.reserve(hops.size() - 1);
    ComplexMatrix cov = power * ComplexMatrix::Identity(hops.front().cols(), hops.front().cols());
    for (std::size_t m = 0; m + 1 < hops.size(); ++m) {
        const ComplexMatrix& h = hops[m];
        if (h.cols() != cov.rows() || h.rows() != k)
            throw std::invalid_argument("hop_gains: dimension mismatch");
        double received;
        ComplexMatrix next;
        if (rule == HopGainRule::realized) {
            next = h * cov * h.adjoint() + ComplexMatrix::Identity(k, k);
            received = next.diagonal().real().maxCoeff();
        } else {
            const RealVector rows = (h.cwiseAbs().array() + delta / std::sqrt(2.0)).rowwise().sum();
            received = power * rows.cwiseAbs2().maxCoeff() + 1.0;
            next = h * cov * h.adjoint() + ComplexMatrix::Identity(k, k);
        }
        const double gamma2 = power / received;
        gains.push_back(std::sqrt(gamma2));
        cov = gamma2 * next;
    }
    return gains;
}

/// E||z_AF||^2 = sum_{i=2..K} (prod_{j>=i} gamma_j^2) ||H_K ... H_i||_F^2 for
/// unit-variance noise. gains holds gamma_2..gamma_K.
inline double af_noise_power(std::span<const double> gains, std::span<const ComplexMatrix> hops)
{
    if (hops.empty() || gains.size() + 1 != hops.size())
        throw std::invalid_argument("af_noise_power needs K-1 gains for K hops");
    for (const auto& h : hops)
        if (h.rows() != hops.front().rows() || h.cols() != hops.front().cols() || h.rows() != h.cols())
            throw std::invalid_argument("af_noise_power: dimension mismatch");
    const auto k = hops.front().rows();
    double total = 0.0;
    ComplexMatrix tail = ComplexMatrix::Identity(k, k);
    double gain2 = 1.0;
    for (std::size_t i = hops.size() - 1; i >= 1; --i) {
        tail = tail * hops[i];
        gain2 *= gains[i - 1] * gains[i - 1];
        total += gain2 * tail.squaredNorm();
    }
    return total;
}

namespace detail {

inline void check_chain(std::span<const ComplexMatrix> a, std::span<const ComplexMatrix> b)
{
    if (a.empty() || a.size() != b.size())
        throw std::invalid_argument("channel chains must be nonempty and of equal length");
    const auto k = a.front().rows();
    for (std::size_t m = 0; m < a.size(); ++m)
        if (a[m].rows() != k || a[m].cols() != k || b[m].rows() != k || b[m].cols() != k)
            throw std::invalid_argument("channel chains: dimension mismatch");
}

inline ComplexMatrix chain_product(std::span<const ComplexMatrix> hops)
{
    ComplexMatrix out = hops.front();
    for (std::size_t m = 1; m < hops.size(); ++m)
        out = hops[m] * out;
    return out;
}

} // namespace detail

/// prod(F_m + Delta_m) - prod F_m with the first hop taken as exact.
inline ComplexMatrix total_quantization_error(std::span<const ComplexMatrix> actual,
                                              std::span<const ComplexMatrix> ideal)
{
    detail::check_chain(actual, ideal);
    std::vector<ComplexMatrix> realized(actual.begin(), actual.end());
    realized.front() = ideal.front();
    return detail::chain_product(realized) - detail::chain_product(ideal);
}

/// Terms of the error expansion that are linear in the Delta_m.
inline ComplexMatrix first_order_quantization_error(std::span<const ComplexMatrix> actual,
                                                    std::span<const ComplexMatrix> ideal)
{
    detail::check_chain(actual, ideal);
    const auto k = actual.front().rows();
    ComplexMatrix out = ComplexMatrix::Zero(k, k);
    for (std::size_t m = 1; m < actual.size(); ++m) {
        ComplexMatrix term = ideal.front();
        for (std::size_t j = 1; j < actual.size(); ++j)
            term = (j == m ? ComplexMatrix(actual[j] - ideal[j]) : ideal[j]) * term;
        out += term;
    }
    return out;
}

struct SinrBounds {
    double lower;
    double closed;
};

/// Lower bound and closed form of the end-to-end SINR. delta_tot must already
/// carry the product of the gains. literal_closed adds the leading "1 +" of
/// the printed closed form.
inline SinrBounds sinr_bounds(std::span<const double> gains, const ComplexMatrix& h, const ComplexMatrix& delta_tot,
                              double af_power, double power, bool literal_closed = false)
{
    if (h.rows() != h.cols())
        throw std::invalid_argument("sinr_bounds needs a square channel");
    if (af_power < 0.0 || power < 0.0)
        throw std::invalid_argument("sinr_bounds needs nonnegative powers");
    double gain = 1.0;
    for (double g : gains)
        gain *= g;
    const double det = std::abs(h.partialPivLu().determinant());
    const double err = delta_tot.norm();
    const double k = static_cast<double>(h.rows());
    const double root = std::max(0.0, std::abs(gain) * det - err);
    SinrBounds out;
    out.lower = root * root * power / (1.0 + err * err * k * power + af_power);
    out.closed = gain * gain * det * det * power / (1.0 + af_power);
    if (literal_closed)
        out.closed += 1.0;
    return out;
}

// ------------------------------------------------------------------------
// Relay queues
// ------------------------------------------------------------------------

/// Per-bin FIFO buffers at one relay layer with a fixed per-bin capacity.
template <class Block>
class LayerQueue {
public:
    explicit LayerQueue(std::size_t capacity = 1024) : capacity_(capacity)
    {
        if (capacity == 0)
            throw std::invalid_argument("LayerQueue capacity must be positive");
    }

    /// Returns false (and counts a drop) when the bin is full.
    bool push(const QuantizedBin& bin, Block block)
    {
        ++enqueued_;
        auto& q = bins_[bin.flat()];
        if (q.size() >= capacity_) {
            ++dropped_;
            return false;
        }
        q.push_back(std::move(block));
        ++pending_;
        return true;
    }

    /// Oldest block in the bin accepted by ready(block), if any.
    template <class Ready>
    std::optional<Block> pop(const QuantizedBin& bin, Ready&& ready)
    {
        const auto it = bins_.find(bin.flat());
        if (it == bins_.end() || it->second.empty() || !ready(it->second.front()))
            return std::nullopt;
        Block out = std::move(it->second.front());
        it->second.pop_front();
        if (it->second.empty())
            bins_.erase(it);
        --pending_;
        ++forwarded_;
        return out;
    }

    std::size_t capacity() const { return capacity_; }
    std::uint64_t enqueued() const { return enqueued_; }
    std::uint64_t forwarded() const { return forwarded_; }
    std::uint64_t dropped() const { return dropped_; }
    std::uint64_t pending() const { return pending_; }
    std::size_t occupied_bins() const { return bins_.size(); }

    /// enqueued = forwarded + pending + dropped, from the counters.
    bool conserved() const { return enqueued_ == forwarded_ + pending_ + dropped_; }

    /// conserved() plus a walk over every buffer to recount pending blocks.
    bool audit() const
    {
        std::uint64_t held = 0;
        for (const auto& [key, q] : bins_)
            held += q.size();
        return held == pending_ && conserved();
    }

private:
    std::size_t capacity_;
    std::map<std::vector<std::int64_t>, std::deque<Block>> bins_;
    std::uint64_t enqueued_ = 0;
    std::uint64_t forwarded_ = 0;
    std::uint64_t dropped_ = 0;
    std::uint64_t pending_ = 0;
};

/// Upper bound on ||F_2(H') H - |det H| I||_F over every pair H, H' in the
/// 2x2 bin. Infinite when the bin may contain a singular matrix.
inline double two_user_bin_error_bound(const QuantizedBin& bin)
{
    if (bin.re.rows() != 2 || bin.re.cols() != 2)
        throw std::invalid_argument("two_user_bin_error_bound is defined for K = 2");
    const ComplexMatrix rep = bin.representative();
    const double k = 2.0;
    const double r = std::sqrt(2.0) * k * bin.delta;
    const double rho = k * bin.delta / std::sqrt(2.0);
    const double f = rep.norm() + rho;
    const double d_min = std::abs(rep.determinant()) - rho * f;
    if (d_min <= 0.0)
        return std::numeric_limits<double>::infinity();
    const double phase = std::min(2.0, 2.0 * r * f / d_min);
    return (r + phase * f) * f;
}

// ------------------------------------------------------------------------
// Simulation
// ------------------------------------------------------------------------

enum class KhopMode { genie, queued };

enum class KhopRateMetric {
    realized, ///< per-user SINR of the realized end-to-end channel, residual interference as noise
    bound     ///< K log2(1 + lower bound)
};

struct KhopSimulationConfig {
    int users = 2;
    double delta = 1e-3;
    GatingWindow window{0.1, 10.0};
    std::vector<double> snr_db{20.0, 30.0, 40.0, 50.0};
    int trials = 200;
    std::int64_t horizon = 100000;
    KhopMode mode = KhopMode::genie;
    KhopRateMetric metric = KhopRateMetric::realized;
    HopGainRule gain_rule = HopGainRule::realized;
    std::size_t queue_capacity = 1024;
    bool literal_closed = false;
    std::uint64_t seed = 1;
    int threads = 0;
    int bootstrap = 200;
    int max_gate_attempts = 100000;
};

/// One draw of the genie-paired chain. hops[0] = H, hops[m-1] = F_m(H^delta + E_m)
/// with E_m uniform in the cell; ideal[m-1] = F_m(H).
struct GenieChain {
    ComplexMatrix h;
    QuantizedBin bin;
    std::vector<ComplexMatrix> hops;
    std::vector<ComplexMatrix> ideal;
};

inline GenieChain draw_genie_chain(Rng& rng, int users, double delta, const GatingWindow& window,
                                   int max_attempts = 100000)
{
    if (users < 2 || users % 2 != 0)
        throw ValidationError("K", "the K-hop scheme requires K is even and K >= 2");
    GenieChain out;
    for (int attempt = 0;; ++attempt) {
        if (attempt >= max_attempts)
            throw Error("no admissible channel within the gating attempt budget");
        out.h = draw_matrix(rng, users, users, ChannelDistribution::rayleigh, window);
        out.bin = quantize_channel(out.h, delta);
        if (bin_admitted(out.bin, window))
            break;
    }
    const ComplexMatrix rep = out.bin.representative();
    std::uniform_real_distribution<double> cell(-0.5 * delta, 0.5 * delta);
    out.hops.push_back(out.h);
    out.ideal.push_back(out.h);
    for (int m = 2; m <= users; ++m) {
        ComplexMatrix e(users, users);
        for (Eigen::Index c = 0; c < e.cols(); ++c)
            for (Eigen::Index r = 0; r < e.rows(); ++r) {
                const double re = cell(rng);
                const double im = cell(rng);
                e(r, c) = Complex(re, im);
            }
        out.hops.push_back(pairing_stage(rep + e, m).f);
        out.ideal.push_back(pairing_stage(out.h, m).f);
    }
    return out;
}

namespace detail {

/// Per-user SINR of y = A x + n with noise covariance cov and input power P.
inline std::vector<double> per_user_rates(const ComplexMatrix& a, const ComplexMatrix& cov, double power)
{
    std::vector<double> rates(static_cast<std::size_t>(a.rows()));
    for (Eigen::Index k = 0; k < a.rows(); ++k) {
        const double signal = power * std::norm(a(k, k));
        const double leak = power * (a.row(k).squaredNorm() - std::norm(a(k, k)));
        rates[static_cast<std::size_t>(k)] = std::log2(1.0 + signal / (cov(k, k).real() + leak));
    }
    return rates;
}

/// Noise covariance at the destinations: I + sum_i (prod gamma^2) B_i B_i^H.
inline ComplexMatrix destination_noise(std::span<const double> gains, std::span<const ComplexMatrix> hops)
{
    const auto k = hops.front().rows();
    ComplexMatrix cov = ComplexMatrix::Identity(k, k);
    ComplexMatrix tail = ComplexMatrix::Identity(k, k);
    double gain2 = 1.0;
    for (std::size_t i = hops.size() - 1; i >= 1; --i) {
        tail = tail * hops[i];
        gain2 *= gains[i - 1] * gains[i - 1];
        cov.noalias() += gain2 * tail * tail.adjoint();
    }
    return cov;
}

struct KhopRates {
    std::vector<double> realized;
    double bound_rate_per_user = 0.0;
    double closed_rate_per_user = 0.0;
};

inline KhopRates khop_rates(std::span<const ComplexMatrix> hops, std::span<const ComplexMatrix> ideal,
                            const ComplexMatrix& h, double power, HopGainRule rule, double delta, bool literal)
{
    const std::vector<double> gains = hop_gains(hops, PowerBudget(power), rule, delta);
    double gain = 1.0;
    for (double g : gains)
        gain *= g;
    KhopRates out;
    out.realized = per_user_rates(gain * chain_product(hops), destination_noise(gains, hops), power);
    const ComplexMatrix err = gain * total_quantization_error(hops, ideal);
    const SinrBounds s = sinr_bounds(gains, h, err, af_noise_power(gains, hops), power, literal);
    out.bound_rate_per_user = std::log2(1.0 + s.lower);
    out.closed_rate_per_user = literal ? std::log2(s.closed) : std::log2(1.0 + s.closed);
    return out;
}

inline double median(std::vector<double> v)
{
    if (v.empty())
        return std::numeric_limits<double>::quiet_NaN();
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (v.size() % 2 == 1)
        return *mid;
    const double hi = *mid;
    const double lo = *std::max_element(v.begin(), mid);
    return 0.5 * (lo + hi);
}

inline void maybe_attach_slope(RateReport& report, int resamples)
{
    if (report.snr_db.size() < 3)
        return;
    const auto [lo, hi] = std::minmax_element(report.snr_db.begin(), report.snr_db.end());
    if (*hi - *lo >= 20.0)
        attach_slope(report, resamples);
}

inline RateReport new_khop_report(const KhopSimulationConfig& cfg, const char* scheme)
{
    RateReport report;
    report.scheme = scheme;
    report.users = cfg.users;
    report.relays = cfg.users;
    report.seed = cfg.seed;
    report.snr_db = cfg.snr_db;
    report.user_rates.assign(cfg.snr_db.size(), std::vector<double>(static_cast<std::size_t>(cfg.users), 0.0));
    report.sum_rate_samples.assign(cfg.snr_db.size(), {});
    return report;
}

inline RateReport simulate_khop_genie(const KhopSimulationConfig& cfg)
{
    struct Trial {
        bool ok = false;
        double delta_tot = 0.0;
        std::vector<std::vector<double>> realized; // [p][k]
        std::vector<double> bound;                 // [p] per-user
        std::vector<double> closed;                // [p] per-user
    };
    const std::size_t grid = cfg.snr_db.size();
    const auto users = static_cast<std::size_t>(cfg.users);
    std::vector<Trial> trials(static_cast<std::size_t>(cfg.trials));
    parallel_for(
        cfg.trials,
        [&](int t) {
            Rng rng = make_rng(cfg.seed, static_cast<std::uint64_t>(t) + 1);
            Trial& out = trials[static_cast<std::size_t>(t)];
            try {
                const GenieChain chain = draw_genie_chain(rng, cfg.users, cfg.delta, cfg.window, cfg.max_gate_attempts);
                out.delta_tot = total_quantization_error(chain.hops, chain.ideal).norm();
                for (std::size_t p = 0; p < grid; ++p) {
                    const double power = PowerBudget::from_db(cfg.snr_db[p]).power();
                    const KhopRates r = khop_rates(chain.hops, chain.ideal, chain.h, power, cfg.gain_rule,
                                                   cfg.delta, cfg.literal_closed);
                    out.realized.push_back(r.realized);
                    out.bound.push_back(r.bound_rate_per_user);
                    out.closed.push_back(r.closed_rate_per_user);
                }
                out.ok = true;
            } catch (const Error&) {
                out.ok = false;
            }
        },
        cfg.threads);

    RateReport report = new_khop_report(cfg, "khop-genie");
    RateReport alternate = report;
    std::vector<double> errors;
    std::vector<double> closed_sum(grid, 0.0);
    int ok = 0;
    for (const auto& t : trials) {
        if (!t.ok)
            continue;
        ++ok;
        errors.push_back(t.delta_tot);
        for (std::size_t p = 0; p < grid; ++p) {
            double realized_sum = 0.0;
            for (std::size_t k = 0; k < users; ++k)
                realized_sum += t.realized[p][k];
            const double bound_sum = static_cast<double>(users) * t.bound[p];
            RateReport& primary = cfg.metric == KhopRateMetric::realized ? report : alternate;
            RateReport& other = cfg.metric == KhopRateMetric::realized ? alternate : report;
            for (std::size_t k = 0; k < users; ++k) {
                primary.user_rates[p][k] += t.realized[p][k];
                other.user_rates[p][k] += t.bound[p];
            }
            primary.sum_rate_samples[p].push_back(realized_sum);
            other.sum_rate_samples[p].push_back(bound_sum);
            closed_sum[p] += static_cast<double>(users) * t.closed[p];
        }
    }
    for (RateReport* r : {&report, &alternate}) {
        for (auto& row : r->user_rates)
            for (auto& v : row)
                v = ok > 0 ? v / ok : 0.0;
        r->trials.assign(grid, cfg.trials);
        r->failures.assign(grid, cfg.trials - ok);
        if (ok > 0)
            maybe_attach_slope(*r, r == &report ? cfg.bootstrap : 0);
    }
    report.diagnostics["median_delta_tot"] = median(errors);
    report.diagnostics[cfg.metric == KhopRateMetric::realized ? "bound_metric_slope" : "realized_metric_slope"] =
        alternate.slope;
    if (ok > 0 && grid >= 2) {
        std::vector<double> xs(grid);
        std::vector<double> ys(grid);
        for (std::size_t p = 0; p < grid; ++p) {
            xs[p] = log2_power(cfg.snr_db[p]);
            ys[p] = closed_sum[p] / ok;
        }
        report.diagnostics["closed_form_slope"] = least_squares_slope(xs, ys);
    }
    return report;
}

inline RateReport simulate_khop_queued(const KhopSimulationConfig& cfg)
{
    if (cfg.users != 2)
        throw ValidationError("K", "queued pairing is implemented for K = 2 only");
    if (cfg.horizon < 1)
        throw ValidationError("horizon", "must be positive");

    struct Block {
        ComplexMatrix h;
        std::int64_t arrival;
        double bound;
    };
    struct Delivery {
        ComplexMatrix h1;
        ComplexMatrix h2;
    };

    Rng rng = make_rng(cfg.seed, 0x9e0e);
    LayerQueue<Block> queue(cfg.queue_capacity);
    std::vector<Delivery> deliveries;
    double delay_sum = 0.0;
    double worst_ratio = 0.0;
    std::uint64_t violations = 0;
    std::uint64_t sent = 0;
    std::uint64_t degenerate = 0;
    for (std::int64_t t = 0; t < cfg.horizon; ++t) {
        const ComplexMatrix h1 = draw_matrix(rng, 2, 2, ChannelDistribution::rayleigh, cfg.window);
        const ComplexMatrix h2 = draw_matrix(rng, 2, 2, ChannelDistribution::rayleigh, cfg.window);

        // Relay side first: only blocks that arrived at an earlier step qualify.
        try {
            const QuantizedBin want = quantize_channel(invert_pairing_stage(h2, 2), cfg.delta);
            if (auto block = queue.pop(want, [&](const Block& b) { return b.arrival < t; })) {
                const ComplexMatrix end = h2 * block->h;
                const double lambda = std::abs(block->h.determinant());
                const double residual = (end - lambda * ComplexMatrix::Identity(2, 2)).norm();
                const double allowed = block->bound * (1.0 + 1e-9) + 1e-12;
                if (residual > allowed)
                    ++violations;
                if (std::isfinite(block->bound) && block->bound > 0.0)
                    worst_ratio = std::max(worst_ratio, residual / block->bound);
                delay_sum += static_cast<double>(t - block->arrival);
                deliveries.push_back({block->h, h2});
            }
        } catch (const DegenerateSingularValues&) {
            ++degenerate;
        }

        const QuantizedBin bin = quantize_channel(h1, cfg.delta);
        if (bin_admitted(bin, cfg.window)) {
            ++sent;
            queue.push(bin, Block{h1, t, two_user_bin_error_bound(bin)});
        }
        if (!queue.conserved())
            throw Error("relay queue lost a block");
    }
    if (deliveries.empty())
        throw Error("queued pairing delivered no blocks within the horizon; the pitch is too fine");

    RateReport report = new_khop_report(cfg, "khop-queued");
    const double throughput = static_cast<double>(deliveries.size()) / static_cast<double>(cfg.horizon);
    for (std::size_t p = 0; p < cfg.snr_db.size(); ++p) {
        const double power = PowerBudget::from_db(cfg.snr_db[p]).power();
        std::vector<double> mean(2, 0.0);
        for (const auto& d : deliveries) {
            const ComplexMatrix hops[] = {d.h1, d.h2};
            const ComplexMatrix ideal[] = {d.h1, pairing_stage(d.h1, 2).f};
            const KhopRates r = khop_rates(hops, ideal, d.h1, power, cfg.gain_rule, cfg.delta, cfg.literal_closed);
            for (std::size_t k = 0; k < 2; ++k)
                mean[k] += cfg.metric == KhopRateMetric::realized ? r.realized[k] : r.bound_rate_per_user;
        }
        for (std::size_t k = 0; k < 2; ++k)
            report.user_rates[p][k] = throughput * mean[k] / static_cast<double>(deliveries.size());
    }
    report.trials.assign(cfg.snr_db.size(), static_cast<int>(std::min<std::int64_t>(cfg.horizon, std::numeric_limits<int>::max())));
    report.failures.assign(cfg.snr_db.size(), 0);
    report.sum_rate_samples.clear();
    maybe_attach_slope(report, 0);

    report.diagnostics["horizon"] = static_cast<double>(cfg.horizon);
    report.diagnostics["blocks_sent"] = static_cast<double>(sent);
    report.diagnostics["blocks_enqueued"] = static_cast<double>(queue.enqueued());
    report.diagnostics["blocks_forwarded"] = static_cast<double>(queue.forwarded());
    report.diagnostics["blocks_pending"] = static_cast<double>(queue.pending());
    report.diagnostics["blocks_dropped"] = static_cast<double>(queue.dropped());
    report.diagnostics["conservation_ok"] = queue.audit() ? 1.0 : 0.0;
    report.diagnostics["throughput"] = throughput;
    report.diagnostics["mean_matching_delay"] = delay_sum / static_cast<double>(deliveries.size());
    report.diagnostics["bound_violations"] = static_cast<double>(violations);
    report.diagnostics["max_residual_to_bound"] = worst_ratio;
    report.diagnostics["degenerate_relay_channels"] = static_cast<double>(degenerate);
    return report;
}

} // namespace detail

/// Runs the K-hop pairing scheme in genie or queued mode and fits the slope.
inline RateReport simulate_khop(const KhopSimulationConfig& cfg)
{
    if (cfg.users < 2 || cfg.users % 2 != 0)
        throw ValidationError("K", "the K-hop scheme requires K is even and K >= 2");
    if (!(cfg.delta > 0.0))
        throw ValidationError("delta", "must be positive");
    if (cfg.snr_db.empty())
        throw ValidationError("snr_grid_dB", "must not be empty");
    if (cfg.mode == KhopMode::genie) {
        if (cfg.trials < 1)
            throw ValidationError("trials", "must be positive");
        return detail::simulate_khop_genie(cfg);
    }
    return detail::simulate_khop_queued(cfg);
}

// ------------------------------------------------------------------------
// Stage-map distribution check
// ------------------------------------------------------------------------

struct SymmetryReport {
    int users = 0;
    int stage = 1;
    std::size_t samples = 0;
    /// max over samples of | ||F_m(H)||_F - ||H||_F | / ||H||_F.
    double max_norm_deviation = 0.0;
    /// One entry per real/imaginary marginal, column-major, re before im.
    std::vector<KsResult> marginals;
    double max_statistic = 0.0;
    double min_p_value = 1.0;
    /// Bonferroni-combined p-value over all marginals.
    double combined_p_value = 1.0;
    /// Largest KS statistic between each marginal of F_m(H) and of H itself.
    double paired_statistic = 0.0;
};

inline SymmetryReport distribution_symmetry_check(std::size_t samples, int stage, int users, std::uint64_t seed)
{
    if (samples < 1000)
        throw std::invalid_argument("distribution_symmetry_check needs at least 1000 samples");
    if (users < 1 || stage < 1 || stage > users)
        throw std::invalid_argument("distribution_symmetry_check: stage must lie in 1..K");
    const auto entries = static_cast<std::size_t>(users * users);
    std::vector<std::vector<double>> mapped(2 * entries);
    std::vector<std::vector<double>> source(2 * entries);
    std::vector<std::vector<double>> fresh(2 * entries);
    for (auto* set : {&mapped, &source, &fresh})
        for (auto& v : *set)
            v.reserve(samples);

    SymmetryReport report;
    report.users = users;
    report.stage = stage;
    report.samples = samples;
    Rng rng = make_rng(seed, 0x5e3);
    Rng reference = make_rng(seed, 0xf7e5);
    const GatingWindow unused(0.1, 10.0);
    const auto record = [&](std::vector<std::vector<double>>& into, const ComplexMatrix& m) {
        for (std::size_t e = 0; e < entries; ++e) {
            into[2 * e].push_back(m.data()[e].real());
            into[2 * e + 1].push_back(m.data()[e].imag());
        }
    };
    for (std::size_t s = 0; s < samples; ++s) {
        const ComplexMatrix h = draw_matrix(rng, users, users, ChannelDistribution::rayleigh, unused);
        const ComplexMatrix f = pairing_stage(h, stage).f;
        report.max_norm_deviation = std::max(report.max_norm_deviation, std::abs(f.norm() - h.norm()) / h.norm());
        record(mapped, f);
        record(source, h);
        record(fresh, draw_matrix(reference, users, users, ChannelDistribution::rayleigh, unused));
    }
    for (std::size_t i = 0; i < mapped.size(); ++i) {
        const KsResult r = two_sample_ks(mapped[i], fresh[i]);
        report.marginals.push_back(r);
        report.max_statistic = std::max(report.max_statistic, r.statistic);
        report.min_p_value = std::min(report.min_p_value, r.p_value);
        report.paired_statistic = std::max(report.paired_statistic, two_sample_ks(mapped[i], source[i]).statistic);
    }
    report.combined_p_value = std::min(1.0, report.min_p_value * static_cast<double>(mapped.size()));
    return report;
}

} // namespace relaydof
