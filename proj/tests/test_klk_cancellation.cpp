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


#include "oracles.hpp"

#include <catch_amalgamated.hpp>

using namespace relaydof;
using Catch::Approx;

namespace {

const GatingWindow kWindow(0.1, 2.0);

ExtensionPlan manual_plan(int k, int l, int n, int n1)
{
    ExtensionPlan p;
    p.users = k;
    p.relays = l;
    p.extension = n;
    p.cancelled = n1;
    return p;
}

// Largest |G_ki v_s| over i != k, relative to max ||G_ki||_F.
double cross_residual(const EffectiveChannelSet& eff, int n1)
{
    const ComplexMatrix dirs = oracle::dft(eff.extension).leftCols(n1);
    double worst = 0.0;
    for (int k = 0; k < eff.users; ++k)
        for (int i = 0; i < eff.users; ++i)
            if (i != k)
                worst = std::max(worst, (eff(k, i) * dirs).colwise().norm().maxCoeff());
    return worst / eff.max_norm();
}

} // namespace

TEST_CASE("max_cancellable_symbols examples", "[klk]")
{
    CHECK(max_cancellable_symbols(3, 6, 2) == 1);
    CHECK(max_cancellable_symbols(2, 3, 1) == 1);
    CHECK(max_cancellable_symbols(2, 2, 1) == 0);
    CHECK_THROWS_AS(max_cancellable_symbols(3, 2, 1), std::invalid_argument);
    CHECK_THROWS_AS(max_cancellable_symbols(3, 3, 0), std::invalid_argument);
}

TEST_CASE("max_cancellable_symbols agrees with a counting search and is monotone", "[klk]")
{
    for (int k = 2; k <= 5; ++k)
        for (int l = k; l <= 30; ++l)
            for (int n = 1; n <= 12; ++n) {
                const int v = max_cancellable_symbols(k, l, n);
                CHECK(v == oracle::max_cancellable_by_search(k, l, n));
                CHECK(v <= max_cancellable_symbols(k, l + 1, n));
                CHECK(v <= max_cancellable_symbols(k, l, n + 1));
                if (l > k * (k - 1) && n == 1)
                    CHECK(v >= 1);
            }
}

TEST_CASE("choose_extension_plan regimes", "[klk]")
{
    const auto full = choose_extension_plan(3, 7, 1);
    CHECK(full.regime == KlkRegime::full_cancellation);
    CHECK(full.cancelled == 1);
    CHECK(full.first_user_beams == 0);
    CHECK(full.other_user_beams == 0);
    CHECK(full.extension == 1);

    const auto boundary = choose_extension_plan(3, 6, 1);
    CHECK(boundary.regime == KlkRegime::boundary);
    CHECK(boundary.cancelled == 1);
    CHECK(boundary.extension == 2);
    CHECK(choose_extension_plan(3, 6, 4).extension == 5);

    const auto aligned = choose_extension_plan(3, 3, 1);
    CHECK(aligned.regime == KlkRegime::alignment);
    CHECK(aligned.alignment_maps == 1);
    CHECK(aligned.first_user_beams == 2);
    CHECK(aligned.other_user_beams == 1);
    CHECK(aligned.cancelled == 2);
    CHECK(aligned.extension == 6);
    CHECK(aligned.symbols_for(0) == 4);
    CHECK(aligned.symbols_for(2) == 3);

    CHECK_THROWS_AS(choose_extension_plan(3, 2, 1), std::invalid_argument);
    CHECK_THROWS_AS(choose_extension_plan(3, 3, 0), std::invalid_argument);
}

TEST_CASE("extension plans respect the cancellable bound", "[klk]")
{
    for (int k = 2; k <= 4; ++k)
        for (int l = k; l <= k * (k - 1) + 2; ++l)
            for (int n = 1; n <= 3; ++n) {
                const auto p = choose_extension_plan(k, l, n);
                CHECK(p.cancelled <= max_cancellable_symbols(k, l, p.extension));
                CHECK(p.extension >= p.cancelled + std::max(p.first_user_beams, p.other_user_beams));
                CHECK(p.cancelled >= 1);
                if (p.regime == KlkRegime::alignment)
                    CHECK(p.alignment_maps == (k - 1) * (k - 2) - 1);
            }
}

TEST_CASE("cancellation system shape and entries", "[klk]")
{
    Rng rng = make_rng(21);
    const auto a = oracle::gated_channels(rng, 3, 6, 2, kWindow);
    const ComplexMatrix sys = build_cancellation_system(a, 1);
    CHECK(sys.rows() == 12);
    CHECK(sys.cols() == 24);
    CHECK((sys - oracle::cancellation_system_by_columns(a, 1)).norm() < 1e-13 * sys.norm());

    const auto b = oracle::gated_channels(rng, 2, 3, 1, kWindow);
    const ComplexMatrix small = build_cancellation_system(b, 1);
    CHECK(small.rows() == 2);
    CHECK(small.cols() == 3);
    CHECK((small - oracle::cancellation_system_by_columns(b, 1)).norm() < 1e-13 * small.norm());

    const auto c = oracle::gated_channels(rng, 3, 3, 6, kWindow);
    CHECK((build_cancellation_system(c, 2) - oracle::cancellation_system_by_columns(c, 2)).norm() <
          1e-12 * build_cancellation_system(c, 2).norm());

    auto zero = a;
    for (auto& m : zero.first_hop)
        m.setZero();
    CHECK(build_cancellation_system(zero, 1).isZero(0.0));
    CHECK_THROWS_AS(build_cancellation_system(a, 0), std::invalid_argument);
    CHECK_THROWS_AS(build_cancellation_system(a, 3), std::invalid_argument);
}

TEST_CASE("null-space dimension of the cancellation system", "[klk]")
{
    struct Case {
        int k, l, n, n1;
    };
    for (const Case c : {Case{2, 3, 1, 1}, Case{3, 6, 2, 1}, Case{3, 3, 6, 2}}) {
        Rng rng = make_rng(100 + c.n);
        for (int draw = 0; draw < 10; ++draw) {
            const auto ch = oracle::gated_channels(rng, c.k, c.l, c.n, kWindow);
            const auto dim = nullspace_basis(build_cancellation_system(ch, c.n1), 1e-10).cols();
            CHECK(dim == c.l * c.n * c.n - c.k * (c.k - 1) * c.n1 * c.n);
        }
    }
}

TEST_CASE("solve_relay_gains on the single-extension network", "[klk]")
{
    Rng rng = make_rng(5);
    const auto plan = choose_extension_plan(2, 3, 1);
    for (int draw = 0; draw < 20; ++draw) {
        const auto ch = oracle::gated_channels(rng, 2, 3, 1, kWindow);
        GainSolverOptions opts;
        opts.seed = static_cast<std::uint64_t>(draw);
        const auto gains = solve_relay_gains(build_cancellation_system(ch, 1), plan, ch, kWindow, PowerBudget(100.0),
                                             opts);
        REQUIRE(gains.gains.size() == 3);
        CHECK(gains.scale > 0.0);
        // interference sums written out per destination
        for (int k = 0; k < 2; ++k) {
            const int i = 1 - k;
            Complex cross = 0.0;
            double magnitude = 0.0;
            for (int j = 0; j < 3; ++j) {
                const Complex term = ch.hop2(k, j)(0, 0) * gains.gains[j](0, 0) * ch.hop1(j, i)(0, 0);
                cross += term;
                magnitude += std::abs(term);
            }
            CHECK(std::abs(cross) <= 1e-10 * magnitude);
        }
    }
}

TEST_CASE("solve_relay_gains cancels the cancelled directions", "[klk]")
{
    Rng rng = make_rng(6);
    const auto plan = choose_extension_plan(3, 6, 1);
    for (int draw = 0; draw < 20; ++draw) {
        const auto ch = oracle::gated_channels(rng, 3, 6, 2, kWindow);
        GainSolverOptions opts;
        opts.seed = static_cast<std::uint64_t>(draw);
        const auto gains =
            solve_relay_gains(build_cancellation_system(ch, 1), plan, ch, kWindow, PowerBudget(10.0), opts);
        const auto eff = effective_extended_channel(ch, gains);
        CHECK(cross_residual(eff, 1) <= 1e-9);
        const ComplexMatrix dirs = oracle::dft(2).leftCols(1);
        for (int k = 0; k < 3; ++k)
            CHECK((eff(k, k) * dirs).norm() >= 1e-3 * eff.max_norm());
    }
}

TEST_CASE("solve_relay_gains reports an empty null space", "[klk]")
{
    Rng rng = make_rng(8);
    const auto ch = oracle::gated_channels(rng, 3, 6, 2, kWindow);
    const auto plan = manual_plan(3, 6, 2, 2);
    CHECK_THROWS_AS(solve_relay_gains(build_cancellation_system(ch, 2), plan, ch, kWindow, PowerBudget(1.0)),
                    NoNontrivialSolution);
}

TEST_CASE("solve_relay_gains reports degenerate desired gains", "[klk]")
{
    Rng rng = make_rng(9);
    auto ch = oracle::gated_channels(rng, 2, 3, 1, kWindow);
    // Destination 0 hears nothing, so its desired gain is identically zero.
    for (int j = 0; j < 3; ++j)
        ch.second_hop[static_cast<std::size_t>(j)].setZero();
    const auto plan = choose_extension_plan(2, 3, 1);
    CHECK_THROWS_AS(solve_relay_gains(build_cancellation_system(ch, 1), plan, ch, kWindow, PowerBudget(1.0)),
                    DesiredGainDegenerate);
}

TEST_CASE("effective channels are sums of relay products", "[klk]")
{
    const ComplexMatrix h1 = oracle::random_matrix(1, 1, 2);
    const ComplexMatrix h2 = oracle::random_matrix(2, 2, 1);
    const std::vector<ComplexMatrix> s1{h1}, s2{h2};
    const auto ch = extend_slots(s1, s2);
    RelayGainSet unit{{ComplexMatrix::Ones(1, 1)}, 1.0};
    const auto eff = effective_extended_channel(ch, unit);
    for (int k = 0; k < 2; ++k)
        for (int i = 0; i < 2; ++i)
            CHECK(std::abs(eff(k, i)(0, 0) - h2(k, 0) * h1(0, i)) < 1e-15);

    Rng rng = make_rng(10);
    const auto big = oracle::gated_channels(rng, 3, 4, 3, kWindow);
    RelayGainSet random;
    for (int j = 0; j < 4; ++j)
        random.gains.push_back(oracle::random_matrix(50 + j, 3, 3));
    const auto g = effective_extended_channel(big, random);
    for (int k = 0; k < 3; ++k)
        for (int i = 0; i < 3; ++i)
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) {
                    Complex sum = 0.0;
                    for (int j = 0; j < 4; ++j)
                        sum += big.hop2(k, j)(r, r) * random.gains[j](r, c) * big.hop1(j, i)(c, c);
                    CHECK(std::abs(g(k, i)(r, c) - sum) < 1e-12);
                }

    RelayGainSet zero;
    for (int j = 0; j < 4; ++j)
        zero.gains.push_back(ComplexMatrix::Zero(3, 3));
    const auto z = effective_extended_channel(big, zero);
    for (const auto& m : z.channels)
        CHECK(m.isZero(0.0));
}

TEST_CASE("common gain scaling scales effective channels and leaves ZF output unchanged", "[klk]")
{
    Rng rng = make_rng(12);
    const auto plan = choose_extension_plan(3, 6, 1);
    const auto ch = oracle::gated_channels(rng, 3, 6, 2, kWindow);
    auto gains = solve_relay_gains(build_cancellation_system(ch, 1), plan, ch, kWindow, PowerBudget(1.0));
    gains.scale = 1.0;
    auto scaled = gains;
    for (auto& g : scaled.gains)
        g *= 3.5;
    const auto a = effective_extended_channel(ch, gains);
    const auto b = effective_extended_channel(ch, scaled);
    const ComplexMatrix dirs = cancelled_symbol_directions(2, 1);
    const ComplexVector s0 = oracle::random_matrix(77, 1, 1).col(0);
    for (int k = 0; k < 3; ++k) {
        for (int i = 0; i < 3; ++i)
            CHECK((b(k, i) - 3.5 * a(k, i)).norm() < 1e-12 * b(k, i).norm() + 1e-15);
        const ComplexVector ya = a(k, k) * dirs * s0;
        const ComplexVector yb = b(k, k) * dirs * s0;
        const ComplexMatrix none(2, 0);
        CHECK((zero_forcing_decode(ya, a(k, k) * dirs, none) - zero_forcing_decode(yb, b(k, k) * dirs, none)).norm() <
              1e-10);
    }
}

TEST_CASE("relay power normalization", "[klk]")
{
    Rng rng = make_rng(13);
    const auto plan = choose_extension_plan(3, 6, 1);
    const auto ch = oracle::gated_channels(rng, 3, 6, 2, kWindow);
    const PowerBudget budget(1000.0);
    const auto gains = solve_relay_gains(build_cancellation_system(ch, 1), plan, ch, kWindow, budget);
    const ComplexMatrix dirs = cancelled_symbol_directions(2, 1);
    const std::vector<ComplexMatrix> precoders(3, dirs);
    const double scale =
        relay_power_scale(ch, gains.gains, precoders, budget, PowerNormalization::realized, kWindow);

    // Per-relay power written out: noise plus every source through its precoder.
    double worst = 0.0;
    for (int j = 0; j < 6; ++j) {
        const ComplexMatrix g = scale * gains.gains[j];
        double p = g.squaredNorm();
        for (int i = 0; i < 3; ++i)
            p += budget.power() * (g * ch.hop1(j, i) * dirs).squaredNorm();
        CHECK(p <= 2 * budget.power() * (1.0 + 1e-12));
        worst = std::max(worst, p);
    }
    CHECK(worst == Approx(2 * budget.power()).epsilon(1e-12));

    const double cautious =
        relay_power_scale(ch, gains.gains, precoders, budget, PowerNormalization::worst_case, kWindow);
    CHECK(cautious <= scale);
}

TEST_CASE("per-user DoF of the alignment plan", "[klk]")
{
    const auto d = per_user_dof_bounds(choose_extension_plan(3, 3, 1));
    CHECK(d.first_user == Rational(4, 6));
    CHECK(d.other_users == Rational(3, 6));
    CHECK(d.first_user_bound == Rational(5, 20));
    CHECK(d.other_users_bound == Rational(2, 20));
    CHECK(d.first_user_bound <= d.first_user);
    CHECK(d.other_users_bound <= d.other_users);

    Rational previous(0);
    for (int n = 1; n <= 60; ++n) {
        const auto p = per_user_dof_bounds(choose_extension_plan(3, 3, n));
        const Rational total = p.sum(3);
        CHECK(total >= previous);
        CHECK(total < dof_formula_af(3, 3));
        previous = total;
    }
    CHECK(to_double(previous) > 2.2);

    for (int k = 3; k <= 4; ++k)
        for (int l = k; l < k * (k - 1); ++l) {
            const auto p = per_user_dof_bounds(choose_extension_plan(k, l, 1));
            CHECK(p.first_user > Rational(0));
            CHECK(p.first_user <= Rational(1));
            CHECK(p.other_users > Rational(0));
            CHECK(p.other_users <= Rational(1));
        }
    CHECK_THROWS_AS(per_user_dof_bounds(choose_extension_plan(3, 6, 1)), std::invalid_argument);
}
