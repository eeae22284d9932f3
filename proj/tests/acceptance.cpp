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


// Acceptance run: one [PASS]/[FAIL] line per criterion. Exit status is the
// number of failed criteria.

#include "oracles.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

using namespace relaydof;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

struct Criterion {
    const char* id;
    const char* name;
    double time_limit_s; // <= 0: no limit
    std::function<Outcome()> run;
};

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

Outcome check_formula_table()
{
    long checked = 0;
    bool ok = true;
    for (int k = 2; k <= 8; ++k)
        for (int l = k; l <= 100; ++l) {
            const Rational v = dof_formula_af(k, l);
            const Rational expected = std::min(Rational(k), Rational(k, 2) + Rational(l, 2 * (k - 1)));
            ok = ok && v == expected && ((v == Rational(k)) == (l >= k * (k - 1)));
            ++checked;
        }
    return {ok, std::to_string(checked) + " (K,L) pairs exact"};
}

Outcome check_cancellation_exactness()
{
    struct Case {
        int k, l, n, n1;
    };
    const GatingWindow window(0.1, 2.0);
    double worst = 0.0;
    int dim_mismatch = 0;
    int draws = 0;
    for (const Case c : {Case{2, 3, 1, 1}, Case{3, 6, 2, 1}}) {
        Rng rng = make_rng(2024, static_cast<std::uint64_t>(c.l));
        const auto plan = choose_extension_plan(c.k, c.l, 1);
        for (int d = 0; d < 100; ++d, ++draws) {
            const auto ch = oracle::gated_channels(rng, c.k, c.l, c.n, window);
            const ComplexMatrix system = build_cancellation_system(ch, c.n1);
            const auto dim = nullspace_basis(system, 1e-10).cols();
            if (dim != c.l * c.n * c.n - c.k * (c.k - 1) * c.n1 * c.n)
                ++dim_mismatch;
            GainSolverOptions opts;
            opts.seed = static_cast<std::uint64_t>(d);
            auto gains = solve_relay_gains(system, plan, ch, window, PowerBudget(1.0), opts);
            const auto eff = effective_extended_channel(ch, gains);
            const ComplexMatrix dirs = oracle::dft(c.n).leftCols(c.n1);
            for (int k = 0; k < c.k; ++k)
                for (int i = 0; i < c.k; ++i)
                    if (i != k)
                        worst = std::max(worst, (eff(k, i) * dirs).colwise().norm().maxCoeff() / eff.max_norm());
        }
    }
    return {worst <= 1e-9 && dim_mismatch == 0,
            std::to_string(draws) + " draws, max residual " + fmt("%.2e", worst) + ", null-dim mismatches " +
                std::to_string(dim_mismatch)};
}

Outcome check_klk_slopes()
{
    KlkSimulationConfig a;
    a.plan = choose_extension_plan(2, 3, 1);
    a.trials = 500;
    a.seed = 11;
    const auto ra = simulate_klk_transmission(a);
    KlkSimulationConfig b;
    b.plan = choose_extension_plan(3, 6, 1);
    b.trials = 500;
    b.seed = 12;
    const auto rb = simulate_klk_transmission(b);
    const bool ok = b.plan.extension == 2 && b.plan.cancelled == 1 && std::abs(ra.slope - 2.0) <= 0.15 &&
                    std::abs(rb.slope - 1.5) <= 0.15;
    return {ok, "K=2,L=3 slope " + fmt("%.3f", ra.slope) + fmt(" +- %.3f", ra.slope_half_width) +
                    "; K=3,L=6 slope " + fmt("%.3f", rb.slope) + fmt(" +- %.3f", rb.slope_half_width)};
}

Outcome check_scaled_identity()
{
    double residual = 0.0;
    double norm_dev = 0.0;
    for (int k : {2, 4}) {
        Rng rng = make_rng(404, static_cast<std::uint64_t>(k));
        for (int d = 0; d < 1000; ++d) {
            const ComplexMatrix h = draw_matrix(rng, k, k);
            residual = std::max(residual, verify_scaled_identity(h).residual);
            for (int m = 1; m <= k; ++m)
                norm_dev = std::max(norm_dev, std::abs(pairing_stage(h, m).f.norm() - h.norm()) / h.norm());
        }
    }
    return {residual <= 1e-9 && norm_dev <= 1e-12,
            "max residual " + fmt("%.2e", residual) + ", max norm deviation " + fmt("%.2e", norm_dev)};
}

Outcome check_round_trip()
{
    Rng rng = make_rng(505);
    double worst = 0.0;
    for (int d = 0; d < 1000; ++d) {
        const ComplexMatrix h = draw_matrix(rng, 4, 4);
        for (int m = 1; m <= 4; ++m)
            worst = std::max(worst, (invert_pairing_stage(pairing_stage(h, m).f, m) - h).norm() / h.norm());
    }
    return {worst <= 1e-10, "max relative error " + fmt("%.2e", worst)};
}

Outcome check_stage_statistics()
{
    const auto r = distribution_symmetry_check(10000, 2, 2, 606);
    return {r.combined_p_value > 0.01 && r.max_norm_deviation <= 1e-12,
            "Bonferroni p " + fmt("%.3f", r.combined_p_value) + " (min marginal p " + fmt("%.3f", r.min_p_value) +
                ", max D " + fmt("%.4f", r.max_statistic) + ")"};
}

Outcome check_khop_slopes()
{
    KhopSimulationConfig cfg;
    cfg.delta = 1e-3;
    cfg.trials = 300;
    cfg.users = 2;
    cfg.seed = 71;
    const auto two = simulate_khop(cfg);
    cfg.users = 4;
    cfg.seed = 72;
    const auto four = simulate_khop(cfg);
    const bool ok = std::abs(two.slope - 2.0) <= 0.2 && std::abs(four.slope - 4.0) <= 0.4;
    return {ok, "K=2 slope " + fmt("%.3f", two.slope) + fmt(" +- %.3f", two.slope_half_width) + "; K=4 slope " +
                    fmt("%.3f", four.slope) + fmt(" +- %.3f", four.slope_half_width) + " (bound metric " +
                    fmt("%.3f", four.diagnostics.at("bound_metric_slope")) + ")"};
}

Outcome check_error_scaling()
{
    const GatingWindow window(0.1, 10.0);
    std::vector<double> medians;
    for (double delta : {1e-1, 5e-2, 2.5e-2}) {
        Rng rng = make_rng(808);
        std::vector<double> e;
        for (int d = 0; d < 500; ++d) {
            const auto chain = draw_genie_chain(rng, 4, delta, window);
            e.push_back(total_quantization_error(chain.hops, chain.ideal).norm());
        }
        std::sort(e.begin(), e.end());
        medians.push_back(0.5 * (e[249] + e[250]));
    }
    bool ok = true;
    std::string detail = "medians";
    for (double m : medians)
        detail += fmt(" %.4f", m);
    detail += ", ratios";
    for (std::size_t i = 1; i < medians.size(); ++i) {
        const double ratio = medians[i] / medians[i - 1];
        ok = ok && medians[i] < medians[i - 1] && ratio >= 0.4 && ratio <= 0.6;
        detail += fmt(" %.3f", ratio);
    }
    return {ok, detail};
}

Outcome check_af_vs_df()
{
    bool ok = true;
    for (int k = 2; k <= 5; ++k)
        for (int l = k; l <= 200; ++l)
            ok = ok && dof_formula_af(k, l) >= dof_formula_df(k, l);
    const auto iv = af_df_crossover(7);
    ok = ok && dof_formula_df(7, 15) == Rational(5) && dof_formula_af(7, 15) == Rational(19, 4) && iv &&
         iv->first < 15.0 && 15.0 < iv->second;
    return {ok, iv ? "K=7 interval (" + fmt("%.2f", iv->first) + ", " + fmt("%.2f", iv->second) + ")" : "no interval"};
}

Outcome check_alignment_verifier()
{
    const auto plan = choose_extension_plan(3, 3, 1);
    const GatingWindow window(0.1, 2.0);
    Rng rng = make_rng(1010);
    int passed = 0;
    int recovered = 0;
    double worst = 0.0;
    const int draws = 100;
    for (int d = 0; d < draws; ++d) {
        const auto ch = oracle::gated_channels(rng, 3, 3, plan.extension, window);
        GainSolverOptions opts;
        opts.seed = static_cast<std::uint64_t>(d);
        auto gains = solve_relay_gains(build_cancellation_system(ch, plan.cancelled), plan, ch, window,
                                       PowerBudget(1.0), opts);
        gains.scale = 1.0;
        const auto eff = effective_extended_channel(ch, gains);
        const auto aligned = align_beams(eff, plan, static_cast<std::uint64_t>(d));
        if (!aligned.report.pass())
            continue;
        ++passed;
        // transmit random symbols from every source, noiseless
        std::vector<ComplexVector> symbols;
        std::vector<ComplexMatrix> precoders;
        for (int i = 0; i < 3; ++i) {
            precoders.push_back(source_precoder(plan, &aligned.beams, i));
            symbols.push_back(draw_matrix(rng, precoders.back().cols(), 1).col(0));
        }
        bool all = true;
        for (int k = 0; k < 3; ++k) {
            ComplexVector y = ComplexVector::Zero(plan.extension);
            for (int i = 0; i < 3; ++i)
                y += eff(k, i) * precoders[i] * symbols[i];
            const auto [desired, interference] = destination_bases(eff, plan, &aligned.beams, k);
            const double err = (zero_forcing_decode(y, desired, interference) - symbols[k]).cwiseAbs().maxCoeff();
            worst = std::max(worst, err);
            all = all && err <= 1e-8;
        }
        recovered += all ? 1 : 0;
    }
    return {recovered == passed, "pass rate " + fmt("%.2f", static_cast<double>(passed) / draws) + ", exact recovery on " +
                                     std::to_string(recovered) + "/" + std::to_string(passed) +
                                     " passing draws, max error " + fmt("%.1e", worst)};
}

Outcome check_queued_pairing()
{
    KhopSimulationConfig cfg;
    cfg.users = 2;
    cfg.mode = KhopMode::queued;
    cfg.delta = 0.5;
    cfg.horizon = 100000;
    cfg.seed = 1111;
    const auto r = simulate_khop(cfg);
    const auto& g = r.diagnostics;
    const bool conserved = g.at("conservation_ok") == 1.0 &&
                           g.at("blocks_enqueued") ==
                               g.at("blocks_forwarded") + g.at("blocks_pending") + g.at("blocks_dropped");
    const bool ok = conserved && g.at("bound_violations") == 0.0 && g.at("blocks_forwarded") > 0.0;
    return {ok, fmt("%.0f", g.at("blocks_forwarded")) + " deliveries, " + fmt("%.0f", g.at("bound_violations")) +
                    " bound violations, max residual/bound " + fmt("%.3f", g.at("max_residual_to_bound")) +
                    ", conservation " + (conserved ? "exact" : "broken")};
}

} // namespace

int main()
{
    const std::vector<Criterion> criteria{
        {"AC1", "AF DoF formula table", 1.0, check_formula_table},
        {"AC2", "cancellation exactness", 30.0, check_cancellation_exactness},
        {"AC3", "K-L-K DoF slope", 300.0, check_klk_slopes},
        {"AC4", "scaled-identity stage product", 30.0, check_scaled_identity},
        {"AC5", "stage inversion round trip", 30.0, check_round_trip},
        {"AC6", "stage-map distribution", 60.0, check_stage_statistics},
        {"AC7", "K-hop DoF slope (genie)", 600.0, check_khop_slopes},
        {"AC8", "quantization error scaling", 120.0, check_error_scaling},
        {"AC9", "AF/DF comparison", 1.0, check_af_vs_df},
        {"AC10", "alignment verifier consistency", 0.0, check_alignment_verifier},
        {"AC11", "queued pairing", 120.0, check_queued_pairing},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o{false, ""};
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = c.time_limit_s <= 0.0 || seconds < c.time_limit_s;
        const bool pass = o.pass && in_time;
        failures += pass ? 0 : 1;
        std::printf("[%s] %s %s: %s (%.2f s%s)\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), seconds,
                    in_time ? "" : ", over time limit");
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures;
}
