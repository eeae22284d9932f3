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

#include <mutex>

using namespace relaydof;

namespace {

KlkSimulationConfig config(int k, int l, int trials, std::uint64_t seed)
{
    KlkSimulationConfig cfg;
    cfg.plan = choose_extension_plan(k, l, 1);
    cfg.trials = trials;
    cfg.seed = seed;
    return cfg;
}

} // namespace

TEST_CASE("two users over three relays reach slope 2", "[klk-sim]")
{
    const auto r = simulate_klk_transmission(config(2, 3, 500, 1));
    INFO("slope " << r.slope << " +- " << r.slope_half_width);
    CHECK(std::abs(r.slope - 2.0) <= 0.15);
    CHECK(r.failures.front() == 0);
}

TEST_CASE("boundary regime with a two-slot extension reaches slope 1.5", "[klk-sim]")
{
    const auto r = simulate_klk_transmission(config(3, 6, 500, 2));
    INFO("slope " << r.slope << " +- " << r.slope_half_width);
    CHECK(std::abs(r.slope - 1.5) <= 0.15);
}

TEST_CASE("noiseless transmission decodes exactly", "[klk-sim]")
{
    for (const auto& [k, l] : {std::pair{2, 3}, std::pair{3, 6}, std::pair{3, 7}, std::pair{3, 3}}) {
        auto cfg = config(k, l, 30, 3);
        cfg.noiseless = true;
        const auto r = simulate_klk_transmission(cfg);
        INFO("K=" << k << " L=" << l);
        CHECK(r.failures.front() == 0);
        CHECK(r.diagnostics.at("max_noiseless_error") <= 1e-8);
        if (k == 3 && l == 3)
            CHECK(r.diagnostics.at("alignment_pass_rate") == 1.0);
    }
}

TEST_CASE("per-user rate grows with power", "[klk-sim]")
{
    auto cfg = config(3, 6, 200, 4);
    cfg.snr_db = {0.0, 10.0, 20.0, 30.0, 40.0};
    const auto r = simulate_klk_transmission(cfg);
    for (std::size_t p = 1; p < r.snr_db.size(); ++p)
        for (std::size_t k = 0; k < 3; ++k)
            CHECK(r.user_rates[p][k] >= r.user_rates[p - 1][k]);
    for (const auto& row : r.user_rates)
        for (double v : row)
            CHECK(v >= 0.0);
}

TEST_CASE("results depend only on the seed", "[klk-sim]")
{
    auto a = config(2, 3, 40, 9);
    a.threads = 1;
    auto b = a;
    b.threads = 3;
    const auto ra = simulate_klk_transmission(a);
    const auto rb = simulate_klk_transmission(b);
    CHECK(ra.user_rates == rb.user_rates);
    CHECK(ra.slope == rb.slope);
    auto c = a;
    c.seed = 10;
    CHECK(simulate_klk_transmission(c).user_rates != ra.user_rates);
}

TEST_CASE("failed trials are counted without aborting", "[klk-sim]")
{
    auto cfg = config(3, 3, 12, 5);
    cfg.beams = [](const EffectiveChannelSet&, const ExtensionPlan&, std::uint64_t) -> BeamformerSet {
        throw SingularEffectiveChannel("forced");
    };
    const auto r = simulate_klk_transmission(cfg);
    CHECK(r.failures.front() == 12);
    CHECK(r.trials.front() == 12);
    CHECK(std::isnan(r.slope));
}

TEST_CASE("an infeasible plan is rejected up front", "[klk-sim]")
{
    auto cfg = config(3, 6, 5, 1);
    cfg.plan.cancelled = 2;
    CHECK_THROWS_AS(simulate_klk_transmission(cfg), std::invalid_argument);
}

TEST_CASE("alignment pass implies noiseless recovery on the same draw", "[klk-sim]")
{
    // A provider that records every verdict lets each trial be matched.
    std::vector<int> verdicts;
    std::mutex lock;
    auto cfg = config(3, 3, 40, 6);
    cfg.noiseless = true;
    cfg.threads = 1;
    cfg.beams = [&](const EffectiveChannelSet& eff, const ExtensionPlan& plan, std::uint64_t seed) {
        auto aligned = align_beams(eff, plan, seed);
        std::lock_guard g(lock);
        verdicts.push_back(aligned.report.pass() ? 1 : 0);
        return aligned.beams;
    };
    const auto r = simulate_klk_transmission(cfg);
    CHECK(r.failures.front() == 0);
    CHECK(r.diagnostics.at("max_noiseless_error") <= 1e-8);
    CHECK(static_cast<double>(std::count(verdicts.begin(), verdicts.end(), 1)) / verdicts.size() ==
          r.diagnostics.at("alignment_pass_rate"));
}
