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


// Command-line runner: relaydof_cli <klk|khop|formulas|pairing-stats> [options]

#include "relaydof/relaydof.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

namespace {

using relaydof::ExperimentConfig;
using relaydof::Scheme;

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string format = "csv";
};

void add_common(CLI::App& cmd, Options& opt)
{
    cmd.add_option("--config", opt.config, "JSON experiment config")->check(CLI::ExistingFile);
    cmd.add_option("--seed", opt.seed, "master seed (overrides the config)");
    cmd.add_option("--out", opt.out, "results file (default: stdout)");
    cmd.add_option("--format", opt.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
}

ExperimentConfig defaults_for(Scheme scheme)
{
    ExperimentConfig cfg;
    cfg.scheme = scheme;
    switch (scheme) {
    case Scheme::khop_genie:
    case Scheme::khop_queued:
        cfg.g_max = 10.0;
        break;
    case Scheme::formulas:
        cfg.K = 3;
        cfg.L = 3;
        cfg.L_max = 12;
        break;
    case Scheme::pairing_stats:
        cfg.trials = 10000;
        break;
    default:
        break;
    }
    return cfg;
}

int run(Scheme subcommand, const Options& opt)
{
    ExperimentConfig cfg = defaults_for(subcommand);
    if (!opt.config.empty()) {
        cfg = relaydof::load_config(opt.config);
        const bool khop = subcommand == Scheme::khop_genie;
        const bool matches = khop ? (cfg.scheme == Scheme::khop_genie || cfg.scheme == Scheme::khop_queued)
                                  : cfg.scheme == subcommand;
        if (!matches)
            throw relaydof::ValidationError("scheme", "config scheme '" + std::string(relaydof::to_string(cfg.scheme)) +
                                                          "' does not match the subcommand");
    }
    if (opt.seed)
        cfg.seed = *opt.seed;
    if (!opt.out.empty())
        cfg.output = opt.out;
    const auto format = relaydof::parse_format(opt.format);

    const relaydof::ExperimentResult result = relaydof::run_experiment(cfg);
    if (cfg.output.empty()) {
        relaydof::emit_experiment(result, format, std::cout);
        std::cerr << relaydof::manifest_line(cfg) << '\n';
    } else {
        relaydof::emit_experiment(result, format, cfg.output);
        relaydof::write_manifest(cfg, cfg.output);
    }
    std::cerr << result.summary << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Degrees-of-freedom simulations for AF relay networks"};
    app.require_subcommand(1);
    Options klk_opt, khop_opt, formulas_opt, stats_opt;
    auto* klk = app.add_subcommand("klk", "K-L-K cancellation and alignment simulation");
    auto* khop = app.add_subcommand("khop", "K-hop opportunistic pairing simulation (genie or queued)");
    auto* formulas = app.add_subcommand("formulas", "AF / DF / cut-set DoF table");
    auto* stats = app.add_subcommand("pairing-stats", "norm and marginal statistics of F_m(H)");
    add_common(*klk, klk_opt);
    add_common(*khop, khop_opt);
    add_common(*formulas, formulas_opt);
    add_common(*stats, stats_opt);
    CLI11_PARSE(app, argc, argv);

    try {
        if (*klk)
            return run(Scheme::klk, klk_opt);
        if (*khop)
            return run(Scheme::khop_genie, khop_opt);
        if (*formulas)
            return run(Scheme::formulas, formulas_opt);
        return run(Scheme::pairing_stats, stats_opt);
    } catch (const relaydof::ValidationError& e) {
        std::cerr << "invalid configuration: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
