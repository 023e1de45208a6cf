// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <CLI11.hpp>
#include <cstdint>
#include <iostream>
#include <string>

#include "bff/pipeline.hpp"
#include "bff/toml.hpp"

namespace {

const char* const kVerbs[] = {"generate", "flow",     "seed",  "simulate",
                              "beamform", "localize", "track", "evaluate",
                              "render",   "pipeline"};

const char* const kHelp[] = {
    "grow the vessel network",
    "solve steady flow on the network",
    "draw bubble events from the flow field",
    "synthesize RF (builds missing upstream pieces) and beamform",
    "beamform RF into B-mode images",
    "localize bubbles in the B-mode frames",
    "link localizations into tracks",
    "score predictions against the ground truth",
    "render super-resolution and velocity maps",
    "run every stage end to end"};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bff: batch simulation of contrast-enhanced ultrasound"};
    app.set_version_flag("--version", std::string(bff::pipeline::kVersion));
    app.require_subcommand(1);

    std::string config_path;
    std::string out_override;
    std::int64_t seed_override = -1;
    bool have_seed = false;

    for (std::size_t i = 0; i < std::size(kVerbs); ++i) {
        CLI::App* sub = app.add_subcommand(kVerbs[i], kHelp[i]);
        sub->add_option("--config", config_path, "pipeline config (TOML)")
            ->required();
        sub->add_option("--seed", seed_override, "override the master seed")
            ->each([&](const std::string&) { have_seed = true; });
        sub->add_option("--out", out_override, "override the output directory");
    }

    CLI11_PARSE(app, argc, argv);
    const std::string verb = app.get_subcommands()[0]->get_name();

    try {
        bff::pipeline::PipelineConfig cfg =
            bff::pipeline::PipelineConfig::from_toml(
                bff::toml::parse_file(config_path));
        if (have_seed)
            cfg.seed = static_cast<std::uint64_t>(seed_override);
        const std::filesystem::path out =
            out_override.empty() ? std::filesystem::path(cfg.output_dir)
                                 : std::filesystem::path(out_override);
        bff::pipeline::run_command(verb, cfg, out);
    } catch (const std::exception& e) {
        std::cerr << "bff " << verb << ": " << e.what() << '\n';
        return 1;
    }
    return 0;
}
