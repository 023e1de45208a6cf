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

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include "bff/acoustics.hpp"
#include "bff/bubble.hpp"
#include "bff/eval.hpp"
#include "bff/flow.hpp"
#include "bff/network.hpp"
#include "bff/toml.hpp"
#include "bff/tracks.hpp"

// One TOML config drives the whole chain: generate -> flow -> seed ->
// simulate -> beamform -> localize -> track -> evaluate -> render. Every
// stage reads and writes files under a single output directory, so a dataset
// is reproducible from its config alone.
namespace bff::pipeline {

inline constexpr const char* kVersion = "0.1.0";

struct PipelineError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NetworkSection {
    net::GenConfig gen;
    int merge_count = 1;      // >1 overlays extra independently-seeded trees
    double merge_shift = 0.0; // x offset between successive trees, m
};

struct FlowSection {
    flow::FluidParams fluid;
    // Pa at the widest hanging node per component; sized for mm/s-scale
    // capillary speeds so bubbles persist across frames at video rates
    double inlet_pressure = 200.0;
    double outlet_pressure = 0.0;    // Pa at every other hanging node
    std::map<int, double> node_pressure;  // explicit overrides win outright
};

struct BubblesSection {
    std::string kind = "sonovue";  // "sonovue" or "custom"
    bubble::BubbleParams custom;   // used when kind == "custom"
    int count = 100;
    double frame_rate = 100.0;  // Hz
    int n_frames = 50;
    std::string radial_law = "area_uniform";  // or "flux_weighted"

    bubble::BubbleParams params() const;
    tracks::EventOptions event_options() const;
};

struct ImagingSection {
    acoustics::ImageGrid grid;
    double dynamic_range = 60.0;  // dB
    int sr_upscale = 4;           // render grid refinement over the B-mode grid
};

struct EvaluationSection {
    double radius = 0.0;        // m; 0 derives lambda/2 at the tx frequency
    double threshold_db = -30.0;
    double min_sep = 0.0;       // m; 0 derives lambda/2
    double max_link = 0.0;      // m; 0 derives lambda
    bool planar = true;         // score against ground truth projected to y=0
};

struct PipelineConfig {
    std::string preset_name = "base";
    std::uint64_t seed = 1;
    std::string output_dir = "out";
    NetworkSection network;
    FlowSection flow;
    BubblesSection bubbles;
    acoustics::TransducerConfig tx;
    acoustics::NoiseConfig noise;
    ImagingSection imaging;
    EvaluationSection evaluation;

    toml::Table to_toml() const;
    /// Parses a config file. A top-level `preset = "<name>"` key seeds every
    /// field from that preset; sections present in the table override it.
    static PipelineConfig from_toml(const toml::Table& t);
    /// "base", "training", "challenge", "desk_scale", "hf", "lf".
    static PipelineConfig preset(const std::string& name);

    void validate() const;
    double wavelength() const { return tx.c / tx.f0; }
    double eval_radius() const;
    double eval_min_sep() const;
    double eval_max_link() const;
    /// Canonical serialized form; hashing it identifies the dataset.
    std::string canonical_text() const;
    std::uint64_t config_hash() const;
};

struct DatasetManifest {
    std::string tool_version;
    std::string config_hash;  // hex
    std::map<std::string, std::string> files;  // artifact kind -> relative path

    void write(const std::filesystem::path& path) const;
    static DatasetManifest read(const std::filesystem::path& path);
};

/// Deterministic per-stage seed: child `index` of the master's named stream.
std::uint64_t stage_seed(std::uint64_t master, std::string_view stage,
                         std::uint64_t index = 0);

// Each command consumes/produces only its declared files under `out` and
// refreshes manifest.json. Upstream artifacts are never rewritten by a
// downstream stage; `cmd_simulate` fills in missing upstream pieces once.
void cmd_generate(const PipelineConfig& cfg, const std::filesystem::path& out);
void cmd_flow(const PipelineConfig& cfg, const std::filesystem::path& out);
void cmd_seed(const PipelineConfig& cfg, const std::filesystem::path& out);
void cmd_simulate(const PipelineConfig& cfg, const std::filesystem::path& out);
void cmd_beamform(const PipelineConfig& cfg, const std::filesystem::path& out);
void cmd_localize(const PipelineConfig& cfg, const std::filesystem::path& out);
void cmd_track(const PipelineConfig& cfg, const std::filesystem::path& out);
void cmd_evaluate(const PipelineConfig& cfg, const std::filesystem::path& out);
void cmd_render(const PipelineConfig& cfg, const std::filesystem::path& out);
void cmd_pipeline(const PipelineConfig& cfg, const std::filesystem::path& out);

/// Dispatch by verb name; throws PipelineError on unknown commands, and
/// prefixes any stage failure with the stage name.
void run_command(const std::string& verb, const PipelineConfig& cfg,
                 const std::filesystem::path& out);

}  // namespace bff::pipeline
