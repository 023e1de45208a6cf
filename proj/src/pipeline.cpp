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

#include "bff/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <json.hpp>
#include <set>
#include <sstream>

#include "bff/rng.hpp"

namespace fs = std::filesystem;

namespace bff::pipeline {

namespace {

// ---- file layout under the output directory ----
fs::path p_network(const fs::path& o) { return o / "network.toml"; }
fs::path p_flow_edges(const fs::path& o) { return o / "flow_edges.csv"; }
fs::path p_flow_nodes(const fs::path& o) { return o / "flow_nodes.csv"; }
fs::path p_gt(const fs::path& o) { return o / "ground_truth.csv"; }
fs::path p_rf(const fs::path& o) { return o / "rf.bin"; }
fs::path p_rf_partial(const fs::path& o) { return o / "rf_partial.bin"; }
fs::path p_rf_progress(const fs::path& o) { return o / "rf_progress.json"; }
fs::path p_bmode_dir(const fs::path& o) { return o / "bmode"; }
fs::path p_pred(const fs::path& o) { return o / "predictions.csv"; }
fs::path p_tracked(const fs::path& o) { return o / "tracked.csv"; }
fs::path p_report(const fs::path& o) { return o / "report.json"; }
fs::path p_manifest(const fs::path& o) { return o / "manifest.json"; }

std::string frame_stem(int f) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%04d", f);
    return buf;
}

std::string hash_hex(std::uint64_t h) {
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << h;
    return s.str();
}

void overlay(toml::Table& base, const toml::Table& over) {
    for (const auto& [k, v] : over) {
        toml::Value* slot = base.find(k);
        if (slot && slot->is_table() && v->is_table())
            overlay(slot->as_table(), v->as_table());
        else
            base.get_or_insert(k) = *v;
    }
}

void update_manifest(const fs::path& out, const PipelineConfig& cfg,
                     const std::map<std::string, std::string>& entries) {
    DatasetManifest m;
    const std::string hash = hash_hex(cfg.config_hash());
    if (fs::exists(p_manifest(out))) {
        try {
            m = DatasetManifest::read(p_manifest(out));
        } catch (const std::exception&) {
            m = {};
        }
        if (m.config_hash != hash)
            m.files.clear();  // a different config owns this directory now
    }
    m.tool_version = kVersion;
    m.config_hash = hash;
    for (const auto& [k, v] : entries)
        m.files[k] = v;
    m.write(p_manifest(out));
}

void require_file(const fs::path& p, const std::string& producer) {
    if (!fs::exists(p))
        throw PipelineError("missing " + p.filename().string() + "; run '" +
                            producer + "' first");
}

flow::BoundaryConditions boundary_conditions(const net::VesselNetwork& net,
                                             const FlowSection& f) {
    flow::BoundaryConditions bc;
    if (!f.node_pressure.empty()) {
        bc.pressure = f.node_pressure;
        return bc;
    }
    // per connected component: the hanging node behind the widest vessel is
    // the inlet, every other hanging node drains at outlet pressure
    const auto& nodes = net.nodes();
    std::map<int, int> comp;
    int n_comp = 0;
    for (const auto& n : nodes) {
        if (comp.count(n.id))
            continue;
        std::vector<int> stack{n.id};
        comp[n.id] = n_comp;
        while (!stack.empty()) {
            const int id = stack.back();
            stack.pop_back();
            for (int ei : net.incident_edges(id)) {
                const auto& e = net.edges()[ei];
                const int other = e.src == id ? e.dst : e.src;
                if (!comp.count(other)) {
                    comp[other] = n_comp;
                    stack.push_back(other);
                }
            }
        }
        ++n_comp;
    }
    std::map<int, std::pair<double, int>> widest;  // comp -> (radius, node id)
    for (int id : net.hanging_nodes()) {
        const auto& e = net.edges()[net.incident_edges(id)[0]];
        const int c = comp.at(id);
        const auto it = widest.find(c);
        if (it == widest.end() || e.radius > it->second.first)
            widest[c] = {e.radius, id};
    }
    for (int id : net.hanging_nodes()) {
        const bool inlet = widest.at(comp.at(id)).second == id;
        bc.pressure[id] = inlet ? f.inlet_pressure : f.outlet_pressure;
    }
    return bc;
}

std::vector<std::vector<tracks::Event>> events_by_frame(
    const tracks::EventTable& gt, int n_frames) {
    std::vector<std::vector<tracks::Event>> by(n_frames);
    for (const tracks::Event& e : gt) {
        if (e.frame < 0 || e.frame >= n_frames)
            throw PipelineError("ground-truth frame " + std::to_string(e.frame) +
                                " outside the configured range");
        by[e.frame].push_back(e);
    }
    return by;
}

void write_field_f32(const fs::path& raw, const fs::path& side,
                     const std::string& kind, const acoustics::ImageGrid& g,
                     const std::vector<double>& values) {
    std::ofstream f(raw, std::ios::binary);
    if (!f)
        throw PipelineError("cannot write " + raw.string());
    for (double v : values) {
        const auto x = static_cast<float>(v);
        f.write(reinterpret_cast<const char*>(&x), sizeof x);
    }
    nlohmann::json j;
    j["kind"] = kind;
    j["nx"] = g.nx;
    j["nz"] = g.nz;
    j["x0"] = g.x0;
    j["z0"] = g.z0;
    j["dx"] = g.dx;
    j["dz"] = g.dz;
    std::ofstream js(side);
    if (!js)
        throw PipelineError("cannot write " + side.string());
    js << j.dump(2) << '\n';
}

acoustics::BModeImage read_bmode(const fs::path& raw, const fs::path& side) {
    std::ifstream js(side);
    if (!js)
        throw PipelineError("cannot open " + side.string());
    const nlohmann::json j = nlohmann::json::parse(js);
    acoustics::BModeImage bm;
    bm.grid.nx = j.at("nx").get<int>();
    bm.grid.nz = j.at("nz").get<int>();
    bm.grid.x0 = j.at("x0").get<double>();
    bm.grid.z0 = j.at("z0").get<double>();
    bm.grid.dx = j.at("dx").get<double>();
    bm.grid.dz = j.at("dz").get<double>();
    bm.dynamic_range = j.at("dynamic_range").get<double>();
    bm.peak = j.at("peak").get<double>();

    std::ifstream f(raw, std::ios::binary);
    if (!f)
        throw PipelineError("cannot open " + raw.string());
    const std::size_t n = bm.grid.size();
    std::vector<float> buf(n);
    f.read(reinterpret_cast<char*>(buf.data()),
           static_cast<std::streamsize>(n * sizeof(float)));
    if (static_cast<std::size_t>(f.gcount()) != n * sizeof(float))
        throw PipelineError("truncated image " + raw.string());
    bm.db.assign(buf.begin(), buf.end());
    bm.envelope.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        bm.envelope[i] =
            bm.peak > 0.0 ? bm.peak * std::pow(10.0, bm.db[i] / 20.0) : 0.0;
    return bm;
}

tracks::EventTable planar_gt(tracks::EventTable gt) {
    for (auto& e : gt)
        e.pos.y = 0.0;
    return gt;
}

}  // namespace

// ---- configuration ----

bubble::BubbleParams BubblesSection::params() const {
    if (kind == "sonovue")
        return bubble::sonovue_preset();
    if (kind == "custom") {
        bubble::BubbleParams p = custom;
        p.finalize();
        return p;
    }
    throw PipelineError("unknown bubble kind '" + kind + "'");
}

tracks::EventOptions BubblesSection::event_options() const {
    tracks::EventOptions o;
    if (radial_law == "area_uniform")
        o.radial_law = tracks::RadialLaw::AreaUniform;
    else if (radial_law == "flux_weighted")
        o.radial_law = tracks::RadialLaw::FluxWeighted;
    else
        throw PipelineError("unknown radial law '" + radial_law + "'");
    return o;
}

toml::Table PipelineConfig::to_toml() const {
    toml::Table t;
    t.insert("preset", preset_name);
    t.insert("seed", static_cast<std::int64_t>(seed));
    t.insert("output_dir", output_dir);

    toml::Table nt;
    nt.insert("merge_count", network.merge_count);
    nt.insert("merge_shift", network.merge_shift);
    nt.insert("gen", network.gen.to_toml());
    t.insert("network", std::move(nt));

    toml::Table ft;
    ft.insert("viscosity", flow.fluid.viscosity);
    ft.insert("density", flow.fluid.density);
    ft.insert("inlet_pressure", flow.inlet_pressure);
    ft.insert("outlet_pressure", flow.outlet_pressure);
    toml::Table nodes;
    for (const auto& [id, p] : flow.node_pressure)
        nodes.insert(std::to_string(id), p);
    ft.insert("nodes", std::move(nodes));
    t.insert("flow", std::move(ft));

    toml::Table bt;
    bt.insert("kind", bubbles.kind);
    bt.insert("count", bubbles.count);
    bt.insert("frame_rate", bubbles.frame_rate);
    bt.insert("n_frames", bubbles.n_frames);
    bt.insert("radial_law", bubbles.radial_law);
    if (bubbles.kind == "custom")
        bt.insert("custom", bubbles.custom.to_toml());
    t.insert("bubbles", std::move(bt));

    t.insert("transducer", tx.to_toml());
    t.insert("noise", noise.to_toml());

    toml::Table it;
    it.insert("dynamic_range", imaging.dynamic_range);
    it.insert("sr_upscale", imaging.sr_upscale);
    it.insert("grid", imaging.grid.to_toml());
    t.insert("imaging", std::move(it));

    toml::Table et;
    et.insert("radius", evaluation.radius);
    et.insert("threshold_db", evaluation.threshold_db);
    et.insert("min_sep", evaluation.min_sep);
    et.insert("max_link", evaluation.max_link);
    et.insert("planar", evaluation.planar);
    t.insert("evaluation", std::move(et));
    return t;
}

PipelineConfig PipelineConfig::from_toml(const toml::Table& t) {
    PipelineConfig base = preset(
        t.contains("preset") ? toml::require_string(t, "preset") : "base");
    toml::Table m = base.to_toml();
    overlay(m, t);

    PipelineConfig c;
    c.preset_name = toml::get_string(m, "preset", "base");
    c.seed = static_cast<std::uint64_t>(toml::get_int(m, "seed", 1));
    c.output_dir = toml::get_string(m, "output_dir", "out");

    const toml::Table& nt = toml::require_table(m, "network");
    c.network.merge_count =
        static_cast<int>(toml::get_int(nt, "merge_count", 1));
    c.network.merge_shift = toml::get_double(nt, "merge_shift", 0.0);
    c.network.gen = net::GenConfig::from_toml(toml::require_table(nt, "gen"));

    const toml::Table& ft = toml::require_table(m, "flow");
    c.flow.fluid.viscosity = toml::get_double(ft, "viscosity", 3.5e-3);
    c.flow.fluid.density = toml::get_double(ft, "density", 1060.0);
    c.flow.inlet_pressure = toml::get_double(ft, "inlet_pressure", 2000.0);
    c.flow.outlet_pressure = toml::get_double(ft, "outlet_pressure", 0.0);
    if (const toml::Value* nv = ft.find("nodes"))
        for (const auto& [key, val] : nv->as_table())
            c.flow.node_pressure[std::stoi(key)] = val->as_double();

    const toml::Table& bt = toml::require_table(m, "bubbles");
    c.bubbles.kind = toml::get_string(bt, "kind", "sonovue");
    c.bubbles.count = static_cast<int>(toml::get_int(bt, "count", 100));
    c.bubbles.frame_rate = toml::get_double(bt, "frame_rate", 100.0);
    c.bubbles.n_frames = static_cast<int>(toml::get_int(bt, "n_frames", 50));
    c.bubbles.radial_law = toml::get_string(bt, "radial_law", "area_uniform");
    if (const toml::Value* cv = bt.find("custom"))
        c.bubbles.custom = bubble::BubbleParams::from_toml(cv->as_table());

    c.tx = acoustics::TransducerConfig::from_toml(
        toml::require_table(m, "transducer"));
    c.noise = acoustics::NoiseConfig::from_toml(toml::require_table(m, "noise"));

    const toml::Table& it = toml::require_table(m, "imaging");
    c.imaging.dynamic_range = toml::get_double(it, "dynamic_range", 60.0);
    c.imaging.sr_upscale =
        static_cast<int>(toml::get_int(it, "sr_upscale", 4));
    c.imaging.grid =
        acoustics::ImageGrid::from_toml(toml::require_table(it, "grid"));

    const toml::Table& et = toml::require_table(m, "evaluation");
    c.evaluation.radius = toml::get_double(et, "radius", 0.0);
    c.evaluation.threshold_db = toml::get_double(et, "threshold_db", -30.0);
    c.evaluation.min_sep = toml::get_double(et, "min_sep", 0.0);
    c.evaluation.max_link = toml::get_double(et, "max_link", 0.0);
    c.evaluation.planar = toml::get_bool(et, "planar", true);

    c.validate();
    return c;
}

PipelineConfig PipelineConfig::preset(const std::string& name) {
    PipelineConfig c;
    c.preset_name = name;

    // base: a thin vascular slab 8-18 mm deep under a 64-element 5 MHz array
    auto& g = c.network.gen;
    g.inside.kind = net::InsideForm::Box;
    g.inside.lo = {-6e-3, -0.6e-3, 8e-3};
    g.inside.hi = {6e-3, 0.6e-3, 18e-3};
    g.initial_position = {-5.5e-3, 0.0, 9e-3};
    g.initial_direction = {0.8, 0.0, 0.6};
    g.initial_radius = 1.5e-4;
    g.edge_step = {net::ScalarForm::Constant, 4e-4, 0.0};
    g.rotation = net::ConeForm{0.35};
    g.radius_scale = {net::ScalarForm::Constant, 0.97, 0.0};
    g.bif_prob = {net::ScalarForm::Constant, 0.3, 0.0};
    g.bif_radius_scale = {net::ScalarForm::Constant, 0.75, 0.0};
    g.bif_rotation = net::ConeForm{0.9};
    g.max_level = 4;
    g.max_edges = 50000;

    // half-wavelength pitch keeps point-element grating replicas out of the
    // visible region; three steered transmits wash out edge-wave artifacts
    c.tx.pitch = 1.54e-4;
    c.tx.angles = {-0.0873, 0.0, 0.0873};
    c.tx.max_depth = 2e-2;
    c.bubbles.count = 50;
    c.bubbles.n_frames = 100;
    c.noise.white_snr_db = 25.0;
    c.noise.colored_level_db = -28.0;
    c.noise.colored_f_lo = 2e6;
    c.noise.colored_f_hi = 8e6;
    c.noise.tgc_db_per_cm = 0.3;
    c.noise.signal_ref = 5.0;

    c.imaging.grid.x0 = -6.4e-3;
    c.imaging.grid.z0 = 8e-3;
    c.imaging.grid.dx = 8e-5;
    c.imaging.grid.dz = 8e-5;
    c.imaging.grid.nx = 160;
    c.imaging.grid.nz = 125;

    if (name == "base") {
        return c;
    }
    if (name == "training") {
        // one sparse branch, a handful of bubbles, gentle noise
        g.bif_prob = {net::ScalarForm::Constant, 0.12, 0.0};
        g.max_level = 2;
        // dense enough that no frame is empty: a frame whose peak is noise
        // mass-detects under the peak-relative threshold
        c.bubbles.count = 40;
        c.bubbles.n_frames = 100;
        c.noise.white_snr_db = 30.0;
        c.noise.colored_level_db = -std::numeric_limits<double>::infinity();
        c.noise.tgc_db_per_cm = 0.0;
        return c;
    }
    if (name == "challenge") {
        // two interleaved trees, dense bubbles, rough channel
        c.network.merge_count = 2;
        c.network.merge_shift = 2e-3;
        c.bubbles.count = 300;
        c.bubbles.n_frames = 150;
        c.noise.white_snr_db = 14.0;
        c.noise.colored_level_db = -18.0;
        c.noise.tgc_db_per_cm = 0.5;
        return c;
    }
    if (name == "desk_scale") {
        c.bubbles.count = 500;
        c.bubbles.n_frames = 200;
        // brisker flow keeps 500 concurrent tracks from stacking up in view
        c.flow.inlet_pressure = 600.0;
        return c;
    }
    if (name == "hf") {
        // high-frequency probe; center frequency is an artifact choice
        c.tx.f0 = 12e6;
        c.tx.fs = 50e6;
        c.tx.pitch = 6.4e-5;
        c.tx.n_cycles = 2;
        c.tx.max_depth = 1.3e-2;
        c.noise.colored_f_lo = 6e6;
        c.noise.colored_f_hi = 18e6;
        g.inside.lo = {-4e-3, -0.4e-3, 4e-3};
        g.inside.hi = {4e-3, 0.4e-3, 12e-3};
        g.initial_position = {-3.7e-3, 0.0, 4.5e-3};
        g.edge_step = {net::ScalarForm::Constant, 3e-4, 0.0};
        g.initial_radius = 1e-4;
        c.imaging.grid.x0 = -4e-3;
        c.imaging.grid.z0 = 4e-3;
        c.imaging.grid.dx = 4e-5;
        c.imaging.grid.dz = 4e-5;
        c.imaging.grid.nx = 200;
        c.imaging.grid.nz = 200;
        return c;
    }
    if (name == "lf") {
        // low-frequency probe; center frequency is an artifact choice
        c.tx.f0 = 2.5e6;
        c.tx.fs = 12.5e6;
        c.tx.pitch = 3.08e-4;
        c.tx.max_depth = 4.5e-2;
        c.noise.colored_f_lo = 1e6;
        c.noise.colored_f_hi = 4e6;
        g.inside.lo = {-8e-3, -1e-3, 1.5e-2};
        g.inside.hi = {8e-3, 1e-3, 3.5e-2};
        g.initial_position = {-7.5e-3, 0.0, 1.7e-2};
        g.edge_step = {net::ScalarForm::Constant, 6e-4, 0.0};
        g.initial_radius = 2e-4;
        c.imaging.grid.x0 = -8e-3;
        c.imaging.grid.z0 = 1.5e-2;
        c.imaging.grid.dx = 2e-4;
        c.imaging.grid.dz = 2e-4;
        c.imaging.grid.nx = 80;
        c.imaging.grid.nz = 100;
        return c;
    }
    throw PipelineError("unknown preset '" + name + "'");
}

void PipelineConfig::validate() const {
    tx.validate();
    noise.validate(tx.fs);
    imaging.grid.validate();
    if (network.merge_count < 1)
        throw PipelineError("merge_count must be >= 1");
    if (bubbles.count < 1)
        throw PipelineError("need at least one bubble");
    if (bubbles.n_frames < 1)
        throw PipelineError("need at least one frame");
    if (!(bubbles.frame_rate > 0.0))
        throw PipelineError("frame rate must be positive");
    (void)bubbles.params();
    (void)bubbles.event_options();
    if (imaging.sr_upscale < 1)
        throw PipelineError("sr_upscale must be >= 1");
    if (evaluation.radius < 0.0 || evaluation.min_sep < 0.0 ||
        evaluation.max_link < 0.0)
        throw PipelineError("evaluation distances cannot be negative");
    if (output_dir.empty())
        throw PipelineError("output_dir cannot be empty");
}

double PipelineConfig::eval_radius() const {
    return evaluation.radius > 0.0 ? evaluation.radius : 0.5 * wavelength();
}

double PipelineConfig::eval_min_sep() const {
    return evaluation.min_sep > 0.0 ? evaluation.min_sep : 0.5 * wavelength();
}

double PipelineConfig::eval_max_link() const {
    return evaluation.max_link > 0.0 ? evaluation.max_link : wavelength();
}

std::string PipelineConfig::canonical_text() const {
    return toml::write(to_toml());
}

std::uint64_t PipelineConfig::config_hash() const {
    return fnv1a64(canonical_text());
}

void DatasetManifest::write(const fs::path& path) const {
    nlohmann::json j;
    j["tool_version"] = tool_version;
    j["config_hash"] = config_hash;
    j["files"] = files;
    std::ofstream f(path);
    if (!f)
        throw PipelineError("cannot write " + path.string());
    f << j.dump(2) << '\n';
}

DatasetManifest DatasetManifest::read(const fs::path& path) {
    std::ifstream f(path);
    if (!f)
        throw PipelineError("cannot open " + path.string());
    const nlohmann::json j = nlohmann::json::parse(f);
    DatasetManifest m;
    m.tool_version = j.at("tool_version").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& [k, v] : j.at("files").items())
        m.files[k] = v.get<std::string>();
    return m;
}

std::uint64_t stage_seed(std::uint64_t master, std::string_view stage,
                         std::uint64_t index) {
    return Rng(master).stream(stage).stream(index).next_u64();
}

// ---- stages ----

void cmd_generate(const PipelineConfig& cfg, const fs::path& out) {
    fs::create_directories(out);
    std::vector<net::VesselNetwork> nets;
    std::vector<Vec3> offsets;
    for (int i = 0; i < cfg.network.merge_count; ++i) {
        net::GenConfig g = cfg.network.gen;
        g.seed = stage_seed(cfg.seed, "generate", static_cast<std::uint64_t>(i));
        nets.push_back(net::generate_network(g.build()));
        offsets.push_back({i * cfg.network.merge_shift, 0.0, 0.0});
    }
    if (nets.size() == 1) {
        net::GenConfig g = cfg.network.gen;
        g.seed = stage_seed(cfg.seed, "generate", 0);
        net::save_network(p_network(out), nets[0], &g);
    } else {
        net::save_network(p_network(out), net::merge_networks(nets, offsets));
    }
    update_manifest(out, cfg, {{"network", "network.toml"}});
}

void cmd_flow(const PipelineConfig& cfg, const fs::path& out) {
    require_file(p_network(out), "generate");
    const auto net = net::load_network(p_network(out));
    const auto sol = flow::solve_flow(net, boundary_conditions(net, cfg.flow),
                                      cfg.flow.fluid);
    flow::write_csv(net, sol, p_flow_edges(out), p_flow_nodes(out));
    update_manifest(out, cfg,
                    {{"flow_edges", "flow_edges.csv"},
                     {"flow_nodes", "flow_nodes.csv"}});
}

void cmd_seed(const PipelineConfig& cfg, const fs::path& out) {
    require_file(p_network(out), "generate");
    require_file(p_flow_edges(out), "flow");
    const auto net = net::load_network(p_network(out));
    const auto sol = flow::read_csv(net, p_flow_edges(out), p_flow_nodes(out));
    const auto events = tracks::simulate_events(
        net, sol, cfg.bubbles.count, cfg.bubbles.frame_rate,
        cfg.bubbles.n_frames, stage_seed(cfg.seed, "seed"),
        cfg.bubbles.event_options());
    tracks::write_events_csv(p_gt(out), events);
    update_manifest(out, cfg, {{"ground_truth", "ground_truth.csv"}});
}

void cmd_simulate(const PipelineConfig& cfg, const fs::path& out) {
    fs::create_directories(out);
    if (!fs::exists(p_network(out)))
        cmd_generate(cfg, out);
    if (!fs::exists(p_flow_edges(out)))
        cmd_flow(cfg, out);
    if (!fs::exists(p_gt(out)))
        cmd_seed(cfg, out);

    const auto by_frame =
        events_by_frame(tracks::read_events_csv(p_gt(out)), cfg.bubbles.n_frames);

    acoustics::RFVideo video;
    video.n_elements = static_cast<std::uint32_t>(cfg.tx.n_elements);
    video.n_samples = static_cast<std::uint32_t>(cfg.tx.line_samples());
    video.n_frames = static_cast<std::uint32_t>(cfg.bubbles.n_frames);
    video.n_angles = static_cast<std::uint32_t>(cfg.tx.angles.size());
    video.fs = cfg.tx.fs;
    video.f0 = cfg.tx.f0;
    video.c = cfg.tx.c;
    const std::size_t per_frame = video.frame_floats();
    video.data.reserve(static_cast<std::size_t>(video.n_frames) * per_frame);

    // resume a matching interrupted run from its per-frame checkpoint
    const std::string hash = hash_hex(cfg.config_hash());
    int done = 0;
    if (fs::exists(p_rf_progress(out)) && fs::exists(p_rf_partial(out))) {
        try {
            std::ifstream pf(p_rf_progress(out));
            const nlohmann::json j = nlohmann::json::parse(pf);
            if (j.at("config_hash").get<std::string>() == hash)
                done = j.at("frames_done").get<int>();
        } catch (const std::exception&) {
            done = 0;
        }
        const auto want =
            static_cast<std::uintmax_t>(done) * per_frame * sizeof(float);
        if (done < 0 || done > cfg.bubbles.n_frames ||
            fs::file_size(p_rf_partial(out)) != want)
            done = 0;
        if (done > 0) {
            std::ifstream pf(p_rf_partial(out), std::ios::binary);
            video.data.resize(static_cast<std::size_t>(done) * per_frame);
            pf.read(reinterpret_cast<char*>(video.data.data()),
                    static_cast<std::streamsize>(want));
        }
    }

    const bubble::BubbleParams bub = cfg.bubbles.params();
    const auto params_of = [&](std::int64_t) { return bub; };
    const Rng noise_root(stage_seed(cfg.seed, "simulate"));

    std::ofstream partial(p_rf_partial(out),
                          done > 0 ? std::ios::binary | std::ios::app
                                   : std::ios::binary | std::ios::trunc);
    for (int f = done; f < cfg.bubbles.n_frames; ++f) {
        const auto frames = acoustics::simulate_frame(
            by_frame[f], params_of, cfg.tx, cfg.noise, noise_root.stream(f));
        const std::size_t before = video.data.size();
        for (const auto& rf : frames)
            for (double v : rf.data)
                video.data.push_back(static_cast<float>(v));
        partial.write(
            reinterpret_cast<const char*>(video.data.data() + before),
            static_cast<std::streamsize>((video.data.size() - before) *
                                         sizeof(float)));
        partial.flush();
        nlohmann::json j;
        j["config_hash"] = hash;
        j["frames_done"] = f + 1;
        std::ofstream pj(p_rf_progress(out));
        pj << j.dump() << '\n';
    }
    partial.close();

    acoustics::write_rf(p_rf(out), video);
    fs::remove(p_rf_partial(out));
    fs::remove(p_rf_progress(out));
    update_manifest(out, cfg, {{"rf", "rf.bin"}});

    cmd_beamform(cfg, out);
}

void cmd_beamform(const PipelineConfig& cfg, const fs::path& out) {
    require_file(p_rf(out), "simulate");
    const auto video = acoustics::read_rf(p_rf(out));
    if (video.n_elements != static_cast<std::uint32_t>(cfg.tx.n_elements) ||
        video.n_angles != cfg.tx.angles.size())
        throw PipelineError("rf.bin does not match the configured transducer");
    fs::create_directories(p_bmode_dir(out));

    const auto ns = static_cast<int>(video.n_samples);
    for (std::uint32_t f = 0; f < video.n_frames; ++f) {
        std::vector<acoustics::RFFrame> frames;
        for (std::uint32_t a = 0; a < video.n_angles; ++a) {
            acoustics::RFFrame rf(cfg.tx.n_elements, ns, video.fs);
            const std::size_t base = video.offset(f, a);
            for (std::size_t i = 0; i < rf.data.size(); ++i)
                rf.data[i] = video.data[base + i];
            frames.push_back(std::move(rf));
        }
        const auto img = acoustics::beamform_das(frames, cfg.tx,
                                                 cfg.imaging.grid);
        const auto bm = acoustics::envelope_log(img, cfg.imaging.grid,
                                                cfg.imaging.dynamic_range);
        const auto stem = p_bmode_dir(out) / frame_stem(static_cast<int>(f));
        acoustics::write_pgm(stem.string() + ".pgm", bm);
        acoustics::write_bmode_f32(stem.string() + ".f32",
                                   stem.string() + ".json", bm);
    }
    update_manifest(out, cfg, {{"bmode", "bmode"}});
}

void cmd_localize(const PipelineConfig& cfg, const fs::path& out) {
    std::vector<eval::Localization> locs;
    for (int f = 0; f < cfg.bubbles.n_frames; ++f) {
        const auto stem = p_bmode_dir(out) / frame_stem(f);
        require_file(stem.string() + ".f32", "beamform");
        const auto bm =
            read_bmode(stem.string() + ".f32", stem.string() + ".json");
        const auto found = eval::reference_localizer(
            bm, cfg.evaluation.threshold_db, cfg.eval_min_sep(), f);
        locs.insert(locs.end(), found.begin(), found.end());
    }
    eval::write_predictions_csv(p_pred(out), locs);
    update_manifest(out, cfg, {{"predictions", "predictions.csv"}});
}

void cmd_track(const PipelineConfig& cfg, const fs::path& out) {
    require_file(p_pred(out), "localize");
    const auto [locs, ignored] = eval::read_predictions_csv(p_pred(out));
    const auto assign = eval::reference_tracker(locs, cfg.eval_max_link());
    eval::write_predictions_csv(p_tracked(out), locs, &assign);
    update_manifest(out, cfg, {{"tracked", "tracked.csv"}});
}

void cmd_evaluate(const PipelineConfig& cfg, const fs::path& out) {
    require_file(p_gt(out), "seed");
    const fs::path pred =
        fs::exists(p_tracked(out)) ? p_tracked(out) : p_pred(out);
    require_file(pred, "localize");
    auto gt = tracks::read_events_csv(p_gt(out));
    if (cfg.evaluation.planar)
        gt = planar_gt(std::move(gt));
    const auto [locs, assign] = eval::read_predictions_csv(pred);
    const auto report = eval::evaluate(gt, locs, assign, cfg.eval_radius());
    std::ofstream f(p_report(out));
    if (!f)
        throw PipelineError("cannot write " + p_report(out).string());
    f << eval::report_json(report) << '\n';
    update_manifest(out, cfg, {{"report", "report.json"}});
}

void cmd_render(const PipelineConfig& cfg, const fs::path& out) {
    require_file(p_tracked(out), "track");
    const auto [locs, assign] = eval::read_predictions_csv(p_tracked(out));
    acoustics::ImageGrid g = cfg.imaging.grid;
    g.dx /= cfg.imaging.sr_upscale;
    g.dz /= cfg.imaging.sr_upscale;
    g.nx *= cfg.imaging.sr_upscale;
    g.nz *= cfg.imaging.sr_upscale;
    const auto sr = eval::render_sr_image(locs, assign, g);
    const auto vel = eval::render_velocity_map(locs, assign,
                                               cfg.bubbles.frame_rate, g);
    write_field_f32(out / "sr.f32", out / "sr.json", "sr_counts", g, sr);
    write_field_f32(out / "velocity.f32", out / "velocity.json",
                    "velocity_mps", g, vel);
    update_manifest(out, cfg,
                    {{"sr", "sr.f32"}, {"velocity", "velocity.f32"}});
}

void cmd_pipeline(const PipelineConfig& cfg, const fs::path& out) {
    cmd_simulate(cfg, out);
    cmd_localize(cfg, out);
    cmd_track(cfg, out);
    cmd_evaluate(cfg, out);
    cmd_render(cfg, out);
}

void run_command(const std::string& verb, const PipelineConfig& cfg,
                 const fs::path& out) {
    static const std::map<std::string,
                          void (*)(const PipelineConfig&, const fs::path&)>
        table = {{"generate", cmd_generate}, {"flow", cmd_flow},
                 {"seed", cmd_seed},         {"simulate", cmd_simulate},
                 {"beamform", cmd_beamform}, {"localize", cmd_localize},
                 {"track", cmd_track},       {"evaluate", cmd_evaluate},
                 {"render", cmd_render},     {"pipeline", cmd_pipeline}};
    const auto it = table.find(verb);
    if (it == table.end())
        throw PipelineError("unknown command '" + verb + "'");
    try {
        it->second(cfg, out);
    } catch (const PipelineError&) {
        throw;
    } catch (const std::exception& e) {
        throw PipelineError(verb + ": " + e.what());
    }
}

}  // namespace bff::pipeline
