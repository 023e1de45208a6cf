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

#include "bff/tracks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "bff/toml.hpp"

namespace bff::tracks {

double branch_probability(double q_parent, double q_child) {
    if (q_parent == 0.0)
        throw TrackError("dead branch: zero parent flow");
    return std::clamp(std::fabs(q_child) / std::fabs(q_parent), 0.0, 1.0);
}

namespace {

// Flow magnitude leaving `node` through edge index `ei`; negative values
// mean the edge carries flow into the node.
double outgoing_flow(const net::VesselNetwork& net,
                     const flow::FlowSolution& flow, int node, int ei) {
    const net::Edge& e = net.edges()[ei];
    return e.src == node ? flow.edge_flow[ei] : -flow.edge_flow[ei];
}

}  // namespace

std::vector<TrackPath> enumerate_tracks(const net::VesselNetwork& net,
                                        const flow::FlowSolution& flow) {
    if (!net.is_forest())
        throw TrackError("network contains a cycle; tracks require a tree");

    std::vector<int> roots;
    for (int h : net.hanging_nodes()) {
        const int ei = net.incident_edges(h).front();
        if (outgoing_flow(net, flow, h, ei) > 0.0)
            roots.push_back(h);
    }

    std::vector<TrackPath> out;
    constexpr std::size_t kMaxTracks = 1'000'000;

    for (int root : roots) {
        const double root_q =
            outgoing_flow(net, flow, root, net.incident_edges(root).front());

        struct Item {
            int node;
            int in_edge;  // edge index we arrived through, -1 at the root
            double prob;
            std::vector<int> edge_ids;
            std::vector<int> nodes;
        };
        std::vector<Item> stack;
        stack.push_back({root, -1, 1.0, {}, {root}});

        while (!stack.empty()) {
            Item it = std::move(stack.back());
            stack.pop_back();

            // edges carrying flow away from this node, ascending edge id
            std::vector<int> outs;
            double total_out = 0.0;
            for (int ei : net.incident_edges(it.node)) {
                if (ei == it.in_edge)
                    continue;
                const double q = outgoing_flow(net, flow, it.node, ei);
                if (q > 0.0) {
                    outs.push_back(ei);
                    total_out += q;
                }
            }
            std::sort(outs.begin(), outs.end(), [&](int a, int b) {
                return net.edges()[a].id < net.edges()[b].id;
            });

            if (outs.empty()) {
                if (it.in_edge < 0)
                    continue;  // root of a dead component
                TrackPath tp;
                tp.edge_ids = std::move(it.edge_ids);
                tp.nodes = std::move(it.nodes);
                tp.p_track = it.prob;
                tp.root_weight = root_q;
                out.push_back(std::move(tp));
                if (out.size() > kMaxTracks)
                    throw TrackError("track count exceeds 1e6; lower the tree depth");
                continue;
            }

            // Share of the node's outflow taken by each branch. At a plain
            // bifurcation this equals q_child/q_parent by conservation; at
            // merge points it keeps the shares summing to exactly one.
            // Push in reverse so the lowest edge id is explored first.
            for (auto rit = outs.rbegin(); rit != outs.rend(); ++rit) {
                const int ei = *rit;
                const net::Edge& e = net.edges()[ei];
                const int next = e.src == it.node ? e.dst : e.src;
                Item child;
                child.node = next;
                child.in_edge = ei;
                child.prob =
                    it.prob * (outgoing_flow(net, flow, it.node, ei) / total_out);
                child.edge_ids = it.edge_ids;
                child.edge_ids.push_back(e.id);
                child.nodes = it.nodes;
                child.nodes.push_back(next);
                stack.push_back(std::move(child));
            }
        }
    }
    return out;
}

namespace {

double edge_speed(const ParticleState& p, const TrackPath& tp,
                  const net::VesselNetwork& net,
                  const flow::FlowSolution& flow) {
    const int ei = net.edge_index(tp.edge_ids[p.edge_pos]);
    return flow.edge_umax[ei] * (1.0 - p.r_frac * p.r_frac);
}

}  // namespace

ParticleState advect(ParticleState p, double dt,
                     const std::vector<TrackPath>& tracks,
                     const net::VesselNetwork& net,
                     const flow::FlowSolution& flow) {
    if (!p.active)
        return p;
    const TrackPath& tp = tracks[p.track];
    double v = edge_speed(p, tp, net, flow);
    if (v <= 0.0)
        return p;  // wall streamline (r_frac = 1) never moves

    double len = net.edge_length(net.edge(tp.edge_ids[p.edge_pos]));
    double target = p.axial + v * dt;
    while (target > len) {
        if (p.edge_pos + 1 >= static_cast<int>(tp.edge_ids.size())) {
            p.axial = len;
            p.active = false;  // swept out at the leaf
            return p;
        }
        const double over = target - len;
        ++p.edge_pos;
        const double v_next = edge_speed(p, tp, net, flow);
        // leftover path scales with the speed ratio: over/v seconds remain
        target = over * (v_next / v);
        v = v_next;
        len = net.edge_length(net.edge(tp.edge_ids[p.edge_pos]));
    }
    p.axial = target;
    return p;
}

Vec3 world_position(const ParticleState& p,
                    const std::vector<TrackPath>& tracks,
                    const net::VesselNetwork& net,
                    const flow::FlowSolution& flow) {
    (void)flow;
    const TrackPath& tp = tracks[p.track];
    const net::Edge& e = net.edge(tp.edge_ids[p.edge_pos]);
    const int from = tp.nodes[p.edge_pos];
    const double sgn = from == e.src ? 1.0 : -1.0;
    const Vec3 radial = e.frame.e1 * std::cos(p.theta) +
                        e.frame.e2 * std::sin(p.theta);
    return net.node(from).pos + e.frame.d * (sgn * p.axial) +
           radial * (p.r_frac * e.radius);
}

EventTable simulate_events(const net::VesselNetwork& net,
                           const flow::FlowSolution& flow, int n_bubbles,
                           double frame_rate, int n_frames, std::uint64_t seed,
                           const EventOptions& opts) {
    if (n_bubbles < 1)
        throw TrackError("n_bubbles must be >= 1");
    if (!(frame_rate > 0.0) || n_frames < 1)
        throw TrackError("frame_rate and n_frames must be positive");

    const std::vector<TrackPath> trks = enumerate_tracks(net, flow);
    if (trks.empty())
        throw TrackError("no track carries flow; check boundary pressures");

    // Global pick weight: the root's share of the total inflow times the
    // track probability under that root.
    double total_in = 0.0;
    {
        std::map<int, double> root_q;
        for (const auto& t : trks)
            root_q[t.nodes.front()] = t.root_weight;
        for (auto& [id, q] : root_q)
            total_in += q;
    }
    std::vector<double> cumulative(trks.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < trks.size(); ++i) {
        acc += trks[i].p_track * (trks[i].root_weight / total_in);
        cumulative[i] = acc;
    }

    const double dt = 1.0 / frame_rate;
    const Rng master(seed);
    EventTable table;

    for (int b = 0; b < n_bubbles; ++b) {
        Rng rng = master.stream(b);
        const double u = rng.uniform01() * acc;
        const std::size_t t =
            std::lower_bound(cumulative.begin(), cumulative.end(), u) -
            cumulative.begin();
        const int entry =
            static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n_frames)));
        const double unit = rng.uniform01();
        double r_frac;
        if (opts.radial_law == RadialLaw::AreaUniform)
            r_frac = std::sqrt(unit);
        else  // pdf ∝ r(1-r^2), the share each annulus has of the total flux
            r_frac = std::sqrt(1.0 - std::sqrt(1.0 - unit));
        const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);

        ParticleState p;
        p.track = static_cast<int>(std::min(t, trks.size() - 1));
        p.r_frac = r_frac;
        p.theta = theta;

        for (int f = entry; f < n_frames && p.active; ++f) {
            Event ev;
            ev.frame = f;
            ev.bubble_id = b;
            ev.pos = world_position(p, trks, net, flow);
            ev.speed = edge_speed(p, trks[p.track], net, flow);
            ev.r_frac = r_frac;
            table.push_back(ev);
            p = advect(p, dt, trks, net, flow);
        }
    }

    std::sort(table.begin(), table.end(), [](const Event& a, const Event& b) {
        return a.frame != b.frame ? a.frame < b.frame
                                  : a.bubble_id < b.bubble_id;
    });
    return table;
}

void write_events_csv(const std::filesystem::path& path, const EventTable& ev) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw TrackError("cannot write '" + path.string() + "'");
    out << "frame,bubble_id,x,y,z,speed,r_frac\n";
    for (const Event& e : ev)
        out << e.frame << ',' << e.bubble_id << ','
            << toml::format_double(e.pos.x) << ',' << toml::format_double(e.pos.y)
            << ',' << toml::format_double(e.pos.z) << ','
            << toml::format_double(e.speed) << ','
            << toml::format_double(e.r_frac) << '\n';
}

EventTable read_events_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw TrackError("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line))
        throw TrackError("empty event file '" + path.string() + "'");
    EventTable ev;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            cells.push_back(cell);
        if (cells.size() < 5)
            throw TrackError("bad event row '" + line + "'");
        Event e;
        e.frame = std::stoi(cells[0]);
        e.bubble_id = std::stoi(cells[1]);
        e.pos = {toml::parse_double(cells[2]), toml::parse_double(cells[3]),
                 toml::parse_double(cells[4])};
        if (cells.size() >= 7) {
            e.speed = toml::parse_double(cells[5]);
            e.r_frac = toml::parse_double(cells[6]);
        }
        ev.push_back(e);
    }
    return ev;
}

}  // namespace bff::tracks
