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
#include <stdexcept>
#include <string>
#include <vector>

#include "bff/flow.hpp"
#include "bff/network.hpp"
#include "bff/rng.hpp"

namespace bff::tracks {

struct TrackError : std::runtime_error {
    explicit TrackError(const std::string& msg) : std::runtime_error(msg) {}
};

/// One root-to-leaf path. Edges are listed in traversal order and are always
/// walked in their flow direction; `nodes` holds the visited node ids
/// (edges.size() + 1 entries, nodes.front() is the root).
struct TrackPath {
    std::vector<int> edge_ids;
    std::vector<int> nodes;
    double p_track = 0.0;   // product of branch probabilities along the path
    double root_weight = 1; // |Q| entering at this root, for multi-root nets
};

/// A bubble riding a streamline of one track.
struct ParticleState {
    int track = 0;         // index into the track list
    int edge_pos = 0;      // position within TrackPath::edge_ids
    double axial = 0.0;    // m along the current edge, in traversal direction
    double r_frac = 0.0;   // constant for the particle's lifetime
    double theta = 0.0;    // azimuth in the edge cross-section, constant
    bool active = true;    // false once the leaf is passed
};

struct Event {
    int frame = 0;
    int bubble_id = 0;
    Vec3 pos;
    double speed = 0.0;   // edge-local advection speed, m/s
    double r_frac = 0.0;
};

/// Rows sorted by (frame, bubble_id).
using EventTable = std::vector<Event>;

/// Probability of entering a child branch carrying q_child out of a parent
/// carrying q_parent (magnitudes). Throws on zero parent flow.
double branch_probability(double q_parent, double q_child);

/// All root-to-leaf paths of a forest, following flow directions.
/// Zero-flow branches are pruned. Probabilities from each root sum to 1.
/// Roots are hanging nodes whose edge carries flow into the network.
std::vector<TrackPath> enumerate_tracks(const net::VesselNetwork& net,
                                        const flow::FlowSolution& flow);

/// Advances a particle by dt at the edge-local speed u_max*(1 - r_frac^2).
/// Crossing into the next edge rescales the leftover distance by the speed
/// ratio (piecewise-constant-speed kinematics, applied per crossed edge).
/// Walking past the last edge deactivates the particle.
ParticleState advect(ParticleState p, double dt,
                     const std::vector<TrackPath>& tracks,
                     const net::VesselNetwork& net,
                     const flow::FlowSolution& flow);

enum class RadialLaw {
    AreaUniform,   // pdf ∝ r: uniform bubble density over the cross-section
    FluxWeighted,  // pdf ∝ r(1-r^2): arrival rate through the cross-section
};

struct EventOptions {
    RadialLaw radial_law = RadialLaw::AreaUniform;
};

/// Seeds n_bubbles at the roots (entry frames uniform over the video,
/// tracks picked by p_track, roots by inflow share), advects them at
/// dt = 1/frame_rate and stacks the per-frame rows. Bubble i's trajectory
/// depends only on (seed, i), never on n_bubbles.
EventTable simulate_events(const net::VesselNetwork& net,
                           const flow::FlowSolution& flow, int n_bubbles,
                           double frame_rate, int n_frames, std::uint64_t seed,
                           const EventOptions& opts = {});

/// World-space point of a particle: src + d*axial + (e1 cosθ + e2 sinθ)*r_frac*R
/// on the edge the particle currently rides (flow direction folded in).
Vec3 world_position(const ParticleState& p,
                    const std::vector<TrackPath>& tracks,
                    const net::VesselNetwork& net,
                    const flow::FlowSolution& flow);

/// CSV: `frame,bubble_id,x,y,z,speed,r_frac` (0-based frames, SI units).
void write_events_csv(const std::filesystem::path& path, const EventTable& ev);
/// Reads the format above; the speed/r_frac columns are optional.
EventTable read_events_csv(const std::filesystem::path& path);

}  // namespace bff::tracks
