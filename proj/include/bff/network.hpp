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

#include <Eigen/SparseCore>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bff/geom.hpp"
#include "bff/rng.hpp"
#include "bff/toml.hpp"

namespace bff::net {

struct NetworkError : std::runtime_error {
    explicit NetworkError(const std::string& msg) : std::runtime_error(msg) {}
};

struct Node {
    int id = 0;
    Vec3 pos;
};

/// Cylindrical vessel segment. Flow-positive orientation is src -> dst.
/// Length is always derived from the endpoint positions.
struct Edge {
    int id = 0;
    int src = 0;
    int dst = 0;
    double radius = 0.0;  // m
    Frame frame;          // d along src->dst
};

class VesselNetwork {
public:
    VesselNetwork() = default;
    VesselNetwork(std::vector<Node> nodes, std::vector<Edge> edges);

    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<Edge>& edges() const { return edges_; }

    int node_index(int node_id) const;
    int edge_index(int edge_id) const;
    const Node& node(int node_id) const { return nodes_[node_index(node_id)]; }
    const Edge& edge(int edge_id) const { return edges_[edge_index(edge_id)]; }

    double edge_length(const Edge& e) const {
        return (node(e.dst).pos - node(e.src).pos).norm();
    }

    int degree(int node_id) const;
    /// Edge indices incident to a node (both directions).
    const std::vector<int>& incident_edges(int node_id) const;

    /// Node ids of degree 1, ascending. Throws if fewer than 2 exist.
    std::vector<int> hanging_nodes() const;

    /// Structural checks: unique ids, finite positions, positive radii,
    /// no self loops or duplicate edges, orthonormal frames aligned with the
    /// segment axis, and at least 2 hanging nodes.
    void validate() const;

    /// True when the undirected graph is acyclic (union-find).
    bool is_forest() const;
    /// Number of connected components.
    int component_count() const;

    /// Edge x node incidence matrix: +1 at src, -1 at dst.
    Eigen::SparseMatrix<double> incidence_matrix() const;

    struct SplitIncidence {
        Eigen::SparseMatrix<double> hanging;      // edges x |hanging|
        Eigen::SparseMatrix<double> interior;     // edges x |interior|
        std::vector<int> hanging_ids;             // column -> node id
        std::vector<int> interior_ids;
    };
    /// Incidence columns partitioned into hanging / non-hanging nodes,
    /// both in ascending node-id order.
    SplitIncidence split_incidence() const;

private:
    std::vector<Node> nodes_;
    std::vector<Edge> edges_;
    std::vector<int> node_index_of_id_;   // dense map when ids are compact
    std::vector<std::vector<int>> incident_;
    bool compact_ids_ = true;

    void build_index();
};

// ----------------------------------------------------------------------------
// Generator

struct GenState {
    int node_id = 0;
    Vec3 pos;
    Frame frame;
    double radius = 0.0;
    int level = 0;
};

/// Per-parameter callbacks driving the recursive generator. Randomness is
/// drawn from the Rng handed in, which the generator scopes per vessel and
/// per node so that siblings do not perturb each other.
struct GenParams {
    std::function<double(const GenState&, Rng&)> edge_step_f;
    std::function<bool(const Vec3&)> inside_f;
    std::function<Frame(const GenState&, Rng&)> rot_f;
    std::function<double(const GenState&, Rng&)> r_decay_f;
    std::function<bool(const GenState&, Rng&)> bif_occurs_f;
    std::function<double(const GenState&, Rng&)> bif_r_decay_f;
    std::function<Frame(const GenState&, Rng&)> bif_rot_f;

    int max_level = 3;
    std::uint64_t seed = 0;
    Vec3 initial_position;
    Vec3 initial_direction{0, 0, 1};
    double initial_radius = 0.0;
    std::size_t max_edges = 1'000'000;  // runaway-recursion guard
};

VesselNetwork generate_network(const GenParams& params);

// ----------------------------------------------------------------------------
// Config-file parameter forms. Generators built from these are fully
// reproducible from the serialized description.

struct ScalarForm {
    enum Kind { Constant, LinearLevel, Uniform } kind = Constant;
    double a = 0.0;  // Constant: value; LinearLevel: offset; Uniform: lo
    double b = 0.0;  // LinearLevel: slope per level; Uniform: hi

    double eval(int level, Rng& rng) const;
    toml::Table to_toml() const;
    static ScalarForm from_toml(const toml::Table& t);
};

struct ConeForm {
    double max_angle_rad = 0.0;
    Frame sample(const Frame& current, Rng& rng) const;
};

struct InsideForm {
    enum Kind { Box, Sphere } kind = Box;
    Vec3 lo, hi;       // Box
    Vec3 center;       // Sphere
    double radius = 0; // Sphere

    bool contains(const Vec3& p) const;
    toml::Table to_toml() const;
    static InsideForm from_toml(const toml::Table& t);
};

/// Closed-set generator description (what the config file stores).
struct GenConfig {
    ScalarForm edge_step{ScalarForm::Constant, 5e-4, 0};
    ConeForm rotation{0.3};
    ScalarForm radius_scale{ScalarForm::Constant, 1.0, 0};      // multiplies r
    ScalarForm bif_prob{ScalarForm::Constant, 0.1, 0};
    ScalarForm bif_radius_scale{ScalarForm::Constant, 0.75, 0}; // multiplies r
    ConeForm bif_rotation{1.0};
    InsideForm inside;
    int max_level = 3;
    std::uint64_t seed = 0;
    Vec3 initial_position;
    Vec3 initial_direction{0, 0, 1};
    double initial_radius = 1e-4;
    std::size_t max_edges = 1'000'000;

    GenParams build() const;
    toml::Table to_toml() const;
    static GenConfig from_toml(const toml::Table& t);
};

// ----------------------------------------------------------------------------
// I/O and utilities

void save_network(const std::filesystem::path& path, const VesselNetwork& net,
                  const GenConfig* provenance = nullptr);
VesselNetwork load_network(const std::filesystem::path& path);

/// Concatenates networks into one (re-identified nodes/edges), applying a
/// positional offset per input.
VesselNetwork merge_networks(const std::vector<VesselNetwork>& nets,
                             const std::vector<Vec3>& offsets);

}  // namespace bff::net
