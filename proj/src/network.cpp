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

#include "bff/network.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <unordered_map>

namespace bff::net {

VesselNetwork::VesselNetwork(std::vector<Node> nodes, std::vector<Edge> edges)
    : nodes_(std::move(nodes)), edges_(std::move(edges)) {
    build_index();
}

void VesselNetwork::build_index() {
    compact_ids_ = true;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (nodes_[i].id != static_cast<int>(i))
            compact_ids_ = false;

    if (!compact_ids_) {
        int max_id = -1;
        for (const Node& n : nodes_)
            max_id = std::max(max_id, n.id);
        node_index_of_id_.assign(static_cast<std::size_t>(max_id) + 1, -1);
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            if (nodes_[i].id < 0)
                throw NetworkError("negative node id");
            if (node_index_of_id_[nodes_[i].id] != -1)
                throw NetworkError("duplicate node id " + std::to_string(nodes_[i].id));
            node_index_of_id_[nodes_[i].id] = static_cast<int>(i);
        }
    } else {
        node_index_of_id_.clear();
    }

    incident_.assign(nodes_.size(), {});
    for (std::size_t i = 0; i < edges_.size(); ++i) {
        incident_[node_index(edges_[i].src)].push_back(static_cast<int>(i));
        incident_[node_index(edges_[i].dst)].push_back(static_cast<int>(i));
    }
}

int VesselNetwork::node_index(int node_id) const {
    if (compact_ids_) {
        if (node_id < 0 || node_id >= static_cast<int>(nodes_.size()))
            throw NetworkError("unknown node id " + std::to_string(node_id));
        return node_id;
    }
    if (node_id < 0 || node_id >= static_cast<int>(node_index_of_id_.size()) ||
        node_index_of_id_[node_id] < 0)
        throw NetworkError("unknown node id " + std::to_string(node_id));
    return node_index_of_id_[node_id];
}

int VesselNetwork::edge_index(int edge_id) const {
    for (std::size_t i = 0; i < edges_.size(); ++i)
        if (edges_[i].id == edge_id)
            return static_cast<int>(i);
    throw NetworkError("unknown edge id " + std::to_string(edge_id));
}

int VesselNetwork::degree(int node_id) const {
    return static_cast<int>(incident_[node_index(node_id)].size());
}

const std::vector<int>& VesselNetwork::incident_edges(int node_id) const {
    return incident_[node_index(node_id)];
}

std::vector<int> VesselNetwork::hanging_nodes() const {
    std::vector<int> out;
    for (const Node& n : nodes_)
        if (degree(n.id) == 1)
            out.push_back(n.id);
    std::sort(out.begin(), out.end());
    if (out.size() < 2)
        throw NetworkError("invalid network: fewer than 2 hanging nodes");
    return out;
}

void VesselNetwork::validate() const {
    if (nodes_.empty())
        throw NetworkError("network has no nodes");
    std::set<int> node_ids;
    for (const Node& n : nodes_) {
        if (!n.pos.finite())
            throw NetworkError("non-finite node position (id " + std::to_string(n.id) + ")");
        if (!node_ids.insert(n.id).second)
            throw NetworkError("duplicate node id " + std::to_string(n.id));
    }
    std::set<int> edge_ids;
    std::set<std::pair<int, int>> endpoints;
    for (const Edge& e : edges_) {
        if (!edge_ids.insert(e.id).second)
            throw NetworkError("duplicate edge id " + std::to_string(e.id));
        if (e.src == e.dst)
            throw NetworkError("self loop at node " + std::to_string(e.src));
        auto key = std::minmax(e.src, e.dst);
        if (!endpoints.insert({key.first, key.second}).second)
            throw NetworkError("duplicate edge between nodes " +
                               std::to_string(e.src) + " and " + std::to_string(e.dst));
        if (!(e.radius > 0.0) || !std::isfinite(e.radius))
            throw NetworkError("edge " + std::to_string(e.id) + " has non-positive radius");
        const double len = edge_length(e);
        if (!(len > 0.0) || !std::isfinite(len))
            throw NetworkError("edge " + std::to_string(e.id) + " has zero length");
        if (e.frame.orthonormality_error() > 1e-12)
            throw NetworkError("edge " + std::to_string(e.id) + " frame not orthonormal");
        const Vec3 axis = (node(e.dst).pos - node(e.src).pos).normalized();
        if ((axis - e.frame.d).norm() > 1e-9)
            throw NetworkError("edge " + std::to_string(e.id) +
                               " frame axis disagrees with endpoints");
    }
    hanging_nodes();  // throws when < 2
}

namespace {

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(std::size_t n) : parent(n) {
        for (std::size_t i = 0; i < n; ++i)
            parent[i] = static_cast<int>(i);
    }
    int find(int a) {
        while (parent[a] != a) {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        return a;
    }
    bool unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b)
            return false;
        parent[a] = b;
        return true;
    }
};

}  // namespace

bool VesselNetwork::is_forest() const {
    UnionFind uf(nodes_.size());
    for (const Edge& e : edges_)
        if (!uf.unite(node_index(e.src), node_index(e.dst)))
            return false;
    return true;
}

int VesselNetwork::component_count() const {
    UnionFind uf(nodes_.size());
    for (const Edge& e : edges_)
        uf.unite(node_index(e.src), node_index(e.dst));
    std::set<int> roots;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        roots.insert(uf.find(static_cast<int>(i)));
    return static_cast<int>(roots.size());
}

Eigen::SparseMatrix<double> VesselNetwork::incidence_matrix() const {
    Eigen::SparseMatrix<double> inc(static_cast<int>(edges_.size()),
                                    static_cast<int>(nodes_.size()));
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(edges_.size() * 2);
    for (std::size_t i = 0; i < edges_.size(); ++i) {
        trip.emplace_back(static_cast<int>(i), node_index(edges_[i].src), 1.0);
        trip.emplace_back(static_cast<int>(i), node_index(edges_[i].dst), -1.0);
    }
    inc.setFromTriplets(trip.begin(), trip.end());
    return inc;
}

VesselNetwork::SplitIncidence VesselNetwork::split_incidence() const {
    SplitIncidence out;
    out.hanging_ids = hanging_nodes();
    std::set<int> hanging_set(out.hanging_ids.begin(), out.hanging_ids.end());
    for (const Node& n : nodes_)
        if (!hanging_set.count(n.id))
            out.interior_ids.push_back(n.id);
    std::sort(out.interior_ids.begin(), out.interior_ids.end());

    std::unordered_map<int, int> hang_col, int_col;
    for (std::size_t i = 0; i < out.hanging_ids.size(); ++i)
        hang_col[out.hanging_ids[i]] = static_cast<int>(i);
    for (std::size_t i = 0; i < out.interior_ids.size(); ++i)
        int_col[out.interior_ids[i]] = static_cast<int>(i);

    const int n_edges = static_cast<int>(edges_.size());
    out.hanging.resize(n_edges, static_cast<int>(out.hanging_ids.size()));
    out.interior.resize(n_edges, static_cast<int>(out.interior_ids.size()));
    std::vector<Eigen::Triplet<double>> th, ti;
    for (int i = 0; i < n_edges; ++i) {
        for (auto [node_id, sign] :
             {std::pair{edges_[i].src, 1.0}, std::pair{edges_[i].dst, -1.0}}) {
            if (auto it = hang_col.find(node_id); it != hang_col.end())
                th.emplace_back(i, it->second, sign);
            else
                ti.emplace_back(i, int_col.at(node_id), sign);
        }
    }
    out.hanging.setFromTriplets(th.begin(), th.end());
    out.interior.setFromTriplets(ti.begin(), ti.end());
    return out;
}

// ----------------------------------------------------------------------------
// Generator

namespace {

struct Builder {
    const GenParams& p;
    std::vector<Node> nodes;
    std::vector<Edge> edges;

    int add_node(const Vec3& pos) {
        nodes.push_back({static_cast<int>(nodes.size()), pos});
        return nodes.back().id;
    }

    // Grows one vessel from `start`. Trunk geometry draws come from
    // `vessel_rng`; everything related to a potential bifurcation at node k
    // comes from vessel_rng.stream(k), so enabling deeper recursion never
    // shifts the draws of already-generated geometry.
    void grow(int start, Frame frame, double radius, int level, Rng vessel_rng) {
        int cur = start;
        Vec3 pos = nodes[cur].pos;
        std::uint64_t segment = 0;
        while (true) {
            GenState st{cur, pos, frame, radius, level};
            frame = p.rot_f(st, vessel_rng);
            radius = p.r_decay_f(st, vessel_rng);
            if (!(radius > 0.0) || !std::isfinite(radius))
                throw NetworkError("r_decay_f produced non-positive radius");
            const double step = p.edge_step_f(st, vessel_rng);
            if (!(step > 0.0) || !std::isfinite(step))
                throw NetworkError("edge_step_f produced non-positive step");

            const Vec3 next_pos = pos + frame.d * step;
            if (!p.inside_f(next_pos))
                return;  // vessel stops at the boundary

            const int next = add_node(next_pos);
            edges.push_back({static_cast<int>(edges.size()), cur, next, radius, frame});
            if (edges.size() > p.max_edges)
                throw NetworkError("edge budget exceeded (" +
                                   std::to_string(p.max_edges) + ")");

            Rng node_rng = vessel_rng.stream(++segment);
            if (level < p.max_level) {
                GenState at{next, next_pos, frame, radius, level};
                if (p.bif_occurs_f(at, node_rng)) {
                    Frame branch_frame = p.bif_rot_f(at, node_rng);
                    double branch_radius = p.bif_r_decay_f(at, node_rng);
                    if (!(branch_radius > 0.0) || !std::isfinite(branch_radius))
                        throw NetworkError("bif_r_decay_f produced non-positive radius");
                    grow(next, branch_frame, branch_radius, level + 1,
                         node_rng.stream(0));
                }
            }
            cur = next;
            pos = next_pos;
        }
    }
};

}  // namespace

VesselNetwork generate_network(const GenParams& params) {
    if (!(params.initial_radius > 0.0))
        throw NetworkError("initial radius must be positive");
    if (params.max_level < 0)
        throw NetworkError("max_level must be >= 0");
    if (!params.inside_f(params.initial_position))
        throw NetworkError("initial position is outside the generation region");

    Builder b{params};
    b.add_node(params.initial_position);
    b.grow(0, Frame::around(params.initial_direction), params.initial_radius, 0,
           Rng(params.seed));

    if (b.edges.empty())
        throw NetworkError("degenerate parameters: no edge fits inside the region");
    VesselNetwork net(std::move(b.nodes), std::move(b.edges));
    net.validate();
    return net;
}

// ----------------------------------------------------------------------------
// Parameter forms

double ScalarForm::eval(int level, Rng& rng) const {
    switch (kind) {
        case Constant: return a;
        case LinearLevel: return a + b * level;
        case Uniform: return rng.uniform(a, b);
    }
    return a;
}

toml::Table ScalarForm::to_toml() const {
    toml::Table t;
    switch (kind) {
        case Constant:
            t.insert("form", "constant");
            t.insert("value", a);
            break;
        case LinearLevel:
            t.insert("form", "linear_level");
            t.insert("offset", a);
            t.insert("slope", b);
            break;
        case Uniform:
            t.insert("form", "uniform");
            t.insert("lo", a);
            t.insert("hi", b);
            break;
    }
    return t;
}

ScalarForm ScalarForm::from_toml(const toml::Table& t) {
    ScalarForm f;
    const std::string form = toml::require_string(t, "form");
    if (form == "constant") {
        f.kind = Constant;
        f.a = toml::require_double(t, "value");
    } else if (form == "linear_level") {
        f.kind = LinearLevel;
        f.a = toml::require_double(t, "offset");
        f.b = toml::require_double(t, "slope");
    } else if (form == "uniform") {
        f.kind = Uniform;
        f.a = toml::require_double(t, "lo");
        f.b = toml::require_double(t, "hi");
    } else {
        throw NetworkError("unknown scalar form '" + form + "'");
    }
    return f;
}

Frame ConeForm::sample(const Frame& current, Rng& rng) const {
    // Uniform over the solid angle of the cone: azimuth uniform,
    // cos(elevation) uniform in [cos(max), 1].
    const double azimuth = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double c = rng.uniform(std::cos(max_angle_rad), 1.0);
    return current.tilted(azimuth, std::acos(std::clamp(c, -1.0, 1.0)));
}

bool InsideForm::contains(const Vec3& p) const {
    if (kind == Box)
        return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y &&
               p.z >= lo.z && p.z <= hi.z;
    return (p - center).norm() <= radius;
}

toml::Table InsideForm::to_toml() const {
    toml::Table t;
    if (kind == Box) {
        t.insert("form", "box");
        t.insert("min", toml::Array{lo.x, lo.y, lo.z});
        t.insert("max", toml::Array{hi.x, hi.y, hi.z});
    } else {
        t.insert("form", "sphere");
        t.insert("center", toml::Array{center.x, center.y, center.z});
        t.insert("radius", radius);
    }
    return t;
}

InsideForm InsideForm::from_toml(const toml::Table& t) {
    InsideForm f;
    const std::string form = toml::require_string(t, "form");
    auto vec3 = [&](std::string_view key) {
        const toml::Array& a = t.at(key).as_array();
        if (a.size() != 3)
            throw NetworkError("expected 3 components in '" + std::string(key) + "'");
        return Vec3{a[0].as_double(), a[1].as_double(), a[2].as_double()};
    };
    if (form == "box") {
        f.kind = Box;
        f.lo = vec3("min");
        f.hi = vec3("max");
    } else if (form == "sphere") {
        f.kind = Sphere;
        f.center = vec3("center");
        f.radius = toml::require_double(t, "radius");
    } else {
        throw NetworkError("unknown inside form '" + form + "'");
    }
    return f;
}

GenParams GenConfig::build() const {
    GenParams p;
    GenConfig cfg = *this;  // captured by value in the closures
    p.edge_step_f = [cfg](const GenState& s, Rng& r) {
        return cfg.edge_step.eval(s.level, r);
    };
    p.inside_f = [cfg](const Vec3& pos) { return cfg.inside.contains(pos); };
    p.rot_f = [cfg](const GenState& s, Rng& r) {
        return cfg.rotation.sample(s.frame, r);
    };
    p.r_decay_f = [cfg](const GenState& s, Rng& r) {
        return s.radius * cfg.radius_scale.eval(s.level, r);
    };
    p.bif_occurs_f = [cfg](const GenState& s, Rng& r) {
        const double prob = cfg.bif_prob.eval(s.level, r);
        return r.uniform01() < prob;
    };
    p.bif_r_decay_f = [cfg](const GenState& s, Rng& r) {
        return s.radius * cfg.bif_radius_scale.eval(s.level, r);
    };
    p.bif_rot_f = [cfg](const GenState& s, Rng& r) {
        return cfg.bif_rotation.sample(s.frame, r);
    };
    p.max_level = max_level;
    p.seed = seed;
    p.initial_position = initial_position;
    p.initial_direction = initial_direction;
    p.initial_radius = initial_radius;
    p.max_edges = max_edges;
    return p;
}

toml::Table GenConfig::to_toml() const {
    toml::Table t;
    t.insert("seed", static_cast<std::int64_t>(seed));
    t.insert("max_level", static_cast<std::int64_t>(max_level));
    t.insert("max_edges", static_cast<std::int64_t>(max_edges));
    t.insert("initial_position",
             toml::Array{initial_position.x, initial_position.y, initial_position.z});
    t.insert("initial_direction",
             toml::Array{initial_direction.x, initial_direction.y, initial_direction.z});
    t.insert("initial_radius", initial_radius);
    t.insert("edge_step", edge_step.to_toml());
    toml::Table rot;
    rot.insert("max_angle_rad", rotation.max_angle_rad);
    t.insert("rotation", std::move(rot));
    t.insert("radius_scale", radius_scale.to_toml());
    t.insert("bif_prob", bif_prob.to_toml());
    t.insert("bif_radius_scale", bif_radius_scale.to_toml());
    toml::Table brot;
    brot.insert("max_angle_rad", bif_rotation.max_angle_rad);
    t.insert("bif_rotation", std::move(brot));
    t.insert("inside", inside.to_toml());
    return t;
}

GenConfig GenConfig::from_toml(const toml::Table& t) {
    GenConfig c;
    c.seed = static_cast<std::uint64_t>(toml::get_int(t, "seed", 0));
    c.max_level = static_cast<int>(toml::get_int(t, "max_level", 3));
    c.max_edges = static_cast<std::size_t>(toml::get_int(t, "max_edges", 1'000'000));
    auto vec3 = [&](std::string_view key, Vec3 fallback) {
        const toml::Value* v = t.find(key);
        if (v == nullptr)
            return fallback;
        const toml::Array& a = v->as_array();
        return Vec3{a.at(0).as_double(), a.at(1).as_double(), a.at(2).as_double()};
    };
    c.initial_position = vec3("initial_position", {});
    c.initial_direction = vec3("initial_direction", {0, 0, 1});
    c.initial_radius = toml::get_double(t, "initial_radius", 1e-4);
    if (t.contains("edge_step"))
        c.edge_step = ScalarForm::from_toml(t.at("edge_step").as_table());
    if (t.contains("rotation"))
        c.rotation.max_angle_rad =
            toml::require_double(t.at("rotation").as_table(), "max_angle_rad");
    if (t.contains("radius_scale"))
        c.radius_scale = ScalarForm::from_toml(t.at("radius_scale").as_table());
    if (t.contains("bif_prob"))
        c.bif_prob = ScalarForm::from_toml(t.at("bif_prob").as_table());
    if (t.contains("bif_radius_scale"))
        c.bif_radius_scale = ScalarForm::from_toml(t.at("bif_radius_scale").as_table());
    if (t.contains("bif_rotation"))
        c.bif_rotation.max_angle_rad =
            toml::require_double(t.at("bif_rotation").as_table(), "max_angle_rad");
    if (t.contains("inside"))
        c.inside = InsideForm::from_toml(t.at("inside").as_table());
    return c;
}

// ----------------------------------------------------------------------------
// File format

void save_network(const std::filesystem::path& path, const VesselNetwork& net,
                  const GenConfig* provenance) {
    toml::Table root;
    toml::Table meta;
    meta.insert("format", "bff-network");
    meta.insert("version", 1);
    if (provenance != nullptr) {
        meta.insert("seed", static_cast<std::int64_t>(provenance->seed));
        meta.insert("generator", provenance->to_toml());
    }
    root.insert("meta", std::move(meta));

    toml::Array nodes;
    for (const Node& n : net.nodes()) {
        toml::Table t;
        t.insert("id", n.id);
        t.insert("x", n.pos.x);
        t.insert("y", n.pos.y);
        t.insert("z", n.pos.z);
        nodes.emplace_back(std::move(t));
    }
    root.insert("node", std::move(nodes));

    toml::Array edges;
    for (const Edge& e : net.edges()) {
        toml::Table t;
        t.insert("id", e.id);
        t.insert("src", e.src);
        t.insert("dst", e.dst);
        t.insert("radius", e.radius);
        edges.emplace_back(std::move(t));
    }
    root.insert("edge", std::move(edges));
    toml::write_file(path, root);
}

VesselNetwork load_network(const std::filesystem::path& path) {
    const toml::Table root = toml::parse_file(path);
    std::vector<Node> nodes;
    std::vector<Edge> edges;
    if (const toml::Value* v = root.find("node"))
        for (const toml::Value& e : v->as_array()) {
            const toml::Table& t = e.as_table();
            nodes.push_back({static_cast<int>(toml::require_int(t, "id")),
                             {toml::require_double(t, "x"),
                              toml::require_double(t, "y"),
                              toml::require_double(t, "z")}});
        }
    VesselNetwork positions_only(nodes, {});
    if (const toml::Value* v = root.find("edge"))
        for (const toml::Value& e : v->as_array()) {
            const toml::Table& t = e.as_table();
            Edge ed;
            ed.id = static_cast<int>(toml::require_int(t, "id"));
            ed.src = static_cast<int>(toml::require_int(t, "src"));
            ed.dst = static_cast<int>(toml::require_int(t, "dst"));
            ed.radius = toml::require_double(t, "radius");
            const Vec3 a = positions_only.node(ed.src).pos;
            const Vec3 b = positions_only.node(ed.dst).pos;
            ed.frame = Frame::around(b - a);
            edges.push_back(ed);
        }
    VesselNetwork net(std::move(nodes), std::move(edges));
    net.validate();
    return net;
}

VesselNetwork merge_networks(const std::vector<VesselNetwork>& nets,
                             const std::vector<Vec3>& offsets) {
    std::vector<Node> nodes;
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < nets.size(); ++i) {
        const Vec3 off = i < offsets.size() ? offsets[i] : Vec3{};
        const int node_base = static_cast<int>(nodes.size());
        std::unordered_map<int, int> remap;
        for (const Node& n : nets[i].nodes()) {
            remap[n.id] = node_base + static_cast<int>(remap.size());
            nodes.push_back({remap[n.id], n.pos + off});
        }
        for (const Edge& e : nets[i].edges())
            edges.push_back({static_cast<int>(edges.size()), remap.at(e.src),
                             remap.at(e.dst), e.radius, e.frame});
    }
    return VesselNetwork(std::move(nodes), std::move(edges));
}

}  // namespace bff::net
