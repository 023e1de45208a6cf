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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include "bff/flow.hpp"
#include "bff/network.hpp"
#include "ref_impl.hpp"

using namespace bff;
using net::Edge;
using net::Node;
using net::VesselNetwork;

namespace {

Edge mk_edge(int id, int src, int dst, double radius,
             const std::vector<Node>& nodes) {
    Edge e;
    e.id = id;
    e.src = src;
    e.dst = dst;
    e.radius = radius;
    e.frame = Frame::around(nodes[dst].pos - nodes[src].pos);
    return e;
}

}  // namespace

TEST_SUITE_BEGIN("flow");

TEST_CASE("segment resistance matches the closed form") {
    // independent arithmetic route via pow()
    const double mu = 3.5e-3, r = 5e-5, l = 1e-3;
    const double want = 8.0 * mu * l / (3.14159265358979323846 * std::pow(r, 4));
    CHECK(flow::edge_resistance(r, l, mu) ==
          doctest::Approx(want).epsilon(1e-14));
    // sanity on the magnitude: ~1.426e12 Pa s / m^3 for these numbers
    CHECK(flow::edge_resistance(r, l, mu) ==
          doctest::Approx(1.4260e12).epsilon(1e-3));
    CHECK_THROWS_AS((void)flow::edge_resistance(0, l, mu), flow::FlowError);
    CHECK_THROWS_AS((void)flow::edge_resistance(r, -1, mu), flow::FlowError);
    CHECK_THROWS_AS((void)flow::edge_resistance(r, l, 0), flow::FlowError);
}

TEST_CASE("parabolic profile endpoints and midpoint") {
    CHECK(flow::velocity_profile(2.0, 0.0) == 2.0);
    CHECK(flow::velocity_profile(2.0, 1.0) == 0.0);
    CHECK(flow::velocity_profile(2.0, 0.5) == doctest::Approx(1.5));
    CHECK_THROWS_AS((void)flow::velocity_profile(1.0, 1.5), flow::FlowError);
    CHECK_THROWS_AS((void)flow::velocity_profile(1.0, -0.1), flow::FlowError);
}

TEST_CASE("reynolds number") {
    // 10 mm/s in a 100 um vessel, nu = mu/rho of the default fluid
    const flow::FluidParams fl;
    const double nu = fl.viscosity / fl.density;
    CHECK(flow::reynolds(0.01, 1e-4, nu) == doctest::Approx(0.01 * 1e-4 / nu));
    CHECK(flow::reynolds(0.01, 1e-4, nu) < 2300.0);  // laminar regime
}

TEST_CASE("single tube: flow equals pressure drop over resistance") {
    std::vector<Node> nodes = {{0, {0, 0, 0}}, {1, {0, 0, 1e-3}}};
    std::vector<Edge> edges = {mk_edge(0, 0, 1, 5e-5, nodes)};
    VesselNetwork net(std::move(nodes), std::move(edges));

    flow::BoundaryConditions bc;
    bc.pressure[0] = 160.0;
    bc.pressure[1] = 60.0;
    flow::FluidParams fl;  // mu = 3.5e-3
    auto sol = flow::solve_flow(net, bc, fl);

    const double xi = 8.0 * fl.viscosity * 1e-3 /
                      (3.14159265358979323846 * std::pow(5e-5, 4));
    const double q_want = 100.0 / xi;  // ~7.01e-11 m^3/s
    CHECK(sol.edge_dp[0] == doctest::Approx(100.0).epsilon(1e-12));
    CHECK(sol.edge_flow[0] == doctest::Approx(q_want).epsilon(1e-12));
    CHECK(sol.edge_umax[0] ==
          doctest::Approx(2.0 * q_want /
                          (3.14159265358979323846 * 5e-5 * 5e-5))
              .epsilon(1e-12));
    CHECK(sol.node_pressure[0] == 160.0);
    CHECK(sol.node_pressure[1] == 60.0);

    // reversed boundary: flow flips sign, centreline speed stays positive
    std::swap(bc.pressure[0], bc.pressure[1]);
    auto rev = flow::solve_flow(net, bc, fl);
    CHECK(rev.edge_flow[0] == doctest::Approx(-q_want).epsilon(1e-12));
    CHECK(rev.edge_umax[0] > 0.0);
}

TEST_CASE("symmetric fork splits the inflow exactly in half") {
    // parent along z, children mirrored in x so their lengths are bitwise equal
    std::vector<Node> nodes = {{0, {0, 0, 0}},
                               {1, {0, 0, 1e-3}},
                               {2, {-5e-4, 0, 1.5e-3}},
                               {3, {5e-4, 0, 1.5e-3}}};
    std::vector<Edge> edges = {mk_edge(0, 0, 1, 8e-5, nodes),
                               mk_edge(1, 1, 2, 5e-5, nodes),
                               mk_edge(2, 1, 3, 5e-5, nodes)};
    VesselNetwork net(std::move(nodes), std::move(edges));

    flow::BoundaryConditions bc;
    bc.pressure[0] = 1000.0;
    bc.pressure[2] = 0.0;
    bc.pressure[3] = 0.0;
    auto sol = flow::solve_flow(net, bc, {});

    const double q_in = sol.edge_flow[0];
    REQUIRE(q_in > 0.0);
    CHECK(std::fabs(sol.edge_flow[1] / q_in - 0.5) < 1e-12);
    CHECK(std::fabs(sol.edge_flow[2] / q_in - 0.5) < 1e-12);
    CHECK(sol.conservation_residual < 1e-13);
}

TEST_CASE("matches the dense reference on random trees") {
    Rng rng(606);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 3 + static_cast<int>(rng.uniform_index(60));
        VesselNetwork net = ref::random_tree(rng, n);
        auto bc_map = ref::random_boundary(net, rng);
        flow::BoundaryConditions bc{bc_map};
        auto sol = flow::solve_flow(net, bc, {});
        auto want = ref::solve_flow_dense(net, bc_map, flow::FluidParams{}.viscosity);

        double max_q = 1e-300;
        for (double q : want.edge_flow)
            max_q = std::max(max_q, std::fabs(q));
        for (std::size_t i = 0; i < net.edges().size(); ++i)
            CHECK(std::fabs(sol.edge_flow[i] - want.edge_flow[i]) <=
                  1e-9 * max_q);
        for (const auto& nd : net.nodes())
            CHECK(std::fabs(sol.node_pressure[net.node_index(nd.id)] -
                            want.node_pressure.at(nd.id)) <= 1e-9 * 13000.0);
        CHECK(sol.conservation_residual < 1e-10);
    }
}

TEST_CASE("matches the dense reference on meshes with loops") {
    Rng rng(607);
    for (int trial = 0; trial < 15; ++trial) {
        VesselNetwork net = ref::random_graph(
            rng, 10 + static_cast<int>(rng.uniform_index(40)), 8);
        // chords may eat leaves; a flow problem needs at least two
        std::map<int, int> deg;
        for (const auto& e : net.edges()) {
            deg[e.src]++;
            deg[e.dst]++;
        }
        int leaves = 0;
        for (auto& [id, d] : deg)
            leaves += d == 1;
        if (leaves < 2)
            continue;
        auto bc_map = ref::random_boundary(net, rng);
        flow::BoundaryConditions bc{bc_map};
        auto sol = flow::solve_flow(net, bc, {});
        auto want = ref::solve_flow_dense(net, bc_map, flow::FluidParams{}.viscosity);

        double max_q = 1e-300;
        for (double q : want.edge_flow)
            max_q = std::max(max_q, std::fabs(q));
        for (std::size_t i = 0; i < net.edges().size(); ++i)
            CHECK(std::fabs(sol.edge_flow[i] - want.edge_flow[i]) <=
                  1e-9 * max_q);
    }
}

TEST_CASE("interior pressures obey the boundary extremes") {
    Rng rng(608);
    for (int trial = 0; trial < 20; ++trial) {
        VesselNetwork net = ref::random_tree(rng, 50);
        auto bc_map = ref::random_boundary(net, rng, 200.0, 9000.0);
        auto sol = flow::solve_flow(net, {bc_map}, {});
        double lo = 1e300, hi = -1e300;
        for (auto& [id, p] : bc_map) {
            lo = std::min(lo, p);
            hi = std::max(hi, p);
        }
        for (double p : sol.node_pressure) {
            CHECK(p >= lo - 1e-9 * hi);
            CHECK(p <= hi + 1e-9 * hi);
        }
    }
}

TEST_CASE("uniform boundary pressure means no flow anywhere") {
    Rng rng(609);
    VesselNetwork net = ref::random_tree(rng, 30);
    std::map<int, double> bc_map;
    for (int id : net.hanging_nodes())
        bc_map[id] = 5000.0;
    auto sol = flow::solve_flow(net, {bc_map}, {});
    // residual flows only reflect factorization roundoff; a real 5 kPa drop
    // in these vessels would drive ~1e-8 m^3/s
    for (std::size_t i = 0; i < net.edges().size(); ++i)
        CHECK(std::fabs(sol.edge_flow[i]) < 1e-15);
    for (std::size_t i = 0; i < net.nodes().size(); ++i)
        CHECK(sol.node_pressure[i] == doctest::Approx(5000.0));
}

TEST_CASE("iterative backend agrees with the direct one") {
    Rng rng(610);
    VesselNetwork net = ref::random_tree(rng, 200);
    auto bc_map = ref::random_boundary(net, rng);
    flow::SolveOptions direct;
    flow::SolveOptions iterative;
    iterative.direct_limit = 0;  // force conjugate gradient
    auto a = flow::solve_flow(net, {bc_map}, {}, direct);
    auto b = flow::solve_flow(net, {bc_map}, {}, iterative);
    double max_q = 1e-300;
    for (double q : a.edge_flow)
        max_q = std::max(max_q, std::fabs(q));
    for (std::size_t i = 0; i < net.edges().size(); ++i)
        CHECK(std::fabs(a.edge_flow[i] - b.edge_flow[i]) <= 1e-6 * max_q);
}

TEST_CASE("missing boundary pressure raises") {
    Rng rng(611);
    VesselNetwork net = ref::random_tree(rng, 10);
    auto bc_map = ref::random_boundary(net, rng);
    bc_map.erase(bc_map.begin());  // drop one leaf
    CHECK_THROWS_AS((void)flow::solve_flow(net, {bc_map}, {}),
                    flow::FlowError);
}

TEST_CASE("component without any boundary node raises") {
    std::vector<Node> nodes = {{0, {0, 0, 0}},      {1, {1e-3, 0, 0}},
                               {2, {0, 5e-3, 0}},   {3, {1e-3, 5e-3, 0}},
                               {4, {2e-3, 5e-3, 0}}, {5, {1e-3, 6e-3, 0}}};
    // component A: 0-1 (two leaves). component B: a triangle 2-3-4 plus leaf 5
    std::vector<Edge> edges = {
        mk_edge(0, 0, 1, 5e-5, nodes), mk_edge(1, 2, 3, 5e-5, nodes),
        mk_edge(2, 3, 4, 5e-5, nodes), mk_edge(3, 4, 2, 5e-5, nodes),
        mk_edge(4, 3, 5, 5e-5, nodes)};
    VesselNetwork net(std::move(nodes), std::move(edges));
    std::map<int, double> bc_map = {{0, 100.0}, {1, 0.0}, {5, 50.0}};
    // fine: every component reaches a boundary node
    CHECK_NOTHROW((void)flow::solve_flow(net, {bc_map}, {}));

    // now strand the triangle by removing its only leaf edge
    std::vector<Node> nodes2 = {{0, {0, 0, 0}},    {1, {1e-3, 0, 0}},
                                {2, {0, 5e-3, 0}}, {3, {1e-3, 5e-3, 0}},
                                {4, {2e-3, 5e-3, 0}}};
    std::vector<Edge> edges2 = {
        mk_edge(0, 0, 1, 5e-5, nodes2), mk_edge(1, 2, 3, 5e-5, nodes2),
        mk_edge(2, 3, 4, 5e-5, nodes2), mk_edge(3, 4, 2, 5e-5, nodes2)};
    VesselNetwork stranded(std::move(nodes2), std::move(edges2));
    std::map<int, double> bc2 = {{0, 100.0}, {1, 0.0}};
    CHECK_THROWS_WITH_AS((void)flow::solve_flow(stranded, {bc2}, {}),
                         doctest::Contains("component"), flow::FlowError);
}

TEST_CASE("csv round-trip preserves every number bit-exactly") {
    namespace fs = std::filesystem;
    Rng rng(612);
    VesselNetwork net = ref::random_tree(rng, 25);
    auto sol = flow::solve_flow(net, {ref::random_boundary(net, rng)}, {});
    const fs::path ep = fs::temp_directory_path() / "bff_flow_e.csv";
    const fs::path np = fs::temp_directory_path() / "bff_flow_n.csv";
    flow::write_csv(net, sol, ep, np);
    auto back = flow::read_csv(net, ep, np);
    fs::remove(ep);
    fs::remove(np);
    for (std::size_t i = 0; i < net.edges().size(); ++i) {
        CHECK(back.edge_flow[i] == sol.edge_flow[i]);
        CHECK(back.edge_dp[i] == sol.edge_dp[i]);
        CHECK(back.edge_umax[i] == sol.edge_umax[i]);
    }
    for (std::size_t i = 0; i < net.nodes().size(); ++i)
        CHECK(back.node_pressure[i] == sol.node_pressure[i]);
}

TEST_SUITE_END();
