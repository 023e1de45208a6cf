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

#include "bff/flow.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <queue>
#include <sstream>

#include "bff/toml.hpp"  // format_double / parse_double

namespace bff::flow {

double edge_resistance(double radius, double length, double mu) {
    if (!(radius > 0.0) || !(length > 0.0) || !(mu > 0.0))
        throw FlowError("edge_resistance requires positive radius, length and viscosity");
    const double r2 = radius * radius;
    return 8.0 * mu * length / (std::numbers::pi * r2 * r2);
}

double velocity_profile(double u_max, double r_frac) {
    if (r_frac < 0.0 || r_frac > 1.0)
        throw FlowError("r_frac must lie in [0, 1]");
    return u_max * (1.0 - r_frac * r_frac);
}

double reynolds(double u, double diameter, double nu) {
    return u * diameter / nu;
}

namespace {

// Every interior node must reach some hanging node through the graph,
// otherwise the reduced system is singular. Returns a representative node
// of the first stranded component, or -1.
int find_stranded_component(const net::VesselNetwork& net,
                            const std::vector<int>& hanging_ids) {
    const auto& nodes = net.nodes();
    std::vector<char> reached(nodes.size(), 0);
    std::queue<int> todo;
    for (int id : hanging_ids) {
        reached[net.node_index(id)] = 1;
        todo.push(id);
    }
    while (!todo.empty()) {
        int id = todo.front();
        todo.pop();
        for (int ei : net.incident_edges(id)) {
            const net::Edge& e = net.edges()[ei];
            const int other = e.src == id ? e.dst : e.src;
            if (!reached[net.node_index(other)]) {
                reached[net.node_index(other)] = 1;
                todo.push(other);
            }
        }
    }
    for (std::size_t i = 0; i < nodes.size(); ++i)
        if (!reached[i])
            return nodes[i].id;
    return -1;
}

}  // namespace

FlowSolution solve_flow(const net::VesselNetwork& net, const BoundaryConditions& bc,
                        const FluidParams& fluid, const SolveOptions& opts) {
    const auto split = net.split_incidence();
    const int n_edges = static_cast<int>(net.edges().size());
    const int n_hanging = static_cast<int>(split.hanging_ids.size());
    const int n_interior = static_cast<int>(split.interior_ids.size());

    for (int id : split.hanging_ids)
        if (!bc.pressure.count(id))
            throw FlowError("no boundary pressure for hanging node " + std::to_string(id));

    if (int stranded = find_stranded_component(net, split.hanging_ids); stranded >= 0)
        throw FlowError("singular system: node " + std::to_string(stranded) +
                        " belongs to a component with no hanging node");

    // Diagonal conductance matrix entries.
    Eigen::VectorXd conductance(n_edges);
    for (int i = 0; i < n_edges; ++i) {
        const net::Edge& e = net.edges()[i];
        conductance[i] =
            1.0 / edge_resistance(e.radius, net.edge_length(e), fluid.viscosity);
    }

    Eigen::VectorXd p0(n_hanging);
    for (int i = 0; i < n_hanging; ++i)
        p0[i] = bc.pressure.at(split.hanging_ids[i]);

    // Reduced system M p_n = b with M = I_nh^T C I_nh. The pressure drop
    // across an edge written against the full incidence matrix is
    // P_e = I_h P_0 + I_nh P_n, so zero net flow at interior nodes gives
    // b = -I_nh^T C I_h P_0 for physically signed interior pressures.
    Eigen::SparseMatrix<double> weighted_interior = conductance.asDiagonal() * split.interior;
    Eigen::SparseMatrix<double> reduced = split.interior.transpose() * weighted_interior;
    Eigen::VectorXd rhs =
        -split.interior.transpose() * (conductance.asDiagonal() * (split.hanging * p0));

    Eigen::VectorXd pn(n_interior);
    if (n_interior > 0) {
        if (n_interior <= opts.direct_limit) {
            Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> solver(reduced);
            if (solver.info() != Eigen::Success)
                throw FlowError("sparse Cholesky factorization failed");
            pn = solver.solve(rhs);
        } else {
            Eigen::ConjugateGradient<Eigen::SparseMatrix<double>,
                                     Eigen::Lower | Eigen::Upper>
                solver;
            solver.setTolerance(opts.cg_tolerance);
            solver.compute(reduced);
            pn = solver.solve(rhs);
            if (solver.info() != Eigen::Success)
                throw FlowError("conjugate gradient did not converge");
        }
    }

    Eigen::VectorXd edge_dp = split.hanging * p0 + split.interior * pn;
    Eigen::VectorXd edge_flow = conductance.cwiseProduct(edge_dp);

    FlowSolution sol;
    sol.node_pressure.assign(net.nodes().size(), 0.0);
    for (int i = 0; i < n_hanging; ++i)
        sol.node_pressure[net.node_index(split.hanging_ids[i])] = p0[i];
    for (int i = 0; i < n_interior; ++i)
        sol.node_pressure[net.node_index(split.interior_ids[i])] = pn[i];
    sol.edge_dp.assign(edge_dp.data(), edge_dp.data() + n_edges);
    sol.edge_flow.assign(edge_flow.data(), edge_flow.data() + n_edges);

    sol.edge_umax.resize(n_edges);
    for (int i = 0; i < n_edges; ++i) {
        const double r = net.edges()[i].radius;
        sol.edge_umax[i] =
            2.0 * std::fabs(sol.edge_flow[i]) / (std::numbers::pi * r * r);
    }

    // Interior conservation residual, relative to the largest flow.
    double max_q = 0.0;
    for (double q : sol.edge_flow)
        max_q = std::max(max_q, std::fabs(q));
    double worst = 0.0;
    for (int id : split.interior_ids) {
        double sum = 0.0;
        for (int ei : net.incident_edges(id)) {
            const net::Edge& e = net.edges()[ei];
            sum += e.src == id ? -sol.edge_flow[ei] : sol.edge_flow[ei];
        }
        worst = std::max(worst, std::fabs(sum));
    }
    sol.conservation_residual = max_q > 0.0 ? worst / max_q : 0.0;
    return sol;
}

void write_csv(const net::VesselNetwork& net, const FlowSolution& sol,
               const std::filesystem::path& edges_path,
               const std::filesystem::path& nodes_path) {
    {
        std::ofstream out(edges_path, std::ios::binary);
        if (!out)
            throw FlowError("cannot write '" + edges_path.string() + "'");
        out << "edge_id,flow_m3s,dp_pa,umax_ms\n";
        for (std::size_t i = 0; i < net.edges().size(); ++i)
            out << net.edges()[i].id << ',' << toml::format_double(sol.edge_flow[i])
                << ',' << toml::format_double(sol.edge_dp[i]) << ','
                << toml::format_double(sol.edge_umax[i]) << '\n';
    }
    {
        std::ofstream out(nodes_path, std::ios::binary);
        if (!out)
            throw FlowError("cannot write '" + nodes_path.string() + "'");
        out << "node_id,pressure_pa\n";
        for (std::size_t i = 0; i < net.nodes().size(); ++i)
            out << net.nodes()[i].id << ','
                << toml::format_double(sol.node_pressure[i]) << '\n';
    }
}

FlowSolution read_csv(const net::VesselNetwork& net,
                      const std::filesystem::path& edges_path,
                      const std::filesystem::path& nodes_path) {
    FlowSolution sol;
    sol.node_pressure.assign(net.nodes().size(), 0.0);
    sol.edge_dp.assign(net.edges().size(), 0.0);
    sol.edge_flow.assign(net.edges().size(), 0.0);
    sol.edge_umax.assign(net.edges().size(), 0.0);

    auto split_line = [](const std::string& line) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            cells.push_back(cell);
        return cells;
    };

    std::ifstream ein(edges_path);
    if (!ein)
        throw FlowError("cannot open '" + edges_path.string() + "'");
    std::string line;
    std::getline(ein, line);  // header
    while (std::getline(ein, line)) {
        if (line.empty())
            continue;
        auto cells = split_line(line);
        if (cells.size() < 4)
            throw FlowError("bad edge row in '" + edges_path.string() + "'");
        const int idx = net.edge_index(std::stoi(cells[0]));
        sol.edge_flow[idx] = toml::parse_double(cells[1]);
        sol.edge_dp[idx] = toml::parse_double(cells[2]);
        sol.edge_umax[idx] = toml::parse_double(cells[3]);
    }

    std::ifstream nin(nodes_path);
    if (!nin)
        throw FlowError("cannot open '" + nodes_path.string() + "'");
    std::getline(nin, line);
    while (std::getline(nin, line)) {
        if (line.empty())
            continue;
        auto cells = split_line(line);
        if (cells.size() < 2)
            throw FlowError("bad node row in '" + nodes_path.string() + "'");
        sol.node_pressure[net.node_index(std::stoi(cells[0]))] =
            toml::parse_double(cells[1]);
    }
    return sol;
}

}  // namespace bff::flow
