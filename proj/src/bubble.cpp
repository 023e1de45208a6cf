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

#include "bff/bubble.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace bff::bubble {

void BubbleParams::finalize() {
    if (R_break <= 0.0)
        R_break = R_buckle * std::sqrt(1.0 + sigma_water / chi);
    if (R_ruptured <= 0.0)
        R_ruptured = R_break;
    if (!(rho_l > 0) || !(sigma_water > 0) || !(kappa > 0) || !(chi > 0) ||
        !(R0 > 0) || !(R_buckle > 0) || !(P0_ambient > 0) || !(c > 0))
        throw BubbleError("bubble constants must be positive");
    if (mu_l < 0 || kappa_s < 0)
        throw BubbleError("loss terms must be non-negative");
    if (!(R_buckle <= R0) || !(R0 <= R_break))
        throw BubbleError("need R_buckle <= R0 <= R_break");
}

double surface_tension(double R, bool ruptured, const BubbleParams& p) {
    if (ruptured)
        return R >= p.R_ruptured ? p.sigma_water : 0.0;
    if (R <= p.R_buckle)
        return 0.0;
    if (p.R_break <= 0.0 || R <= p.R_break)
        return p.chi * (R * R / (p.R_buckle * p.R_buckle) - 1.0);
    // past the elastic range but the rupture flag has not latched yet
    // (can only happen transiently inside a step): clamp at the water value
    return p.sigma_water;
}

double marmottant_rhs(double R, double Rdot, double p_ac, bool ruptured,
                      const BubbleParams& p) {
    // gas pressure constant fixed by equilibrium at R0 (unruptured shell)
    const double a_gas =
        p.P0_ambient + 2.0 * surface_tension(p.R0, false, p) / p.R0;
    const double balance =
        a_gas * std::pow(R / p.R0, -3.0 * p.kappa) *
            (1.0 - 3.0 * p.kappa * Rdot / p.c) -
        p.P0_ambient - 2.0 * surface_tension(R, ruptured, p) / R -
        4.0 * p.mu_l * Rdot / R - 4.0 * p.kappa_s * Rdot / (R * R) - p_ac;
    return (balance - 1.5 * p.rho_l * Rdot * Rdot) / (p.rho_l * R);
}

namespace {

struct State {
    double R, V;
};

template <typename Accel>
State step_rk4(State s, double t, double dt, const Accel& a) {
    const double k1r = s.V, k1v = a(s.R, s.V, t);
    const double k2r = s.V + 0.5 * dt * k1v,
                 k2v = a(s.R + 0.5 * dt * k1r, s.V + 0.5 * dt * k1v,
                         t + 0.5 * dt);
    const double k3r = s.V + 0.5 * dt * k2v,
                 k3v = a(s.R + 0.5 * dt * k2r, s.V + 0.5 * dt * k2v,
                         t + 0.5 * dt);
    const double k4r = s.V + dt * k3v,
                 k4v = a(s.R + dt * k3r, s.V + dt * k3v, t + dt);
    return {s.R + dt / 6.0 * (k1r + 2 * k2r + 2 * k3r + k4r),
            s.V + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)};
}

template <typename Accel>
State step_euler(State s, double t, double dt, const Accel& a) {
    return {s.R + dt * s.V, s.V + dt * a(s.R, s.V, t)};
}

}  // namespace

BubbleTrace integrate_radius_fn(const std::function<double(double)>& p_ac,
                                double duration, double dt,
                                const BubbleParams& params, Method method) {
    if (!(dt > 0.0) || !(duration >= 0.0))
        throw BubbleError("need dt > 0 and duration >= 0");
    BubbleParams p = params;
    p.finalize();

    const std::size_t n_steps =
        static_cast<std::size_t>(std::llround(duration / dt));
    const double collapse_r = 0.05 * p.R0;

    BubbleTrace tr;
    tr.dt = dt;
    tr.t.reserve(n_steps + 1);
    tr.R.reserve(n_steps + 1);
    tr.Rdot.reserve(n_steps + 1);
    tr.Rddot.reserve(n_steps + 1);
    tr.ruptured.reserve(n_steps + 1);

    State s{p.R0, 0.0};
    bool ruptured = false;

    auto record = [&](double t) {
        tr.t.push_back(t);
        tr.R.push_back(s.R);
        tr.Rdot.push_back(s.V);
        tr.Rddot.push_back(marmottant_rhs(s.R, s.V, p_ac(t), ruptured, p));
        tr.ruptured.push_back(ruptured ? 1 : 0);
    };
    record(0.0);

    for (std::size_t i = 0; i < n_steps; ++i) {
        const double t = i * dt;
        // the rupture flag is frozen within a step and re-latched after it
        auto accel = [&](double R, double V, double tt) {
            return marmottant_rhs(R, V, p_ac(tt), ruptured, p);
        };
        State next = method == Method::RK4 ? step_rk4(s, t, dt, accel)
                                           : step_euler(s, t, dt, accel);

        if (!(next.R >= collapse_r)) {  // low or NaN (violent crush)
            // near-collapse stiffness: retry once at a tenth of the step
            next = s;
            bool still_ok = true;
            for (int sub = 0; sub < 10 && still_ok; ++sub) {
                const double ts = t + sub * (dt / 10.0);
                next = method == Method::RK4
                           ? step_rk4(next, ts, dt / 10.0, accel)
                           : step_euler(next, ts, dt / 10.0, accel);
                still_ok = next.R >= collapse_r;
            }
            if (!still_ok)
                throw BubbleError("bubble collapse (R < 0.05 R0) at t = " +
                                  std::to_string(t) + " s");
        }
        if (!std::isfinite(next.R) || !std::isfinite(next.V))
            throw BubbleError("integration blew up at t = " +
                              std::to_string(t) + " s");
        s = next;
        if (s.R > p.R_break)
            ruptured = true;
        record((i + 1) * dt);
    }
    return tr;
}

BubbleTrace integrate_radius(const DriveSignal& drive, const BubbleParams& p,
                             Method method, int oversample) {
    if (oversample < 1)
        throw BubbleError("oversample must be >= 1");
    if (!(drive.fs > 0.0) || drive.p.size() < 2)
        throw BubbleError("drive needs a rate and at least two samples");
    for (double v : drive.p)
        if (!std::isfinite(v))
            throw BubbleError("drive contains non-finite samples");

    const double dt_in = 1.0 / drive.fs;
    const double duration = dt_in * static_cast<double>(drive.p.size() - 1);
    const double dt = dt_in / oversample;
    auto lerp = [&](double t) {
        const double x = t * drive.fs;
        if (x <= 0.0)
            return drive.p.front();
        const auto i = static_cast<std::size_t>(x);
        if (i + 1 >= drive.p.size())
            return drive.p.back();
        const double f = x - static_cast<double>(i);
        return drive.p[i] * (1.0 - f) + drive.p[i + 1] * f;
    };
    return integrate_radius_fn(lerp, duration, dt, p, method);
}

std::vector<double> scattered_pressure(const BubbleTrace& trace, double d,
                                       double rho_l) {
    if (!(d > 0.0))
        throw BubbleError("distance must be positive");
    std::vector<double> out(trace.R.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double R = trace.R[i], V = trace.Rdot[i], A = trace.Rddot[i];
        out[i] = rho_l / d * (R * R * A + 2.0 * R * V * V);
    }
    return out;
}

BubbleParams sonovue_preset() {
    BubbleParams p;  // defaults are the fitted values
    p.finalize();
    return p;
}

toml::Table BubbleParams::to_toml() const {
    toml::Table t;
    t.insert("rho_l", rho_l);
    t.insert("sigma_water", sigma_water);
    t.insert("mu_l", mu_l);
    t.insert("kappa", kappa);
    t.insert("kappa_s", kappa_s);
    t.insert("chi", chi);
    t.insert("R0", R0);
    t.insert("R_buckle", R_buckle);
    t.insert("R_break", R_break);
    t.insert("R_ruptured", R_ruptured);
    t.insert("P0_ambient", P0_ambient);
    t.insert("c", c);
    return t;
}

BubbleParams BubbleParams::from_toml(const toml::Table& t) {
    BubbleParams p;
    p.rho_l = toml::get_double(t, "rho_l", p.rho_l);
    p.sigma_water = toml::get_double(t, "sigma_water", p.sigma_water);
    p.mu_l = toml::get_double(t, "mu_l", p.mu_l);
    p.kappa = toml::get_double(t, "kappa", p.kappa);
    p.kappa_s = toml::get_double(t, "kappa_s", p.kappa_s);
    p.chi = toml::get_double(t, "chi", p.chi);
    p.R0 = toml::get_double(t, "R0", p.R0);
    p.R_buckle = toml::get_double(t, "R_buckle", p.R_buckle);
    p.R_break = toml::get_double(t, "R_break", 0.0);
    p.R_ruptured = toml::get_double(t, "R_ruptured", 0.0);
    p.P0_ambient = toml::get_double(t, "P0_ambient", p.P0_ambient);
    p.c = toml::get_double(t, "c", p.c);
    p.finalize();
    return p;
}

void write_trace(const std::filesystem::path& bin_path,
                 const std::filesystem::path& json_path,
                 const BubbleTrace& trace, const BubbleParams& params) {
    {
        std::ofstream out(bin_path, std::ios::binary);
        if (!out)
            throw BubbleError("cannot write '" + bin_path.string() + "'");
        auto col = [&](const std::vector<double>& v) {
            out.write(reinterpret_cast<const char*>(v.data()),
                      static_cast<std::streamsize>(v.size() * sizeof(double)));
        };
        col(trace.t);
        col(trace.R);
        col(trace.Rdot);
        col(trace.Rddot);
    }
    nlohmann::json j;
    j["n_samples"] = trace.t.size();
    j["dt"] = trace.dt;
    j["columns"] = {"t", "R", "Rdot", "Rddot"};
    nlohmann::json jp;
    jp["rho_l"] = params.rho_l;
    jp["sigma_water"] = params.sigma_water;
    jp["mu_l"] = params.mu_l;
    jp["kappa"] = params.kappa;
    jp["kappa_s"] = params.kappa_s;
    jp["chi"] = params.chi;
    jp["R0"] = params.R0;
    jp["R_buckle"] = params.R_buckle;
    jp["R_break"] = params.R_break;
    jp["R_ruptured"] = params.R_ruptured;
    jp["P0_ambient"] = params.P0_ambient;
    jp["c"] = params.c;
    j["params"] = jp;
    std::ofstream js(json_path, std::ios::binary);
    if (!js)
        throw BubbleError("cannot write '" + json_path.string() + "'");
    js << j.dump(2) << '\n';
}

BubbleTrace read_trace(const std::filesystem::path& bin_path,
                       const std::filesystem::path& json_path) {
    std::ifstream js(json_path);
    if (!js)
        throw BubbleError("cannot open '" + json_path.string() + "'");
    nlohmann::json j;
    js >> j;
    const std::size_t n = j.at("n_samples").get<std::size_t>();

    BubbleTrace tr;
    tr.dt = j.at("dt").get<double>();
    std::ifstream in(bin_path, std::ios::binary);
    if (!in)
        throw BubbleError("cannot open '" + bin_path.string() + "'");
    auto col = [&](std::vector<double>& v) {
        v.resize(n);
        in.read(reinterpret_cast<char*>(v.data()),
                static_cast<std::streamsize>(n * sizeof(double)));
        if (static_cast<std::size_t>(in.gcount()) != n * sizeof(double))
            throw BubbleError("trace file '" + bin_path.string() +
                              "' is truncated");
    };
    col(tr.t);
    col(tr.R);
    col(tr.Rdot);
    col(tr.Rddot);
    tr.ruptured.assign(n, 0);
    return tr;
}

}  // namespace bff::bubble
