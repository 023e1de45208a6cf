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

#include "bff/acoustics.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <exception>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <numbers>

#include "bff/kernels/ops.hpp"
#include "bff/parallel.hpp"

namespace bff::acoustics {

namespace {

constexpr double kPi = std::numbers::pi;

double ir_sigma_t(const TransducerConfig& tx) {
    // Gaussian whose spectrum is -6 dB at f0*(1 +/- bandwidth/2)
    return std::sqrt(2.0 * std::numbers::ln2) / (kPi * tx.bandwidth * tx.f0);
}

// one-sided extents of the shared pulse tables, seconds
double ir_half_t(const TransducerConfig& tx) { return 3.5 * ir_sigma_t(tx); }
double exc_half_t(const TransducerConfig& tx) {
    return 0.5 * tx.n_cycles / tx.f0;
}

// element-to-point geometry shared by transmit and receive
struct Path {
    double dist;
    double delay;
    double gain;  // 1/dist spreading times the optional baffle obliquity
};

Path element_path(const TransducerConfig& tx, int e, const Vec3& p) {
    const double ex = tx.element_x(e);
    const double dx = p.x - ex, dy = p.y, dz = p.z;
    const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
    double g = 1.0 / d;
    if (tx.baffled)
        g *= dz / d;
    return {d, d / tx.c, g};
}

double lerp_at(const std::vector<double>& v, double pos) {
    if (pos <= 0.0 || pos >= static_cast<double>(v.size() - 1))
        return 0.0;
    const auto i = static_cast<std::size_t>(pos);
    const double f = pos - static_cast<double>(i);
    return v[i] + f * (v[i + 1] - v[i]);
}

// full correlation with an even-symmetric kernel == convolution; the input
// is zero-padded so output sample j aligns its center tap with input j
std::vector<double> conv_same_center(const std::vector<double>& x,
                                     const std::vector<double>& h) {
    const std::size_t n = x.size(), m = h.size();
    const std::size_t half = (m - 1) / 2;
    std::vector<double> padded(n + 2 * half + m, 0.0);
    std::copy(x.begin(), x.end(), padded.begin() + static_cast<long>(m - 1));
    std::vector<double> out(n + 2 * half);
    const auto& k = kernels::ops();
    for (std::size_t j = 0; j < out.size(); ++j)
        out[j] = k.dot(padded.data() + j, h.data(), m);
    return out;  // out[half + i] is the response centered on x[i]
}

}  // namespace

double TransducerConfig::firing_delay(int e, double angle_rad) const {
    const double s = std::sin(angle_rad);
    const double first = std::min(element_x(0) * s,
                                  element_x(n_elements - 1) * s);
    return (element_x(e) * s - first) / c;
}

int TransducerConfig::line_samples() const {
    if (n_samples > 0)
        return n_samples;
    const double span = 2.0 * max_depth / c + n_cycles / f0 + ring_down;
    return static_cast<int>(std::ceil(span * fs));
}

void TransducerConfig::validate() const {
    if (n_elements < 1)
        throw AcousticsError("need at least one element");
    if (!(pitch > 0.0))
        throw AcousticsError("pitch must be positive");
    if (!(f0 > 0.0) || !(fs > 4.0 * f0))
        throw AcousticsError("need fs > 4*f0 > 0");
    if (!(bandwidth > 0.0) || !(bandwidth < 2.0))
        throw AcousticsError("fractional bandwidth must lie in (0, 2)");
    if (!(c > 0.0))
        throw AcousticsError("speed of sound must be positive");
    if (n_cycles < 1)
        throw AcousticsError("excitation needs at least one cycle");
    if (tx_window != "hann" && tx_window != "rect")
        throw AcousticsError("tx_window must be hann or rect");
    if (angles.empty())
        throw AcousticsError("need at least one plane-wave angle");
    if (oversample < 1)
        throw AcousticsError("oversample must be >= 1");
    if (n_samples <= 0 && !(max_depth > 0.0))
        throw AcousticsError("need n_samples or a positive max_depth");
    if (!(tx_amplitude >= 0.0) || !(d_ref > 0.0))
        throw AcousticsError("bad transmit amplitude reference");
    if (!(ring_down >= 0.0))
        throw AcousticsError("ring_down cannot be negative");
}

toml::Table TransducerConfig::to_toml() const {
    toml::Table t;
    t.insert("n_elements", static_cast<std::int64_t>(n_elements));
    t.insert("pitch", pitch);
    t.insert("f0", f0);
    t.insert("bandwidth", bandwidth);
    t.insert("fs", fs);
    t.insert("c", c);
    t.insert("n_cycles", static_cast<std::int64_t>(n_cycles));
    t.insert("tx_window", tx_window);
    toml::Array a;
    for (double ang : angles)
        a.push_back(toml::Value(ang));
    t.insert("angles", std::move(a));
    t.insert("tx_amplitude", tx_amplitude);
    t.insert("d_ref", d_ref);
    if (n_samples > 0)
        t.insert("n_samples", static_cast<std::int64_t>(n_samples));
    t.insert("max_depth", max_depth);
    t.insert("oversample", static_cast<std::int64_t>(oversample));
    t.insert("ring_down", ring_down);
    t.insert("baffled", baffled);
    return t;
}

TransducerConfig TransducerConfig::from_toml(const toml::Table& t) {
    TransducerConfig x;
    x.n_elements = static_cast<int>(toml::get_int(t, "n_elements", x.n_elements));
    x.pitch = toml::get_double(t, "pitch", x.pitch);
    x.f0 = toml::get_double(t, "f0", x.f0);
    x.bandwidth = toml::get_double(t, "bandwidth", x.bandwidth);
    x.fs = toml::get_double(t, "fs", x.fs);
    x.c = toml::get_double(t, "c", x.c);
    x.n_cycles = static_cast<int>(toml::get_int(t, "n_cycles", x.n_cycles));
    x.tx_window = toml::get_string(t, "tx_window", x.tx_window);
    if (const toml::Value* v = t.find("angles")) {
        x.angles.clear();
        for (const auto& e : v->as_array())
            x.angles.push_back(e.as_double());
    }
    x.tx_amplitude = toml::get_double(t, "tx_amplitude", x.tx_amplitude);
    x.d_ref = toml::get_double(t, "d_ref", x.d_ref);
    x.n_samples = static_cast<int>(toml::get_int(t, "n_samples", x.n_samples));
    x.max_depth = toml::get_double(t, "max_depth", x.max_depth);
    x.oversample = static_cast<int>(toml::get_int(t, "oversample", x.oversample));
    x.ring_down = toml::get_double(t, "ring_down", x.ring_down);
    x.baffled = toml::get_bool(t, "baffled", x.baffled);
    x.validate();
    return x;
}

bool NoiseConfig::any() const {
    return std::isfinite(white_snr_db) || std::isfinite(colored_level_db) ||
           tgc_db_per_cm != 0.0;
}

void NoiseConfig::validate(double fs) const {
    if (std::isfinite(colored_level_db)) {
        if (!(colored_f_lo > 0.0) || !(colored_f_lo < colored_f_hi) ||
            !(colored_f_hi < 0.5 * fs))
            throw AcousticsError("colored band must satisfy 0 < f_lo < f_hi < fs/2");
    }
    if (!(signal_ref > 0.0))
        throw AcousticsError("signal_ref must be positive");
}

toml::Table NoiseConfig::to_toml() const {
    toml::Table t;
    if (std::isfinite(white_snr_db))
        t.insert("white_snr_db", white_snr_db);
    if (std::isfinite(colored_level_db)) {
        t.insert("colored_level_db", colored_level_db);
        t.insert("colored_f_lo", colored_f_lo);
        t.insert("colored_f_hi", colored_f_hi);
    }
    t.insert("tgc_db_per_cm", tgc_db_per_cm);
    t.insert("signal_ref", signal_ref);
    return t;
}

NoiseConfig NoiseConfig::from_toml(const toml::Table& t) {
    NoiseConfig n;
    n.white_snr_db = toml::get_double(t, "white_snr_db", n.white_snr_db);
    n.colored_level_db =
        toml::get_double(t, "colored_level_db", n.colored_level_db);
    n.colored_f_lo = toml::get_double(t, "colored_f_lo", n.colored_f_lo);
    n.colored_f_hi = toml::get_double(t, "colored_f_hi", n.colored_f_hi);
    n.tgc_db_per_cm = toml::get_double(t, "tgc_db_per_cm", n.tgc_db_per_cm);
    n.signal_ref = toml::get_double(t, "signal_ref", n.signal_ref);
    return n;
}

void ImageGrid::validate() const {
    if (nx < 1 || nz < 1)
        throw AcousticsError("image grid needs at least one pixel");
    if (!(dx > 0.0) || !(dz > 0.0))
        throw AcousticsError("pixel spacing must be positive");
}

toml::Table ImageGrid::to_toml() const {
    toml::Table t;
    t.insert("x0", x0);
    t.insert("z0", z0);
    t.insert("dx", dx);
    t.insert("dz", dz);
    t.insert("nx", static_cast<std::int64_t>(nx));
    t.insert("nz", static_cast<std::int64_t>(nz));
    return t;
}

ImageGrid ImageGrid::from_toml(const toml::Table& t) {
    ImageGrid g;
    g.x0 = toml::require_double(t, "x0");
    g.z0 = toml::require_double(t, "z0");
    g.dx = toml::require_double(t, "dx");
    g.dz = toml::require_double(t, "dz");
    g.nx = static_cast<int>(toml::require_int(t, "nx"));
    g.nz = static_cast<int>(toml::require_int(t, "nz"));
    g.validate();
    return g;
}

std::vector<double> element_impulse(const TransducerConfig& tx, double rate) {
    const double sigma = ir_sigma_t(tx);
    const int half = static_cast<int>(std::ceil(3.5 * sigma * rate));
    std::vector<double> h(2 * half + 1);
    for (int i = -half; i <= half; ++i) {
        const double t = i / rate;
        h[i + half] = std::cos(2.0 * kPi * tx.f0 * t) *
                      std::exp(-0.5 * t * t / (sigma * sigma));
    }
    return h;  // center value is exactly 1
}

std::vector<double> effective_pulse(const TransducerConfig& tx, double rate) {
    const double half_t = exc_half_t(tx);
    const int half = static_cast<int>(std::ceil(half_t * rate));
    std::vector<double> exc(2 * half + 1, 0.0);
    for (int i = -half; i <= half; ++i) {
        const double t = i / rate;
        if (std::fabs(t) > half_t)
            continue;
        const double w = tx.tx_window == "rect"
                             ? 1.0
                             : 0.5 * (1.0 + std::cos(kPi * t / half_t));
        exc[i + half] = w * std::cos(2.0 * kPi * tx.f0 * t);
    }
    const std::vector<double> ir = element_impulse(tx, rate);
    std::vector<double> pulse = conv_same_center(exc, ir);
    double peak = 0.0;
    for (double v : pulse)
        peak = std::max(peak, std::fabs(v));
    if (peak > 0.0)
        for (double& v : pulse)
            v /= peak;
    return pulse;  // odd length, center at (size-1)/2
}

namespace {

// transmit drive samples k0..k0+n on the fine grid for one plane wave
std::vector<double> drive_window(const Vec3& point,
                                 const TransducerConfig& tx, double angle,
                                 const std::vector<double>& pulse,
                                 std::size_t k0, std::size_t n) {
    const double rate = tx.ode_rate();
    const double center = 0.5 * static_cast<double>(pulse.size() - 1);
    const double per_el = tx.tx_amplitude / tx.n_elements * tx.d_ref;
    std::vector<double> p(n, 0.0);
    for (int e = 0; e < tx.n_elements; ++e) {
        const Path path = element_path(tx, e, point);
        const double t_arr = tx.firing_delay(e, angle) + path.delay;
        const double g = per_el * path.gain;
        // pulse support on the fine grid
        const double pos0 = t_arr * rate - center;  // fine index of pulse[0]
        auto lo = static_cast<long>(std::floor(pos0));
        auto hi = static_cast<long>(std::ceil(pos0 + pulse.size() - 1));
        lo = std::max(lo, static_cast<long>(k0));
        hi = std::min(hi, static_cast<long>(k0 + n) - 1);
        for (long k = lo; k <= hi; ++k)
            p[k - static_cast<long>(k0)] += g * lerp_at(pulse, k - pos0);
    }
    return p;
}

struct WindowBounds {
    std::size_t k0;       // first fine sample
    std::size_t n;        // fine sample count
    double t_min, t_max;  // element arrival-time extremes
};

WindowBounds active_window(const Vec3& point, const TransducerConfig& tx,
                           double angle, std::size_t n_fine) {
    const double rate = tx.ode_rate();
    double t_min = std::numeric_limits<double>::infinity(), t_max = 0.0;
    for (int e = 0; e < tx.n_elements; ++e) {
        const double t =
            tx.firing_delay(e, angle) + element_path(tx, e, point).delay;
        t_min = std::min(t_min, t);
        t_max = std::max(t_max, t);
    }
    const double pad = exc_half_t(tx) + ir_half_t(tx);
    const double lo = t_min - pad - 2.0 / rate;
    const double hi = t_max + pad + tx.ring_down;
    const auto k0 = static_cast<std::size_t>(
        std::max(0.0, std::floor(lo * rate)));
    const auto k1 = std::min(
        n_fine, static_cast<std::size_t>(std::max(0.0, std::ceil(hi * rate))) + 1);
    return {k0, k1 > k0 ? k1 - k0 : 0, t_min, t_max};
}

}  // namespace

bubble::DriveSignal transmit_pressure_at(const Vec3& point,
                                         const TransducerConfig& tx,
                                         double angle_rad) {
    tx.validate();
    if (!(point.z > 0.0))
        throw AcousticsError("point must be in front of the array (z > 0)");
    const auto n_fine =
        static_cast<std::size_t>(tx.line_samples()) * tx.oversample;
    const std::vector<double> pulse = effective_pulse(tx, tx.ode_rate());
    bubble::DriveSignal d;
    d.fs = tx.ode_rate();
    d.p = drive_window(point, tx, angle_rad, pulse, 0, n_fine);
    return d;
}

RFFrame receive_convolve(const ScatterSeries& scatter, const Vec3& point,
                         const TransducerConfig& tx) {
    tx.validate();
    if (!(point.z > 0.0))
        throw AcousticsError("point must be in front of the array (z > 0)");
    if (scatter.rate <= 0.0 || scatter.p.empty())
        throw AcousticsError("scatter series needs a rate and samples");
    const int ns = tx.line_samples();
    RFFrame rf(tx.n_elements, ns, tx.fs);

    const std::vector<double> ir = element_impulse(tx, scatter.rate);
    const std::size_t half = (ir.size() - 1) / 2;
    const std::vector<double> conv = conv_same_center(scatter.p, ir);
    // conv[j] is centered on time scatter.t0 + (j - half)/rate
    const double t_base = scatter.t0 - static_cast<double>(half) / scatter.rate;

    for (int e = 0; e < tx.n_elements; ++e) {
        const Path path = element_path(tx, e, point);
        // scatter is referenced to 1 m, so spreading is just path.gain
        for (int k = 0; k < ns; ++k) {
            const double pos =
                ((k / tx.fs - path.delay) - t_base) * scatter.rate;
            if (pos <= 0.0)
                continue;
            if (pos >= static_cast<double>(conv.size() - 1))
                break;
            rf.at(e, k) += path.gain * lerp_at(conv, pos);
        }
    }
    return rf;
}

namespace {

// everything one bubble adds to one plane-wave acquisition
struct Contribution {
    int k_first = 0;  // first coarse sample
    int nk = 0;
    std::vector<double> rows;  // element-major, n_elements x nk

    double& at(int e, int k) { return rows[static_cast<std::size_t>(e) * nk + k]; }
};

Contribution bubble_contribution(const tracks::Event& ev,
                                 const bubble::BubbleParams& params,
                                 const TransducerConfig& tx, double angle,
                                 const std::vector<double>& pulse,
                                 const std::vector<double>& ir) {
    const double rate = tx.ode_rate();
    const int ns = tx.line_samples();
    const auto n_fine = static_cast<std::size_t>(ns) * tx.oversample;
    const Vec3 point = ev.pos;
    if (!(point.z > 0.0))
        throw AcousticsError("bubble is behind the array (z <= 0)");

    const WindowBounds win = active_window(point, tx, angle, n_fine);
    Contribution out;
    if (win.n < 2)
        return out;

    bubble::DriveSignal drive;
    drive.fs = rate;
    drive.p = drive_window(point, tx, angle, pulse, win.k0, win.n);

    const bubble::BubbleTrace trace =
        bubble::integrate_radius(drive, params, bubble::Method::RK4, 1);
    const std::vector<double> scatter =
        bubble::scattered_pressure(trace, 1.0, params.rho_l);

    const std::size_t half = (ir.size() - 1) / 2;
    const std::vector<double> conv = conv_same_center(scatter, ir);
    const double t0 = static_cast<double>(win.k0) / rate;
    const double t_base = t0 - static_cast<double>(half) / rate;
    const double conv_dur = static_cast<double>(conv.size() - 1) / rate;

    // coarse sample range over all elements
    double d_min = std::numeric_limits<double>::infinity(), d_max = 0.0;
    for (int e = 0; e < tx.n_elements; ++e) {
        const double d = element_path(tx, e, point).delay;
        d_min = std::min(d_min, d);
        d_max = std::max(d_max, d);
    }
    int k_first = static_cast<int>(std::floor((t_base + d_min) * tx.fs));
    int k_last = static_cast<int>(std::ceil((t_base + conv_dur + d_max) * tx.fs));
    k_first = std::clamp(k_first, 0, ns);
    k_last = std::clamp(k_last, 0, ns - 1);
    if (k_last < k_first)
        return out;

    out.k_first = k_first;
    out.nk = k_last - k_first + 1;
    out.rows.assign(static_cast<std::size_t>(tx.n_elements) * out.nk, 0.0);
    for (int e = 0; e < tx.n_elements; ++e) {
        const Path path = element_path(tx, e, point);
        for (int k = 0; k < out.nk; ++k) {
            const double t = (k_first + k) / tx.fs;
            const double pos = (t - path.delay - t_base) * rate;
            if (pos <= 0.0 || pos >= static_cast<double>(conv.size() - 1))
                continue;
            out.at(e, k) += path.gain * lerp_at(conv, pos);
        }
    }
    return out;
}

std::vector<double> bandpass_taps(double fs, double f_lo, double f_hi,
                                  int n_taps) {
    // windowed-sinc band-pass, unit noise-power gain
    std::vector<double> h(n_taps);
    const int half = (n_taps - 1) / 2;
    for (int i = 0; i < n_taps; ++i) {
        const int m = i - half;
        const double w = 0.5 * (1.0 + std::cos(kPi * m / (half + 1.0)));
        double v;
        if (m == 0) {
            v = 2.0 * (f_hi - f_lo) / fs;
        } else {
            const double t = kPi * m;
            v = (std::sin(2.0 * kPi * f_hi * m / fs) -
                 std::sin(2.0 * kPi * f_lo * m / fs)) /
                t;
        }
        h[i] = w * v;
    }
    double power = 0.0;
    for (double v : h)
        power += v * v;
    const double scale = 1.0 / std::sqrt(power);
    for (double& v : h)
        v *= scale;
    return h;
}

}  // namespace

std::vector<RFFrame> simulate_frame(
    const std::vector<tracks::Event>& events,
    const std::function<bubble::BubbleParams(std::int64_t)>& params_of,
    const TransducerConfig& tx, const NoiseConfig& noise,
    const Rng& noise_rng) {
    tx.validate();
    noise.validate(tx.fs);
    const int ns = tx.line_samples();
    const double rate = tx.ode_rate();
    const std::vector<double> pulse = effective_pulse(tx, rate);
    const std::vector<double> ir = element_impulse(tx, rate);
    const auto& k = kernels::ops();

    std::vector<RFFrame> out;
    out.reserve(tx.angles.size());
    for (std::size_t a = 0; a < tx.angles.size(); ++a) {
        const double angle = tx.angles[a];
        RFFrame frame(tx.n_elements, ns, tx.fs);

        const auto batch = static_cast<std::size_t>(thread_count());
        std::vector<Contribution> contribs(std::min(batch, events.size() + 1));
        std::vector<std::exception_ptr> errors(contribs.size());
        for (std::size_t base = 0; base < events.size(); base += batch) {
            const std::size_t m = std::min(batch, events.size() - base);
            parallel_for(m, [&](std::size_t i) {
                try {
                    contribs[i] = bubble_contribution(
                        events[base + i], params_of(events[base + i].bubble_id),
                        tx, angle, pulse, ir);
                    errors[i] = nullptr;
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            });
            for (std::size_t i = 0; i < m; ++i) {
                if (errors[i]) {
                    try {
                        std::rethrow_exception(errors[i]);
                    } catch (const std::exception& ex) {
                        throw AcousticsError(
                            "bubble " +
                            std::to_string(events[base + i].bubble_id) + ": " +
                            ex.what());
                    }
                }
                const Contribution& cb = contribs[i];
                if (cb.nk == 0)
                    continue;
                for (int e = 0; e < tx.n_elements; ++e)
                    k.axpy(1.0,
                           cb.rows.data() + static_cast<std::size_t>(e) * cb.nk,
                           frame.data.data() +
                               static_cast<std::size_t>(e) * ns + cb.k_first,
                           static_cast<std::size_t>(cb.nk));
            }
        }

        // noise: colored before gain, white after
        if (noise.any()) {
            const bool colored = std::isfinite(noise.colored_level_db);
            const bool white = std::isfinite(noise.white_snr_db);
            const double sigma_c =
                colored ? noise.signal_ref *
                              std::pow(10.0, noise.colored_level_db / 20.0)
                        : 0.0;
            const double sigma_w =
                white ? noise.signal_ref *
                            std::pow(10.0, -noise.white_snr_db / 20.0)
                      : 0.0;
            std::vector<double> taps;
            if (colored)
                taps = bandpass_taps(tx.fs, noise.colored_f_lo,
                                     noise.colored_f_hi, 63);
            const Rng angle_rng = noise_rng.stream(a);
            std::vector<double> raw;
            for (int e = 0; e < tx.n_elements; ++e) {
                const Rng elem = angle_rng.stream(static_cast<std::uint64_t>(e));
                double* row =
                    frame.data.data() + static_cast<std::size_t>(e) * ns;
                if (colored) {
                    Rng cr = elem.stream(0);
                    raw.resize(ns + taps.size() - 1);
                    for (double& v : raw)
                        v = sigma_c * cr.normal();
                    for (int s = 0; s < ns; ++s)
                        row[s] += k.dot(raw.data() + s, taps.data(), taps.size());
                }
                if (noise.tgc_db_per_cm != 0.0) {
                    const double per_sample =
                        noise.tgc_db_per_cm * (tx.c / (2.0 * tx.fs)) * 100.0;
                    for (int s = 0; s < ns; ++s)
                        row[s] *= std::pow(10.0, per_sample * s / 20.0);
                }
                if (white) {
                    Rng wr = elem.stream(1);
                    for (int s = 0; s < ns; ++s)
                        row[s] += sigma_w * wr.normal();
                }
            }
        }
        out.push_back(std::move(frame));
    }
    return out;
}

namespace {

// analytic signal via FFT: keep DC/Nyquist, double positives, drop negatives
void hilbert_rows(const RFFrame& rf, std::vector<double>& re,
                  std::vector<double>& im) {
    const int ns = rf.n_samples;
    const std::size_t padded = static_cast<std::size_t>(ns) + 2;
    re.assign(static_cast<std::size_t>(rf.n_elements) * padded, 0.0);
    im.assign(re.size(), 0.0);

    fftw_complex* buf = fftw_alloc_complex(ns);
    fftw_complex* spec = fftw_alloc_complex(ns);
    fftw_plan fwd = fftw_plan_dft_1d(ns, buf, spec, FFTW_FORWARD, FFTW_ESTIMATE);
    fftw_plan bwd = fftw_plan_dft_1d(ns, spec, buf, FFTW_BACKWARD, FFTW_ESTIMATE);

    for (int e = 0; e < rf.n_elements; ++e) {
        for (int s = 0; s < ns; ++s) {
            buf[s][0] = rf.at(e, s);
            buf[s][1] = 0.0;
        }
        fftw_execute(fwd);
        const int half = ns / 2;
        for (int s = 1; s < (ns + 1) / 2; ++s) {
            spec[s][0] *= 2.0;
            spec[s][1] *= 2.0;
        }
        for (int s = half + 1; s < ns; ++s) {
            spec[s][0] = 0.0;
            spec[s][1] = 0.0;
        }
        fftw_execute(bwd);
        double* rrow = re.data() + static_cast<std::size_t>(e) * padded;
        double* irow = im.data() + static_cast<std::size_t>(e) * padded;
        for (int s = 0; s < ns; ++s) {
            rrow[s] = buf[s][0] / ns;
            irow[s] = buf[s][1] / ns;
        }
    }
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(bwd);
    fftw_free(buf);
    fftw_free(spec);
}

}  // namespace

std::vector<std::complex<double>> beamform_das(const std::vector<RFFrame>& frames,
                                               const TransducerConfig& tx,
                                               const ImageGrid& grid) {
    tx.validate();
    grid.validate();
    if (frames.size() != tx.angles.size())
        throw AcousticsError("need one acquisition per plane-wave angle");
    const std::size_t npix = grid.size();
    std::vector<double> acc_re(npix, 0.0), acc_im(npix, 0.0);

    // apodization: Hann across the full aperture
    std::vector<double> apod(tx.n_elements, 1.0);
    if (tx.n_elements > 1)
        for (int e = 0; e < tx.n_elements; ++e)
            apod[e] = 0.5 - 0.5 * std::cos(2.0 * kPi * e / (tx.n_elements - 1));

    std::vector<double> px(grid.nx), pz(grid.nz);
    for (int ix = 0; ix < grid.nx; ++ix)
        px[ix] = grid.x0 + ix * grid.dx;
    for (int iz = 0; iz < grid.nz; ++iz)
        pz[iz] = grid.z0 + iz * grid.dz;

    const auto& k = kernels::ops();
    std::vector<double> re, im;
    std::vector<std::int32_t> idx(npix);
    std::vector<double> frac(npix), w(npix);
    std::vector<double> t_tx(npix);

    for (std::size_t a = 0; a < frames.size(); ++a) {
        const RFFrame& rf = frames[a];
        if (rf.n_elements != tx.n_elements || rf.n_samples <= 1)
            throw AcousticsError("acquisition does not match the transducer");
        hilbert_rows(rf, re, im);
        const std::size_t padded = static_cast<std::size_t>(rf.n_samples) + 2;
        const double angle = tx.angles[a];
        const double s = std::sin(angle), cth = std::cos(angle);
        const double first = std::min(tx.element_x(0) * s,
                                      tx.element_x(tx.n_elements - 1) * s);
        for (int iz = 0; iz < grid.nz; ++iz)
            for (int ix = 0; ix < grid.nx; ++ix)
                t_tx[static_cast<std::size_t>(iz) * grid.nx + ix] =
                    (px[ix] * s + pz[iz] * cth - first) / tx.c;

        for (int e = 0; e < tx.n_elements; ++e) {
            const double ex = tx.element_x(e);
            const double zero = rf.n_samples;  // points at the zero padding
            for (int iz = 0; iz < grid.nz; ++iz) {
                const double z2 = pz[iz] * pz[iz];
                const std::size_t rowbase =
                    static_cast<std::size_t>(iz) * grid.nx;
                for (int ix = 0; ix < grid.nx; ++ix) {
                    const double ddx = px[ix] - ex;
                    const double t = t_tx[rowbase + ix] +
                                     std::sqrt(ddx * ddx + z2) / tx.c;
                    double pos = t * tx.fs;
                    if (!(pos >= 0.0) || pos >= rf.n_samples - 1)
                        pos = zero;
                    const double fl = std::floor(pos);
                    idx[rowbase + ix] = static_cast<std::int32_t>(fl);
                    frac[rowbase + ix] = pos - fl;
                }
            }
            std::fill(w.begin(), w.end(), apod[e]);
            const double* rrow = re.data() + static_cast<std::size_t>(e) * padded;
            const double* irow = im.data() + static_cast<std::size_t>(e) * padded;
            k.gather_lerp_acc(rrow, idx.data(), frac.data(), w.data(),
                              acc_re.data(), npix);
            k.gather_lerp_acc(irow, idx.data(), frac.data(), w.data(),
                              acc_im.data(), npix);
        }
    }

    std::vector<std::complex<double>> img(npix);
    for (std::size_t i = 0; i < npix; ++i)
        img[i] = {acc_re[i], acc_im[i]};
    return img;
}

BModeImage envelope_log(const std::vector<std::complex<double>>& image,
                        const ImageGrid& grid, double dynamic_range) {
    grid.validate();
    if (image.size() != grid.size())
        throw AcousticsError("image size does not match the grid");
    if (!(dynamic_range > 0.0))
        throw AcousticsError("dynamic range must be positive");
    BModeImage bm;
    bm.grid = grid;
    bm.dynamic_range = dynamic_range;
    const std::size_t n = image.size();
    std::vector<double> re(n), im(n);
    for (std::size_t i = 0; i < n; ++i) {
        re[i] = image[i].real();
        im[i] = image[i].imag();
    }
    bm.envelope.resize(n);
    kernels::ops().magnitude(re.data(), im.data(), bm.envelope.data(), n);
    bm.peak = 0.0;
    for (double v : bm.envelope)
        bm.peak = std::max(bm.peak, v);
    bm.db.assign(n, -dynamic_range);
    if (bm.peak > 0.0)
        for (std::size_t i = 0; i < n; ++i) {
            if (bm.envelope[i] > 0.0)
                bm.db[i] = std::clamp(
                    20.0 * std::log10(bm.envelope[i] / bm.peak),
                    -dynamic_range, 0.0);
        }
    return bm;
}

namespace {

constexpr char kRfMagic[4] = {'B', 'F', 'R', 'F'};
constexpr std::uint32_t kRfVersion = 1;

template <typename T>
void put(std::ofstream& f, const T& v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
void get(std::ifstream& f, T& v) {
    f.read(reinterpret_cast<char*>(&v), sizeof v);
}

}  // namespace

void write_rf(const std::filesystem::path& path, const RFVideo& video) {
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw AcousticsError("cannot write " + path.string());
    f.write(kRfMagic, sizeof kRfMagic);
    put(f, kRfVersion);
    put(f, video.n_elements);
    put(f, video.n_samples);
    put(f, video.n_frames);
    put(f, video.n_angles);
    put(f, video.fs);
    put(f, video.f0);
    put(f, video.c);
    f.write(reinterpret_cast<const char*>(video.data.data()),
            static_cast<std::streamsize>(video.data.size() * sizeof(float)));
    if (!f)
        throw AcousticsError("short write to " + path.string());
}

RFVideo read_rf(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw AcousticsError("cannot read " + path.string());
    char magic[4];
    f.read(magic, sizeof magic);
    if (!f || std::memcmp(magic, kRfMagic, sizeof magic) != 0)
        throw AcousticsError(path.string() + " is not an RF file");
    std::uint32_t version = 0;
    get(f, version);
    if (version != kRfVersion)
        throw AcousticsError("unsupported RF file version " +
                             std::to_string(version));
    RFVideo v;
    get(f, v.n_elements);
    get(f, v.n_samples);
    get(f, v.n_frames);
    get(f, v.n_angles);
    get(f, v.fs);
    get(f, v.f0);
    get(f, v.c);
    const std::size_t n = static_cast<std::size_t>(v.n_frames) *
                          v.n_angles * v.n_elements * v.n_samples;
    v.data.resize(n);
    f.read(reinterpret_cast<char*>(v.data.data()),
           static_cast<std::streamsize>(n * sizeof(float)));
    if (!f)
        throw AcousticsError("truncated RF file " + path.string());
    return v;
}

void write_pgm(const std::filesystem::path& path, const BModeImage& image) {
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw AcousticsError("cannot write " + path.string());
    f << "P5\n" << image.grid.nx << " " << image.grid.nz << "\n255\n";
    for (double v : image.db) {
        const double unit = (v + image.dynamic_range) / image.dynamic_range;
        const int g = std::clamp(static_cast<int>(std::lround(unit * 255.0)),
                                 0, 255);
        f.put(static_cast<char>(g));
    }
    if (!f)
        throw AcousticsError("short write to " + path.string());
}

void write_bmode_f32(const std::filesystem::path& raw_path,
                     const std::filesystem::path& json_path,
                     const BModeImage& image) {
    {
        std::ofstream f(raw_path, std::ios::binary);
        if (!f)
            throw AcousticsError("cannot write " + raw_path.string());
        for (double v : image.db) {
            const auto x = static_cast<float>(v);
            f.write(reinterpret_cast<const char*>(&x), sizeof x);
        }
        if (!f)
            throw AcousticsError("short write to " + raw_path.string());
    }
    nlohmann::json j;
    j["kind"] = "bmode_db";
    j["nx"] = image.grid.nx;
    j["nz"] = image.grid.nz;
    j["x0"] = image.grid.x0;
    j["z0"] = image.grid.z0;
    j["dx"] = image.grid.dx;
    j["dz"] = image.grid.dz;
    j["dynamic_range"] = image.dynamic_range;
    j["peak"] = image.peak;
    std::ofstream f(json_path);
    if (!f)
        throw AcousticsError("cannot write " + json_path.string());
    f << j.dump(2) << "\n";
}

}  // namespace bff::acoustics
