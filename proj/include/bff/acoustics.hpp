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

#include <complex>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bff/bubble.hpp"
#include "bff/geom.hpp"
#include "bff/rng.hpp"
#include "bff/toml.hpp"
#include "bff/tracks.hpp"

namespace bff::acoustics {

struct AcousticsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Linear array on the x axis at z = 0, firing plane waves.
///
/// Elements are points; the shared element impulse response is a zero-phase
/// Gaussian-windowed cosine at f0 whose width follows the fractional
/// bandwidth. The excitation is an n_cycles cosine burst, also centered on
/// its peak, so echo arrival times are purely geometric. tx_amplitude is the
/// single-element pressure at d_ref, spread as 1/distance; each element
/// carries tx_amplitude / n_elements.
struct TransducerConfig {
    int n_elements = 64;
    double pitch = 3e-4;             // m
    double f0 = 5e6;                 // Hz
    double bandwidth = 0.6;          // fractional -6 dB width of the IR
    double fs = 25e6;                // Hz, receive sampling
    double c = 1540.0;               // m/s
    int n_cycles = 3;                // excitation length
    std::string tx_window = "hann";  // excitation window: hann | rect
    std::vector<double> angles{0.0};  // plane-wave steer angles, rad
    double tx_amplitude = 5e4;       // Pa, per element at d_ref
    double d_ref = 1e-2;             // m, amplitude reference distance
    int n_samples = 0;               // per receive line; 0 = from max_depth
    double max_depth = 3e-2;         // m, sets n_samples when derived
    int oversample = 8;              // ODE rate = oversample * fs
    double ring_down = 2e-6;         // s, scatter kept after the pulse exits
    bool baffled = false;            // multiply paths by z/d when set

    double element_x(int i) const {
        return (i - 0.5 * (n_elements - 1)) * pitch;
    }
    /// Firing delay of element e for a steered plane wave; the earliest
    /// element fires at t = 0.
    double firing_delay(int e, double angle_rad) const;
    int line_samples() const;  // n_samples, or the max_depth-derived count
    double ode_rate() const { return fs * oversample; }
    void validate() const;

    toml::Table to_toml() const;
    static TransducerConfig from_toml(const toml::Table& t);
};

/// Additive noise on the receive lines. dB values are relative to
/// signal_ref (the RF is in arbitrary linear units, so the reference level
/// is explicit). Colored noise enters before time-gain compensation and is
/// amplified with depth; white noise enters after. Infinities switch the
/// respective term off.
struct NoiseConfig {
    double white_snr_db = std::numeric_limits<double>::infinity();
    double colored_level_db = -std::numeric_limits<double>::infinity();
    double colored_f_lo = 2e6;  // Hz
    double colored_f_hi = 8e6;  // Hz
    double tgc_db_per_cm = 0.0;
    double signal_ref = 1.0;  // linear RF amplitude that 0 dB refers to

    bool any() const;
    void validate(double fs) const;

    toml::Table to_toml() const;
    static NoiseConfig from_toml(const toml::Table& t);
};

/// One plane-wave acquisition: n_elements rows of n_samples, sample k at
/// time k / fs after the earliest element fired.
struct RFFrame {
    int n_elements = 0;
    int n_samples = 0;
    double fs = 0.0;
    std::vector<double> data;  // element-major rows

    RFFrame() = default;
    RFFrame(int ne, int ns, double rate)
        : n_elements(ne), n_samples(ns), fs(rate),
          data(static_cast<std::size_t>(ne) * ns, 0.0) {}
    double& at(int e, int s) {
        return data[static_cast<std::size_t>(e) * n_samples + s];
    }
    double at(int e, int s) const {
        return data[static_cast<std::size_t>(e) * n_samples + s];
    }
};

/// A scattered-pressure series on the fine (ODE-rate) grid, starting at t0
/// on the acquisition clock.
struct ScatterSeries {
    double rate = 0.0;  // Hz
    double t0 = 0.0;    // s
    std::vector<double> p;
};

/// Pixel (ix, iz) sits at x = x0 + ix*dx, z = z0 + iz*dz; storage is
/// row-major in z (index iz*nx + ix).
struct ImageGrid {
    double x0 = 0.0, z0 = 0.0;
    double dx = 0.0, dz = 0.0;
    int nx = 0, nz = 0;

    std::size_t size() const {
        return static_cast<std::size_t>(nx) * nz;
    }
    void validate() const;
    toml::Table to_toml() const;
    static ImageGrid from_toml(const toml::Table& t);
};

struct BModeImage {
    ImageGrid grid;
    double dynamic_range = 60.0;    // dB
    double peak = 0.0;              // linear envelope maximum
    std::vector<double> envelope;   // linear magnitude
    std::vector<double> db;         // in [-dynamic_range, 0]
};

/// Element impulse response sampled at `rate`, unit peak, odd length with
/// the zero-phase center at index (size-1)/2.
std::vector<double> element_impulse(const TransducerConfig& tx, double rate);

/// Excitation convolved with the element impulse response at `rate`,
/// unit peak, centered like element_impulse.
std::vector<double> effective_pulse(const TransducerConfig& tx, double rate);

/// Transmit pressure over the whole acquisition at the ODE rate for one
/// plane wave: per element, the effective pulse centered at
/// firing_delay + distance/c, scaled (tx_amplitude/n)·(d_ref/d).
/// Throws when the point is not in front of the array (z <= 0).
bubble::DriveSignal transmit_pressure_at(const Vec3& point,
                                         const TransducerConfig& tx,
                                         double angle_rad);

/// Back-propagate a scattered series to every element: convolve once with
/// the element impulse response, then per element delay by distance/c,
/// scale by 1/distance (the series is referenced to 1 m), and resample to
/// fs. Returns a full-length frame holding just this contribution.
RFFrame receive_convolve(const ScatterSeries& scatter,
                         const Vec3& point,
                         const TransducerConfig& tx);

/// Synthesize the per-angle RF of one frame: for every event row, drive the
/// bubble over its active window, integrate the shell ODE, and fold the
/// scattered pressure into the lines; then add noise. Bubble contributions
/// are accumulated in row order regardless of thread count. Integration
/// failures carry the bubble id.
std::vector<RFFrame> simulate_frame(
    const std::vector<tracks::Event>& events,
    const std::function<bubble::BubbleParams(std::int64_t)>& params_of,
    const TransducerConfig& tx, const NoiseConfig& noise, const Rng& noise_rng);

/// Delay-and-sum with dynamic receive focusing on analytic (Hilbert) rows,
/// Hann apodization across the full aperture, coherent sum over angles.
/// frames[i] is the acquisition for tx.angles[i].
std::vector<std::complex<double>> beamform_das(
    const std::vector<RFFrame>& frames, const TransducerConfig& tx,
    const ImageGrid& grid);

/// Magnitude, peak-normalized, 20·log10, clipped to [-dynamic_range, 0].
/// An all-zero image maps to the floor everywhere.
BModeImage envelope_log(const std::vector<std::complex<double>>& image,
                        const ImageGrid& grid, double dynamic_range = 60.0);

/// A whole acquisition series, stored frame-major as float32:
/// [frame][angle][element][sample].
struct RFVideo {
    std::uint32_t n_elements = 0;
    std::uint32_t n_samples = 0;
    std::uint32_t n_frames = 0;
    std::uint32_t n_angles = 0;
    double fs = 0.0, f0 = 0.0, c = 0.0;
    std::vector<float> data;

    std::size_t frame_floats() const {
        return static_cast<std::size_t>(n_angles) * n_elements * n_samples;
    }
    std::size_t offset(std::uint32_t frame, std::uint32_t angle) const {
        return frame * frame_floats() +
               static_cast<std::size_t>(angle) * n_elements * n_samples;
    }
};

void write_rf(const std::filesystem::path& path, const RFVideo& video);
RFVideo read_rf(const std::filesystem::path& path);

/// 8-bit PGM of the dB map (floor -> 0, 0 dB -> 255).
void write_pgm(const std::filesystem::path& path, const BModeImage& image);
/// Raw float32 dB map plus a JSON sidecar describing the grid.
void write_bmode_f32(const std::filesystem::path& raw_path,
                     const std::filesystem::path& json_path,
                     const BModeImage& image);

}  // namespace bff::acoustics
