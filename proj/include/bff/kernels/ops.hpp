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

#include <cstddef>
#include <cstdint>

namespace bff::kernels {

/// Hot inner loops of the RF synthesis / beamforming chain, exposed as a
/// function-pointer table so a vectorized build can be swapped in at runtime.
///
/// All variants of one entry compute the same arithmetic; orderings may
/// differ, so cross-variant agreement is to rounding (~1e-13 relative),
/// not bitwise.
struct Ops {
    const char* name;

    /// sum_i a[i]*b[i]  (FIR taps against a signal window)
    double (*dot)(const double* a, const double* b, std::size_t n);

    /// y[i] += alpha*x[i]  (scaled overlap-add of a pulse into an RF line)
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);

    /// acc[i] += w[i] * (src[idx[i]] + frac[i]*(src[idx[i]+1] - src[idx[i]]))
    /// Fractional-delay gather used by delay-and-sum; the caller guarantees
    /// 0 <= idx[i] and idx[i]+1 within src for every i.
    void (*gather_lerp_acc)(const double* src, const std::int32_t* idx,
                            const double* frac, const double* w, double* acc,
                            std::size_t n);

    /// out[i] = sqrt(re[i]^2 + im[i]^2)  (envelope of an analytic signal)
    void (*magnitude)(const double* re, const double* im, double* out,
                      std::size_t n);
};

const Ops& scalar_ops();
const Ops& avx2_ops();

/// True when the running CPU has AVX2 and FMA.
bool avx2_available();

/// Pick a table: BFF_KERNELS=scalar|avx2 forces one (throws if the forced
/// one cannot run here or the value is unknown); unset picks the fastest
/// supported. Consults the environment on every call.
const Ops& select_ops();

/// select_ops() memoized on first use; the default everywhere else.
const Ops& ops();

}  // namespace bff::kernels
