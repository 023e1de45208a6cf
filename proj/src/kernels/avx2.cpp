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

// Compiled with -mavx2 -mfma (see CMakeLists); nothing here may run unless
// avx2_available() said yes.

#include <immintrin.h>

#include <cmath>

#include "bff/kernels/ops.hpp"

namespace bff::kernels {
namespace {

double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

double dot(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i),
                               _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4),
                               _mm256_loadu_pd(b + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4)
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i),
                               _mm256_loadu_pd(b + i), acc0);
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i)
        s += a[i] * b[i];
    return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d vy = _mm256_loadu_pd(y + i);
        const __m256d vx = _mm256_loadu_pd(x + i);
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, vx, vy));
    }
    for (; i < n; ++i)
        y[i] += alpha * x[i];
}

void gather_lerp_acc(const double* src, const std::int32_t* idx,
                     const double* frac, const double* w, double* acc,
                     std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m128i vi =
            _mm_loadu_si128(reinterpret_cast<const __m128i*>(idx + i));
        const __m256d s0 = _mm256_i32gather_pd(src, vi, 8);
        const __m256d s1 = _mm256_i32gather_pd(src + 1, vi, 8);
        const __m256d f = _mm256_loadu_pd(frac + i);
        const __m256d lerp =
            _mm256_fmadd_pd(f, _mm256_sub_pd(s1, s0), s0);
        const __m256d va = _mm256_loadu_pd(acc + i);
        _mm256_storeu_pd(acc + i,
                         _mm256_fmadd_pd(_mm256_loadu_pd(w + i), lerp, va));
    }
    for (; i < n; ++i) {
        const double s0 = src[idx[i]];
        const double s1 = src[idx[i] + 1];
        acc[i] += w[i] * (s0 + frac[i] * (s1 - s0));
    }
}

void magnitude(const double* re, const double* im, double* out,
               std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d vr = _mm256_loadu_pd(re + i);
        const __m256d vi = _mm256_loadu_pd(im + i);
        const __m256d sq =
            _mm256_fmadd_pd(vr, vr, _mm256_mul_pd(vi, vi));
        _mm256_storeu_pd(out + i, _mm256_sqrt_pd(sq));
    }
    for (; i < n; ++i)
        out[i] = std::sqrt(re[i] * re[i] + im[i] * im[i]);
}

}  // namespace

const Ops& avx2_ops() {
    static const Ops table{"avx2", dot, axpy, gather_lerp_acc, magnitude};
    return table;
}

}  // namespace bff::kernels
