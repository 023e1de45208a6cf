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

#include <cmath>

#include "bff/kernels/ops.hpp"

namespace bff::kernels {
namespace {

double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        s += a[i] * b[i];
    return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        y[i] += alpha * x[i];
}

void gather_lerp_acc(const double* src, const std::int32_t* idx,
                     const double* frac, const double* w, double* acc,
                     std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const double s0 = src[idx[i]];
        const double s1 = src[idx[i] + 1];
        acc[i] += w[i] * (s0 + frac[i] * (s1 - s0));
    }
}

void magnitude(const double* re, const double* im, double* out,
               std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        out[i] = std::sqrt(re[i] * re[i] + im[i] * im[i]);
}

}  // namespace

const Ops& scalar_ops() {
    static const Ops table{"scalar", dot, axpy, gather_lerp_acc, magnitude};
    return table;
}

}  // namespace bff::kernels
