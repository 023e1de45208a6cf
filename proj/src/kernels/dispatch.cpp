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

#include <cstdlib>
#include <stdexcept>
#include <string>

#include "bff/kernels/ops.hpp"

namespace bff::kernels {

bool avx2_available() {
#if defined(__x86_64__) || defined(__i386__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const Ops& select_ops() {
    const char* env = std::getenv("BFF_KERNELS");
    if (env != nullptr && *env != '\0') {
        const std::string want(env);
        if (want == "scalar")
            return scalar_ops();
        if (want == "avx2") {
            if (!avx2_available())
                throw std::runtime_error(
                    "BFF_KERNELS=avx2 but this CPU lacks AVX2/FMA");
            return avx2_ops();
        }
        throw std::runtime_error(
            "BFF_KERNELS must be 'scalar' or 'avx2', got '" + want + "'");
    }
    return avx2_available() ? avx2_ops() : scalar_ops();
}

const Ops& ops() {
    static const Ops& chosen = select_ops();
    return chosen;
}

}  // namespace bff::kernels
