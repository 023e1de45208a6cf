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
#include <functional>

namespace bff {

/// Worker count: BFF_THREADS when set (clamped to >= 1), otherwise the
/// hardware concurrency.
int thread_count();

/// Run fn(i) for i in [0, n). Tasks must be independent; completion order is
/// unspecified but every result a task writes is visible when this returns.
/// Callers that accumulate floating-point must do so in index order
/// themselves if they want thread-count-independent bits.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace bff
