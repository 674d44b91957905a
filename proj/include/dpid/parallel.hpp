// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>

namespace dpid {

/// Calls fn(i) for i in [0, n) on up to `threads` workers (0 = hardware
/// concurrency). fn must write only to slot i. The first exception thrown
/// by any worker is rethrown after all workers join.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace dpid
