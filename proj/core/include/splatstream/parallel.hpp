#pragma once

#include <cstddef>
#include <functional>

namespace splatstream {

/// Runs `body(i)` for i in [0, count) on up to `threads` workers
/// (0 = hardware concurrency). The first exception thrown is rethrown.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body, unsigned threads = 0);

} // namespace splatstream
