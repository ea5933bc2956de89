#pragma once

#include <cstddef>
#include <functional>

namespace dnnh {

// Calls body(i) for every i in [0, count) on up to `workers` threads (0 means
// hardware concurrency). Indices are handed out in increasing order. If any
// call throws, the exception from the lowest failing index is rethrown after
// all threads have joined.
void ParallelFor(std::size_t count, std::size_t workers,
                 const std::function<void(std::size_t)>& body);

std::size_t ResolveWorkers(std::size_t workers);

}  // namespace dnnh
