#pragma once

#include <cstddef>
#include <functional>

namespace recalnet {

// Runs fn(chunk_index) for every index in [0, n_chunks) on up to n_threads
// workers. Which worker runs which chunk is unspecified; callers keep results
// deterministic by writing into per-chunk slots and reducing in index order.
void parallel_chunks(std::size_t n_chunks, int n_threads,
                     const std::function<void(std::size_t)>& fn);

}  // namespace recalnet
