#pragma once

#include <functional>

namespace rulehte {

/// Runs fn(0..count-1) on up to `jobs` threads (jobs <= 1 runs inline).
/// Tasks are claimed in index order; the exception of the lowest failing
/// index is rethrown after all workers finish.
void parallel_for(int count, int jobs, const std::function<void(int)>& fn);

/// Hardware concurrency, at least 1.
int default_jobs();

}  // namespace rulehte
