#pragma once

#include <cstddef>
#include <functional>

namespace fairkrr {

// Resolve a requested worker count: values <= 0 mean "use all logical cores".
int resolve_jobs(int requested);

// Run `count` independent work units on up to `jobs` threads. Units are
// claimed dynamically off an atomic counter, so which thread runs a unit is
// scheduling-dependent, but every unit computes its result in isolation and
// writes only to its own slot. Reported numbers therefore do not depend on
// the worker count. Exceptions thrown by units are captured and the first
// one (lowest unit index) is rethrown after all threads join.
void parallel_for_indexed(std::size_t count, int jobs,
                          const std::function<void(std::size_t)>& body);

}  // namespace fairkrr
