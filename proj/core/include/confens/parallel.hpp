// Copyright 2026 The confens Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace confens {

/// Runs fn(i) for i in [0, n) on up to `workers` threads (0 means hardware
/// concurrency). Each index is executed exactly once. If any call throws,
/// the exception from the lowest failing index is rethrown after all
/// workers have stopped, so error reporting does not depend on scheduling.
void parallel_for(std::size_t n, std::size_t workers,
                  const std::function<void(std::size_t)>& fn);

std::size_t resolve_workers(std::size_t requested) noexcept;

}  // namespace confens
