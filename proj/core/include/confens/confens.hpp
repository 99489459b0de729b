// Copyright 2026 The confens Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "confens/confidence.hpp"
#include "confens/error.hpp"
#include "confens/metrics.hpp"
#include "confens/parallel.hpp"
#include "confens/probstream.hpp"
#include "confens/rng.hpp"
#include "confens/selector.hpp"
#include "confens/simulator.hpp"
#include "confens/tuning.hpp"
