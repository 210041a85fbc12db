// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "spreadometer/csv.hpp"
#include "spreadometer/designs.hpp"
#include "spreadometer/error.hpp"
#include "spreadometer/frame.hpp"
#include "spreadometer/genpop.hpp"
#include "spreadometer/indices.hpp"
#include "spreadometer/rng.hpp"
#include "spreadometer/simharness.hpp"
#include "spreadometer/spatial.hpp"
#include "spreadometer/weights.hpp"
