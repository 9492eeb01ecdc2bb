#pragma once

// Umbrella header for the full library.

#include "vex/adam.hpp"
#include "vex/checkpoint.hpp"
#include "vex/common.hpp"
#include "vex/config.hpp"
#include "vex/dynamics.hpp"
#include "vex/env.hpp"
#include "vex/expansion.hpp"
#include "vex/harness.hpp"
#include "vex/metrics.hpp"
#include "vex/mlp.hpp"
#include "vex/plot.hpp"
#include "vex/replay.hpp"
#include "vex/rng.hpp"
#include "vex/rollout.hpp"
#include "vex/sac.hpp"
#include "vex/squashed_gaussian.hpp"
#include "vex/train.hpp"
