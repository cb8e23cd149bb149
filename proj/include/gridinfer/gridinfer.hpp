#pragma once

// Umbrella header for the gridinfer library.

#include "gridinfer/binary_io.hpp"
#include "gridinfer/case_io.hpp"
#include "gridinfer/dataset.hpp"
#include "gridinfer/dc_powerflow.hpp"
#include "gridinfer/errors.hpp"
#include "gridinfer/grid.hpp"
#include "gridinfer/hash.hpp"
#include "gridinfer/inference.hpp"
#include "gridinfer/manifest.hpp"
#include "gridinfer/mlp.hpp"
#include "gridinfer/rng.hpp"
#include "gridinfer/scenario.hpp"
#include "gridinfer/trainer.hpp"
#include "gridinfer/version.hpp"
