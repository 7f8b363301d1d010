#pragma once

// Umbrella header for the whole library.

#include "facedepth/adam.hpp"
#include "facedepth/checkpoint.hpp"
#include "facedepth/config.hpp"
#include "facedepth/csv.hpp"
#include "facedepth/dataprep.hpp"
#include "facedepth/dataset_io.hpp"
#include "facedepth/image.hpp"
#include "facedepth/losses.hpp"
#include "facedepth/metrics.hpp"
#include "facedepth/models.hpp"
#include "facedepth/ops.hpp"
#include "facedepth/pgm.hpp"
#include "facedepth/rng.hpp"
#include "facedepth/synth.hpp"
#include "facedepth/tensor.hpp"
#include "facedepth/training.hpp"
#include "facedepth/verifier.hpp"
