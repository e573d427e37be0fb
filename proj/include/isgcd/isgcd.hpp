#pragma once

// Umbrella header for the whole engine.

#include "isgcd/checkpoint.hpp"
#include "isgcd/dataset.hpp"
#include "isgcd/errors.hpp"
#include "isgcd/experiments.hpp"
#include "isgcd/graph.hpp"
#include "isgcd/iediff.hpp"
#include "isgcd/metrics.hpp"
#include "isgcd/model.hpp"
#include "isgcd/ops.hpp"
#include "isgcd/optim.hpp"
#include "isgcd/rng.hpp"
#include "isgcd/synth.hpp"
#include "isgcd/tensor.hpp"
#include "isgcd/training.hpp"
