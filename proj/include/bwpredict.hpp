#pragma once

// Umbrella header for the library (the CLI front end is included separately).

#include "bwpredict/error.hpp"
#include "bwpredict/trace.hpp"
#include "bwpredict/synth.hpp"
#include "bwpredict/metrics.hpp"
#include "bwpredict/predictor.hpp"
#include "bwpredict/filters.hpp"
#include "bwpredict/autodiff.hpp"
#include "bwpredict/gradcheck.hpp"
#include "bwpredict/recurrent.hpp"
#include "bwpredict/training.hpp"
#include "bwpredict/trees.hpp"
#include "bwpredict/features.hpp"
#include "bwpredict/handoff.hpp"
#include "bwpredict/bench.hpp"
