#pragma once

#include "jse/core_types.hpp"
#include "jse/logreg.hpp"
#include "jse/hypothesis_tests.hpp"
#include "jse/synthetic.hpp"
#include "jse/eval.hpp"
#include "jse/jse.hpp"
#include "jse/baselines.hpp"
#include "jse/experiment.hpp"
#include "jse/io.hpp"
#include "jse/config.hpp"
#include "jse/artifact.hpp"
#include "jse/results.hpp"
