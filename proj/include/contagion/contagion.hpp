#pragma once

// Umbrella header for the contagion causal-reasoning engine.

#include "contagion/errors.hpp"
#include "contagion/rng.hpp"
#include "contagion/graph.hpp"
#include "contagion/graph_io.hpp"
#include "contagion/intervention.hpp"
#include "contagion/tokenizer.hpp"
#include "contagion/dataset.hpp"
#include "contagion/matrix.hpp"
#include "contagion/autodiff.hpp"
#include "contagion/model.hpp"
#include "contagion/fusion.hpp"
#include "contagion/gradcheck.hpp"
#include "contagion/audit.hpp"
#include "contagion/pathway.hpp"
#include "contagion/trainer.hpp"
#include "contagion/robustness.hpp"
#include "contagion/sankey.hpp"
