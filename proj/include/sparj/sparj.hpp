#pragma once

#include "sparj/analysis.hpp"
#include "sparj/em.hpp"
#include "sparj/error.hpp"
#include "sparj/experiment.hpp"
#include "sparj/io.hpp"
#include "sparj/lgssm.hpp"
#include "sparj/model_space.hpp"
#include "sparj/rng.hpp"
#include "sparj/sampler.hpp"
#include "sparj/sparsity_model.hpp"
