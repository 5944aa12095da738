#pragma once

#include "stpp/error.hpp"
#include "stpp/parallel.hpp"
#include "stpp/random.hpp"
#include "stpp/network.hpp"
#include "stpp/pattern.hpp"
#include "stpp/io.hpp"
#include "stpp/covariates.hpp"
#include "stpp/expression.hpp"
#include "stpp/formula.hpp"
#include "stpp/simulate.hpp"
#include "stpp/summaries.hpp"
#include "stpp/glm.hpp"
#include "stpp/fit.hpp"
#include "stpp/optimize.hpp"
#include "stpp/lgcp.hpp"
#include "stpp/diagnostics.hpp"
#include "stpp/svg.hpp"
