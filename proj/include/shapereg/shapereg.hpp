#pragma once

// Umbrella header.

#include "shapereg/admm.hpp"
#include "shapereg/constraint_grammar.hpp"
#include "shapereg/constraints.hpp"
#include "shapereg/data.hpp"
#include "shapereg/error.hpp"
#include "shapereg/estimator.hpp"
#include "shapereg/experiments.hpp"
#include "shapereg/fit.hpp"
#include "shapereg/lipschitz.hpp"
#include "shapereg/model.hpp"
#include "shapereg/model_io.hpp"
#include "shapereg/operators.hpp"
#include "shapereg/palm.hpp"
#include "shapereg/pricing.hpp"
#include "shapereg/problem.hpp"
#include "shapereg/trace.hpp"
#include "shapereg/types.hpp"
