#pragma once

// Umbrella header for the numerical library.

#include "weakhyp/coefficient.hpp"
#include "weakhyp/conditions.hpp"
#include "weakhyp/energy.hpp"
#include "weakhyp/equation.hpp"
#include "weakhyp/errors.hpp"
#include "weakhyp/expression.hpp"
#include "weakhyp/field.hpp"
#include "weakhyp/grid.hpp"
#include "weakhyp/reduction.hpp"
#include "weakhyp/solver.hpp"
#include "weakhyp/symmetriser.hpp"
