#pragma once

#include "ewca/errors.hpp"
#include "ewca/types.hpp"
#include "ewca/random.hpp"
#include "ewca/sinkhorn.hpp"
#include "ewca/subspace.hpp"
#include "ewca/solver.hpp"
#include "ewca/eval.hpp"
#include "ewca/csv.hpp"
#include "ewca/version.hpp"
