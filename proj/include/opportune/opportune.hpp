#pragma once

// Umbrella header: an opportunistic-evaluation engine for interactive
// dataframe sessions. Parsing and lowering live in dsl.hpp/dag.hpp, operator
// semantics and preemptible partitioned execution in engine.hpp, cost and
// cache policy in cost.hpp/cache.hpp, user-behavior modeling in behavior.hpp,
// the scheduler in sched.hpp, and trace replay in sim.hpp.

#include "opportune/behavior.hpp"
#include "opportune/cache.hpp"
#include "opportune/cost.hpp"
#include "opportune/csv.hpp"
#include "opportune/dag.hpp"
#include "opportune/dsl.hpp"
#include "opportune/engine.hpp"
#include "opportune/errors.hpp"
#include "opportune/ops.hpp"
#include "opportune/sched.hpp"
#include "opportune/sim.hpp"
#include "opportune/value.hpp"
