#pragma once

#include "hetsched/cost_model.hpp"
#include "hetsched/dot.hpp"
#include "hetsched/experiment.hpp"
#include "hetsched/metis.hpp"
#include "hetsched/partitioner.hpp"
#include "hetsched/schedulers.hpp"
#include "hetsched/simulator.hpp"
#include "hetsched/task_graph.hpp"
