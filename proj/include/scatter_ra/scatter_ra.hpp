#pragma once

#include "baseline.hpp"
#include "core_data.hpp"
#include "error.hpp"
#include "evaluation.hpp"
#include "experiment.hpp"
#include "minirocket.hpp"
#include "ridge.hpp"
#include "rocket.hpp"
#include "simulator.hpp"
