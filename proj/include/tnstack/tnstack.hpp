#pragma once

#include "tnstack/bench.hpp"
#include "tnstack/cost_model.hpp"
#include "tnstack/engines.hpp"
#include "tnstack/error.hpp"
#include "tnstack/meter.hpp"
#include "tnstack/mps.hpp"
#include "tnstack/mps_json.hpp"
#include "tnstack/stacking.hpp"
#include "tnstack/tensor.hpp"
