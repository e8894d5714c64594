#pragma once

#include "arcee/config.hpp"
#include "arcee/finite_diff.hpp"
#include "arcee/flow_matching.hpp"
#include "arcee/io.hpp"
#include "arcee/network.hpp"
#include "arcee/ode_sampler.hpp"
#include "arcee/scan_engine.hpp"
#include "arcee/scan_orders.hpp"
#include "arcee/ssm_core.hpp"
#include "arcee/tensor.hpp"
#include "arcee/trainer.hpp"
