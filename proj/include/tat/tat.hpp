#pragma once

// Umbrella header.

#include "tat/balancer.hpp"
#include "tat/cache.hpp"
#include "tat/checkpoint.hpp"
#include "tat/common.hpp"
#include "tat/config_io.hpp"
#include "tat/conv.hpp"
#include "tat/data.hpp"
#include "tat/harness.hpp"
#include "tat/metrics.hpp"
#include "tat/model.hpp"
#include "tat/nn.hpp"
#include "tat/ops.hpp"
#include "tat/optim.hpp"
#include "tat/png.hpp"
#include "tat/tensor.hpp"
