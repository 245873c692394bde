#pragma once

#include "ruralsense/error.hpp"
#include "ruralsense/farmer/farmer_node.hpp"
#include "ruralsense/ids.hpp"
#include "ruralsense/network/network_model.hpp"
#include "ruralsense/protocol/envelope.hpp"
#include "ruralsense/protocol/lifecycle.hpp"
#include "ruralsense/protocol/types.hpp"
#include "ruralsense/relay/relay_node.hpp"
#include "ruralsense/server/server_node.hpp"
#include "ruralsense/sim/engine.hpp"
#include "ruralsense/sim/metrics.hpp"
#include "ruralsense/sim/scenario.hpp"
#include "ruralsense/sim/sweep.hpp"
#include "ruralsense/sim/trace.hpp"
