#pragma once

#include "netpnc/bilp.hpp"
#include "netpnc/channel.hpp"
#include "netpnc/network.hpp"
#include "netpnc/oracle_check.hpp"
#include "netpnc/policies.hpp"
#include "netpnc/prediction.hpp"
#include "netpnc/rng.hpp"
#include "netpnc/scenario_io.hpp"
#include "netpnc/simulator.hpp"
