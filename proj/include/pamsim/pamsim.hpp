#pragma once

#include "pamsim/config.hpp"
#include "pamsim/dataset.hpp"
#include "pamsim/error.hpp"
#include "pamsim/forcemap.hpp"
#include "pamsim/longrun.hpp"
#include "pamsim/plant.hpp"
#include "pamsim/protocol.hpp"
#include "pamsim/service.hpp"
#include "pamsim/settings.hpp"
#include "pamsim/simulator.hpp"
#include "pamsim/sysid.hpp"
#include "pamsim/sysid_session.hpp"
#include "pamsim/udp.hpp"
