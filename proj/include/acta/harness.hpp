#pragma once

#include "acta/harness/engine.hpp"
#include "acta/harness/profile.hpp"
#include "acta/harness/scenario.hpp"
#include "acta/harness/session_log.hpp"
