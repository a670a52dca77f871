#pragma once

// Umbrella header for the analysis and simulation library.

#include "filippov/error.hpp"
#include "filippov/lexalg.hpp"
#include "filippov/linalg.hpp"
#include "filippov/model.hpp"
#include "filippov/observability.hpp"
#include "filippov/oracles.hpp"
#include "filippov/simulator.hpp"
#include "filippov/wellposed.hpp"
#include "filippov/wsets.hpp"
