#pragma once

#include "zsmg/error.hpp"
#include "zsmg/game.hpp"
#include "zsmg/evaluation.hpp"
#include "zsmg/matrix_game.hpp"
#include "zsmg/planner.hpp"
#include "zsmg/sampling.hpp"
#include "zsmg/instances.hpp"
#include "zsmg/io.hpp"
#include "zsmg/experiment.hpp"
