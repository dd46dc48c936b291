#pragma once

#include "hashfield/access.hpp"
#include "hashfield/accel_sim.hpp"
#include "hashfield/checkpoint.hpp"
#include "hashfield/common.hpp"
#include "hashfield/config.hpp"
#include "hashfield/field_grid.hpp"
#include "hashfield/mlp.hpp"
#include "hashfield/renderer.hpp"
#include "hashfield/scene.hpp"
#include "hashfield/scene_io.hpp"
#include "hashfield/trace.hpp"
#include "hashfield/trainer.hpp"
