#pragma once

#include "stvo/errors.hpp"
#include "stvo/grid.hpp"
#include "stvo/se3.hpp"
#include "stvo/camera.hpp"
#include "stvo/warp.hpp"
#include "stvo/features.hpp"
#include "stvo/instance.hpp"
#include "stvo/losses.hpp"
#include "stvo/nets.hpp"
#include "stvo/evalkit.hpp"
#include "stvo/dataio.hpp"
#include "stvo/assemble.hpp"
#include "stvo/synthetic.hpp"
#include "stvo/solver.hpp"
