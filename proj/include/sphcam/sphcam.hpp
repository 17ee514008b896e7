#pragma once

// Everything in one include.

#include "sphcam/config.hpp"
#include "sphcam/convolution.hpp"
#include "sphcam/core.hpp"
#include "sphcam/forward_sim.hpp"
#include "sphcam/grid.hpp"
#include "sphcam/legendre.hpp"
#include "sphcam/mask_search.hpp"
#include "sphcam/operators.hpp"
#include "sphcam/recon.hpp"
#include "sphcam/response.hpp"
#include "sphcam/scene_io.hpp"
#include "sphcam/sht.hpp"
#include "sphcam/pipeline.hpp"
