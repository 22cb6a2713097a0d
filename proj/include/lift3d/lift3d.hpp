#pragma once

#include "lift3d/assignment.hpp"
#include "lift3d/elo.hpp"
#include "lift3d/engine.hpp"
#include "lift3d/error.hpp"
#include "lift3d/evaluation.hpp"
#include "lift3d/flow.hpp"
#include "lift3d/geometry.hpp"
#include "lift3d/image.hpp"
#include "lift3d/image_io.hpp"
#include "lift3d/kdtree.hpp"
#include "lift3d/mesh_filter.hpp"
#include "lift3d/mesh_io.hpp"
#include "lift3d/metrics.hpp"
#include "lift3d/parallel.hpp"
#include "lift3d/random.hpp"
#include "lift3d/raster.hpp"
#include "lift3d/refine.hpp"
#include "lift3d/registration.hpp"
#include "lift3d/renderpaste.hpp"
#include "lift3d/version.hpp"
#include "lift3d/visibility.hpp"
