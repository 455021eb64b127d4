#pragma once

// Umbrella header for the whole library.

#include "cullkit/error.hpp"
#include "cullkit/geometry.hpp"
#include "cullkit/linalg.hpp"
#include "cullkit/pnp.hpp"
#include "cullkit/confidence.hpp"
#include "cullkit/silhouette.hpp"
#include "cullkit/image_io.hpp"
#include "cullkit/parallel.hpp"
#include "cullkit/culling.hpp"
#include "cullkit/external_scorer.hpp"
#include "cullkit/metrics.hpp"
#include "cullkit/sim.hpp"
#include "cullkit/experiment.hpp"
#include "cullkit/io.hpp"
#include "cullkit/report.hpp"
#include "cullkit/config.hpp"
