#pragma once

#include "canopy/error.hpp"
#include "canopy/core.hpp"
#include "canopy/parallel.hpp"
#include "canopy/rng.hpp"
#include "canopy/dem.hpp"
#include "canopy/stratify.hpp"
#include "canopy/decimate.hpp"
#include "canopy/occlusion.hpp"
#include "canopy/segment.hpp"
#include "canopy/evaluate.hpp"
#include "canopy/simulate.hpp"
#include "canopy/io.hpp"
#include "canopy/sweep.hpp"
