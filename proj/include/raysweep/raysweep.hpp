#pragma once

#include "raysweep/config.hpp"
#include "raysweep/depth.hpp"
#include "raysweep/dsi.hpp"
#include "raysweep/errors.hpp"
#include "raysweep/evaluation.hpp"
#include "raysweep/events.hpp"
#include "raysweep/geometry.hpp"
#include "raysweep/image.hpp"
#include "raysweep/io.hpp"
#include "raysweep/parallel.hpp"
#include "raysweep/pipeline.hpp"
#include "raysweep/synth.hpp"
