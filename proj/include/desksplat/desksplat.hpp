#pragma once

#include "desksplat/error.hpp"
#include "desksplat/geometry.hpp"
#include "desksplat/image.hpp"
#include "desksplat/frontend.hpp"
#include "desksplat/gaussian_map.hpp"
#include "desksplat/renderer.hpp"
#include "desksplat/tracker.hpp"
#include "desksplat/mapper.hpp"
#include "desksplat/metrics.hpp"
#include "desksplat/synthetic.hpp"
#include "desksplat/io.hpp"
#include "desksplat/pipeline.hpp"
