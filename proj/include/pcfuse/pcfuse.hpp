#pragma once

#include "pcfuse/geometry.hpp"
#include "pcfuse/image.hpp"
#include "pcfuse/io.hpp"
#include "pcfuse/manifest.hpp"
#include "pcfuse/metrics.hpp"
#include "pcfuse/pipeline.hpp"
#include "pcfuse/pointcloud.hpp"
#include "pcfuse/render.hpp"
#include "pcfuse/report.hpp"
#include "pcfuse/spatial_fusion.hpp"
#include "pcfuse/synthetic.hpp"
#include "pcfuse/temporal_fusion.hpp"
