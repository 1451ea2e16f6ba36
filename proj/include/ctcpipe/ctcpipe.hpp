#pragma once

#include "ctcpipe/config.hpp"
#include "ctcpipe/dataset.hpp"
#include "ctcpipe/decision.hpp"
#include "ctcpipe/detection.hpp"
#include "ctcpipe/detector.hpp"
#include "ctcpipe/error.hpp"
#include "ctcpipe/pipeline.hpp"
#include "ctcpipe/png_io.hpp"
#include "ctcpipe/raster.hpp"
#include "ctcpipe/results.hpp"
#include "ctcpipe/rle.hpp"
#include "ctcpipe/segmentation.hpp"
#include "ctcpipe/synthgen.hpp"
#include "ctcpipe/threshold.hpp"
