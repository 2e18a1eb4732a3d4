#pragma once

#include "flowline/core/error.hpp"
#include "flowline/core/flo_io.hpp"
#include "flowline/core/image.hpp"
#include "flowline/core/image_io.hpp"
#include "flowline/dataset.hpp"
#include "flowline/etf.hpp"
#include "flowline/fdog.hpp"
#include "flowline/metrics.hpp"
#include "flowline/nn/checkpoint.hpp"
#include "flowline/nn/convert.hpp"
#include "flowline/nn/grad_check.hpp"
#include "flowline/nn/losses.hpp"
#include "flowline/nn/networks.hpp"
#include "flowline/nn/train.hpp"
#include "flowline/render.hpp"
#include "flowline/version.hpp"
