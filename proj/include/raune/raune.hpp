#pragma once

// Umbrella header for the full library.

#include "raune/attention.hpp"
#include "raune/autograd.hpp"
#include "raune/checkpoint.hpp"
#include "raune/config.hpp"
#include "raune/data.hpp"
#include "raune/errors.hpp"
#include "raune/image.hpp"
#include "raune/losses.hpp"
#include "raune/metrics.hpp"
#include "raune/model.hpp"
#include "raune/ops.hpp"
#include "raune/optim.hpp"
#include "raune/rng.hpp"
#include "raune/tensor.hpp"
#include "raune/train.hpp"
#include "raune/version.hpp"
#include "raune/vgg.hpp"
