#pragma once

#include "mvnet/error.hpp"
#include "mvnet/tensor.hpp"
#include "mvnet/tensor_io.hpp"
#include "mvnet/rounding.hpp"
#include "mvnet/causal.hpp"
#include "mvnet/arch.hpp"
#include "mvnet/weights.hpp"
#include "mvnet/network.hpp"
#include "mvnet/streaming.hpp"
#include "mvnet/cost.hpp"
#include "mvnet/search_space.hpp"
#include "mvnet/eval.hpp"
