#pragma once

#include "lbkd/checkpoint.hpp"
#include "lbkd/config.hpp"
#include "lbkd/data.hpp"
#include "lbkd/dsp.hpp"
#include "lbkd/error.hpp"
#include "lbkd/gradcheck.hpp"
#include "lbkd/losses.hpp"
#include "lbkd/metrics.hpp"
#include "lbkd/models.hpp"
#include "lbkd/nn_ops.hpp"
#include "lbkd/optim.hpp"
#include "lbkd/random.hpp"
#include "lbkd/stoi.hpp"
#include "lbkd/tensor.hpp"
#include "lbkd/training.hpp"
#include "lbkd/wav.hpp"
