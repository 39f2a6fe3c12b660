#pragma once

#include "elunet/activations.hpp"
#include "elunet/augment.hpp"
#include "elunet/batchnorm.hpp"
#include "elunet/block.hpp"
#include "elunet/checkpoint.hpp"
#include "elunet/conv.hpp"
#include "elunet/dataset.hpp"
#include "elunet/gradcheck.hpp"
#include "elunet/linear.hpp"
#include "elunet/loss.hpp"
#include "elunet/network.hpp"
#include "elunet/optimizer.hpp"
#include "elunet/pooling.hpp"
#include "elunet/rng.hpp"
#include "elunet/tensor.hpp"
#include "elunet/trainer.hpp"
