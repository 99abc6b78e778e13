#pragma once

#include "dos/checkpoint.hpp"
#include "dos/data_io.hpp"
#include "dos/errors.hpp"
#include "dos/evaluation.hpp"
#include "dos/kernels.hpp"
#include "dos/losses.hpp"
#include "dos/network.hpp"
#include "dos/overloading.hpp"
#include "dos/rng.hpp"
#include "dos/tensor.hpp"
#include "dos/trainer.hpp"
