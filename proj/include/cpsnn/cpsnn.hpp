#pragma once

#include "cpsnn/analysis.hpp"
#include "cpsnn/backward.hpp"
#include "cpsnn/baselines.hpp"
#include "cpsnn/common.hpp"
#include "cpsnn/dynamics.hpp"
#include "cpsnn/hyperparams.hpp"
#include "cpsnn/io.hpp"
#include "cpsnn/optim.hpp"
#include "cpsnn/rng.hpp"
#include "cpsnn/sequence.hpp"
#include "cpsnn/tasks.hpp"
#include "cpsnn/train.hpp"
