#ifndef TARPRO_TARPRO_HPP
#define TARPRO_TARPRO_HPP

#include "tarpro/tensor.hpp"
#include "tarpro/autodiff.hpp"
#include "tarpro/core_types.hpp"
#include "tarpro/io.hpp"
#include "tarpro/editor.hpp"
#include "tarpro/optim.hpp"
#include "tarpro/toy_world.hpp"
#include "tarpro/generator.hpp"
#include "tarpro/objective.hpp"
#include "tarpro/trainer.hpp"
#include "tarpro/baselines.hpp"
#include "tarpro/metrics.hpp"
#include "tarpro/plot.hpp"
#include "tarpro/harness.hpp"

#endif  // TARPRO_TARPRO_HPP
