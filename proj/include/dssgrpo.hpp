#ifndef DSSGRPO_HPP_
#define DSSGRPO_HPP_

#include "dssgrpo/segmentation.hpp"
#include "dssgrpo/rewards.hpp"
#include "dssgrpo/advantages.hpp"
#include "dssgrpo/rng.hpp"
#include "dssgrpo/policy.hpp"
#include "dssgrpo/environment.hpp"
#include "dssgrpo/trainer.hpp"
#include "dssgrpo/metrics.hpp"
#include "dssgrpo/config.hpp"
#include "dssgrpo/golden.hpp"
#include "dssgrpo/run.hpp"
#include "dssgrpo/report.hpp"

#endif  // DSSGRPO_HPP_
