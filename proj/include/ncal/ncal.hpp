#pragma once
// Umbrella header.

#include "ncal/core.hpp"
#include "ncal/harness.hpp"
#include "ncal/lower_bound.hpp"
#include "ncal/metrics.hpp"
#include "ncal/nets.hpp"
#include "ncal/neuralcal.hpp"
#include "ncal/neuralcalpp.hpp"
#include "ncal/problem.hpp"
#include "ncal/rng.hpp"
#include "ncal/version_space.hpp"
