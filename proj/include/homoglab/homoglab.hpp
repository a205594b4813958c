#pragma once

// Umbrella header: effective-density solvers for periodic two-scale bulk
// materials and thin films, with analytic oracles and a direct
// eps-resolved verification harness.

#include <homoglab/cell.hpp>
#include <homoglab/common.hpp>
#include <homoglab/direct.hpp>
#include <homoglab/fem.hpp>
#include <homoglab/grid.hpp>
#include <homoglab/integrand.hpp>
#include <homoglab/job.hpp>
#include <homoglab/lbfgs.hpp>
#include <homoglab/reiterated.hpp>
#include <homoglab/table.hpp>
#include <homoglab/thinfilm.hpp>
