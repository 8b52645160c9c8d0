#ifndef POISSON_MALLIAVIN_HPP
#define POISSON_MALLIAVIN_HPP

#include "poisson_malliavin/error.hpp"
#include "poisson_malliavin/rng.hpp"
#include "poisson_malliavin/stats.hpp"
#include "poisson_malliavin/parallel.hpp"
#include "poisson_malliavin/point_process.hpp"
#include "poisson_malliavin/malliavin.hpp"
#include "poisson_malliavin/finite_oracle.hpp"
#include "poisson_malliavin/models.hpp"
#include "poisson_malliavin/stein_bounds.hpp"

#endif
