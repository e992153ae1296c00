#pragma once

#include "lqjump/error.hpp"
#include "lqjump/linalg.hpp"
#include "lqjump/model.hpp"
#include "lqjump/hamiltonian.hpp"
#include "lqjump/parallel.hpp"
#include "lqjump/riccati.hpp"
#include "lqjump/simulate.hpp"
#include "lqjump/meanvariance.hpp"
#include "lqjump/verify.hpp"
#include "lqjump/csv.hpp"
