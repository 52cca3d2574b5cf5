#pragma once

#include "swing/boundary.hpp"
#include "swing/config.hpp"
#include "swing/contract.hpp"
#include "swing/csv.hpp"
#include "swing/factor_models.hpp"
#include "swing/grid.hpp"
#include "swing/hjb_solver.hpp"
#include "swing/mc_oracle.hpp"
#include "swing/policy_extract.hpp"
#include "swing/quadrature.hpp"
#include "swing/tridiagonal.hpp"
