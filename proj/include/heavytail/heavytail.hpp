#pragma once

#include "heavytail/analysis.hpp"
#include "heavytail/distributions.hpp"
#include "heavytail/errors.hpp"
#include "heavytail/estimation.hpp"
#include "heavytail/gof.hpp"
#include "heavytail/ingestion.hpp"
#include "heavytail/optimize.hpp"
#include "heavytail/quadrature.hpp"
#include "heavytail/random.hpp"
#include "heavytail/serialization.hpp"
#include "heavytail/special_functions.hpp"
