#pragma once

#include "occam/bit_cost.hpp"
#include "occam/error_estimation.hpp"
#include "occam/errors.hpp"
#include "occam/io/crosstab.hpp"
#include "occam/io/csv.hpp"
#include "occam/io/generator.hpp"
#include "occam/io/model_file.hpp"
#include "occam/io/plotdata.hpp"
#include "occam/log_math.hpp"
#include "occam/mixture_model.hpp"
#include "occam/optimizer.hpp"
