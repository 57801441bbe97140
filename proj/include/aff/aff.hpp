#pragma once

#include "aff/affine.hpp"
#include "aff/baselines.hpp"
#include "aff/bench.hpp"
#include "aff/cir.hpp"
#include "aff/errors.hpp"
#include "aff/filter.hpp"
#include "aff/interpolation.hpp"
#include "aff/io.hpp"
#include "aff/observation.hpp"
#include "aff/ode.hpp"
#include "aff/parallel.hpp"
#include "aff/rng.hpp"
#include "aff/signal_path.hpp"
#include "aff/version.hpp"
#include "aff/wishart.hpp"
