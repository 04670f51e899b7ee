#pragma once

#include "regstokes/errors.hpp"
#include "regstokes/kernels.hpp"
#include "regstokes/spatial.hpp"
#include "regstokes/geometry.hpp"
#include "regstokes/parallel.hpp"
#include "regstokes/stokes_core.hpp"
#include "regstokes/richardson.hpp"
#include "regstokes/nearest.hpp"
#include "regstokes/dynamics.hpp"
#include "regstokes/reference.hpp"
#include "regstokes/harness.hpp"
