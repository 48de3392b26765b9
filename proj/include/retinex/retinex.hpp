#pragma once

#include "retinex/color.hpp"
#include "retinex/denoiser.hpp"
#include "retinex/error.hpp"
#include "retinex/image.hpp"
#include "retinex/image_io.hpp"
#include "retinex/linsolve.hpp"
#include "retinex/operators.hpp"
#include "retinex/solver.hpp"
#include "retinex/trace.hpp"
