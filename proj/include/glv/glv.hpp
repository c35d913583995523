#pragma once

// Everything in one include: discretization, solvers, continuation, symmetry,
// diagnostics, file formats and the batch driver.

#include "glv/grid.hpp"
#include "glv/gauge.hpp"
#include "glv/glop.hpp"
#include "glv/linalg.hpp"
#include "glv/bordered.hpp"
#include "glv/newton.hpp"
#include "glv/spectrum.hpp"
#include "glv/symmetry.hpp"
#include "glv/continuation.hpp"
#include "glv/postproc.hpp"
#include "glv/verify.hpp"
#include "glv/io.hpp"
#include "glv/run.hpp"
