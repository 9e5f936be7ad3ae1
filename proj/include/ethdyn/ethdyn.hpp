// ethdyn.hpp - umbrella header
#pragma once

#include "analysis.hpp"
#include "core.hpp"
#include "dense.hpp"
#include "hydro.hpp"
#include "io.hpp"
#include "lattice.hpp"
#include "moments.hpp"
#include "orchestrator.hpp"
#include "sectors.hpp"
#include "sparse_operator.hpp"
#include "spectrum.hpp"
#include "typicality.hpp"
