#pragma once

#include "pgsp/basis_cache.hpp"
#include "pgsp/error.hpp"
#include "pgsp/eval.hpp"
#include "pgsp/graph.hpp"
#include "pgsp/parallel.hpp"
#include "pgsp/pipeline.hpp"
#include "pgsp/sparse.hpp"
#include "pgsp/spectral.hpp"
