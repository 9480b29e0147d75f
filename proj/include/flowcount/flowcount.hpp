#pragma once

#include "flowcount/calibration.hpp"
#include "flowcount/dense.hpp"
#include "flowcount/error.hpp"
#include "flowcount/format.hpp"
#include "flowcount/io.hpp"
#include "flowcount/lp.hpp"
#include "flowcount/network.hpp"
#include "flowcount/observation.hpp"
#include "flowcount/pipeline.hpp"
#include "flowcount/problem.hpp"
#include "flowcount/qp.hpp"
#include "flowcount/region.hpp"
#include "flowcount/simplex.hpp"
#include "flowcount/synth.hpp"
#include "flowcount/union_find.hpp"
