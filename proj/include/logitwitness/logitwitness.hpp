#pragma once

#include "logitwitness/error.hpp"
#include "logitwitness/rng.hpp"
#include "logitwitness/normal.hpp"
#include "logitwitness/parallel.hpp"
#include "logitwitness/trace.hpp"
#include "logitwitness/spline.hpp"
#include "logitwitness/witness.hpp"
#include "logitwitness/detector.hpp"
#include "logitwitness/evaluation.hpp"
#include "logitwitness/synthetic.hpp"
