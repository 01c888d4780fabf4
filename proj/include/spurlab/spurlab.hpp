#pragma once

#include "spurlab/analysis.hpp"
#include "spurlab/common.hpp"
#include "spurlab/config.hpp"
#include "spurlab/corpus.hpp"
#include "spurlab/eval.hpp"
#include "spurlab/model.hpp"
#include "spurlab/report.hpp"
#include "spurlab/train.hpp"
