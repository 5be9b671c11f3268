#pragma once

#include "ctxrec/convert.hpp"
#include "ctxrec/core_data.hpp"
#include "ctxrec/error.hpp"
#include "ctxrec/eval.hpp"
#include "ctxrec/feature_engine.hpp"
#include "ctxrec/gbdt.hpp"
#include "ctxrec/pipeline.hpp"
#include "ctxrec/random.hpp"
#include "ctxrec/rankers.hpp"
#include "ctxrec/synthetic.hpp"
#include "ctxrec/text.hpp"
