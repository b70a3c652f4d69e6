#pragma once

#include "zoomvqa/error.hpp"
#include "zoomvqa/tensor.hpp"
#include "zoomvqa/ops.hpp"
#include "zoomvqa/tape.hpp"
#include "zoomvqa/gradcheck.hpp"
#include "zoomvqa/rng.hpp"
#include "zoomvqa/params.hpp"
#include "zoomvqa/losses.hpp"
#include "zoomvqa/metrics.hpp"
#include "zoomvqa/media_io.hpp"
#include "zoomvqa/fragment_sampler.hpp"
#include "zoomvqa/iqa_branch.hpp"
#include "zoomvqa/vqa_branch.hpp"
#include "zoomvqa/harness/config.hpp"
#include "zoomvqa/harness/fusion.hpp"
#include "zoomvqa/harness/optimizer.hpp"
#include "zoomvqa/harness/training.hpp"
#include "zoomvqa/harness/evaluate.hpp"
#include "zoomvqa/harness/ablation.hpp"
#include "zoomvqa/harness/gradient_suite.hpp"
