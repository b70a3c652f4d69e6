#pragma once

#include "zoomvqa/ops.hpp"

namespace zoomvqa {

/// Clip ensemble: mean of the sigmoid-normalized branch scores.
inline double fuse(double y_iqa, double y_vqa) {
  return 0.5 * (ops::sigmoid(y_iqa) + ops::sigmoid(y_vqa));
}

}  // namespace zoomvqa
