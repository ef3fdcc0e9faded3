#include "rewrite_lab/losses.hpp"

#include <cstdio>

namespace rewrite_lab {

void LossWeights::Validate() const {
  if (!(tau > 0)) throw Error(ErrorKind::kConfig, "tau must be positive");
  if (alpha < 0 || beta < 0 || gamma < 0) {
    throw Error(ErrorKind::kConfig, "loss coefficients must be non-negative");
  }
  for (double w : class_weights) {
    if (!(w > 0)) throw Error(ErrorKind::kConfig, "class weights must be positive");
  }
}

const char* LossBreakdown::CsvHeader() {
  return "l_mat_cq1,l_mat_cq2,l_det_cq1,l_det_cq2,l_icon,l_pcon,l_final";
}

std::string LossBreakdown::CsvRow() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", l_mat_cq1,
                l_mat_cq2, l_det_cq1, l_det_cq2, l_icon, l_pcon, l_final);
  return buf;
}

LossBreakdown LossFinal(LossBreakdown c, const LossWeights& weights) {
  c.l_final = c.l_mat_cq1 + c.l_mat_cq2 + weights.alpha * (c.l_det_cq1 + c.l_det_cq2) +
              weights.beta * c.l_icon + weights.gamma * c.l_pcon;
  return c;
}

}  // namespace rewrite_lab
