#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tsgan/autodiff.hpp"

namespace tsgan {

// Central finite differences against the analytic gradient. `build` must
// re-evaluate the scalar objective from the leaves' current values.
inline double fd_max_rel_err(const std::function<ad::NodePtr()>& build,
                             const std::vector<ad::NodePtr>& leaves, double step = 1e-4) {
  ad::NodePtr root = build();
  std::vector<ad::NodePtr> analytic = ad::gradients(root, leaves);
  double worst = 0.0;
  for (size_t li = 0; li < leaves.size(); ++li) {
    Tensor& t = leaves[li]->value;
    for (int64_t i = 0; i < t.numel(); ++i) {
      double orig = t[i];
      t[i] = orig + step;
      double fp = build()->value[0];
      t[i] = orig - step;
      double fm = build()->value[0];
      t[i] = orig;
      double fd = (fp - fm) / (2.0 * step);
      double an = analytic[li]->value[i];
      double denom = std::max(std::abs(an), std::abs(fd));
      if (denom < 1e-7) continue;
      worst = std::max(worst, std::abs(an - fd) / std::max(denom, 1e-3));
    }
  }
  return worst;
}

struct GradCheckEntry {
  std::string target;
  double max_rel_err = 0.0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool all_pass = true;
};

// Full suite over the attention operators and every training loss term.
GradCheckReport run_gradcheck(uint64_t seed, double tolerance = 1e-4);

}  // namespace tsgan
