#pragma once

#include <cstdint>
#include <vector>

#include "gbcc/diff.hpp"
#include "gbcc/matrix.hpp"

namespace gbcc::optim {

// Adam with bias correction and L2-style weight decay (decay folded into the
// gradient). Moment buffers are allocated on the first step and keyed by
// position in the parameter list, so the list must be stable across steps.
class Adam {
 public:
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  std::int64_t step_count() const { return step_; }

  // One update over all parameters; increments the step counter once.
  // Parameters without an allocated grad are treated as zero-gradient.
  void step(const std::vector<diff::NodePtr>& params);

  void zero_grads(const std::vector<diff::NodePtr>& params) const;

  // Checkpoint plumbing.
  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }
  void restore(std::int64_t step, std::vector<Matrix> m, std::vector<Matrix> v);

 private:
  std::int64_t step_ = 0;
  std::vector<Matrix> m_, v_;
};

}  // namespace gbcc::optim
