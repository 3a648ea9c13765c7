#pragma once

#include <vector>

#include "fuselab/tensor.hpp"

namespace fuselab {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam over a fixed parameter list. Moment buffers are private to the
/// optimizer, so one instance belongs to exactly one training run.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config);

  void zero_grad();
  /// Applies one update from the accumulated gradients.
  void step();
  long steps() const { return steps_; }

 private:
  std::vector<Tensor> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  long steps_ = 0;
};

}  // namespace fuselab
