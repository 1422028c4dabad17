#pragma once

#include <vector>

namespace hfedms {

struct LabeledExample {
  std::vector<double> features;
  int label = 0;
};

}  // namespace hfedms
