#pragma once

#include <string>
#include <vector>

#include "recalnet/linalg.hpp"

namespace recalnet {

// Recalibration weights captured during one forward pass, one entry per visit.
// u_raw gates the raw record (length N_r); u_conv gates the concatenated
// convolution output (length K*N_c, empty when the conv path is off).
struct RecalibrationTrace {
  std::vector<Vector> u_raw;
  std::vector<Vector> u_conv;
  std::vector<std::string> feature_names;  // optional; filled by callers
  std::vector<int> dilation_rates;         // block labels for u_conv
  int conv_filters = 0;                    // width of each dilation block
};

}  // namespace recalnet
