#pragma once

#include <string>
#include <utility>
#include <vector>

#include "recalnet/linalg.hpp"
#include "recalnet/trace.hpp"

namespace recalnet {

// Mean recalibration weight per (row, outcome group). Rows are raw features
// or dilation-rate blocks depending on the aggregation scope.
struct ImportanceMatrix {
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;  // outcome groups, sorted
  Matrix cells;
  std::vector<std::size_t> counts;  // visits aggregated per column
  std::string fingerprint;          // run-config fingerprint for the sidecar
};

enum class ImportanceScope { Raw, ConvByRate };

using TaggedTrace = std::pair<RecalibrationTrace, std::string>;

// cell(f, g) = mean over all visits of group-g traces of the weight of f.
// Conv scope first mean-pools each dilation block, giving a rate-by-group
// view of which time scale the model leans on per group.
ImportanceMatrix aggregate_importance(const std::vector<TaggedTrace>& traces,
                                      ImportanceScope scope);

// CSV (rows features, columns groups; 17 significant digits) plus a JSON
// sidecar at <path>.meta.json carrying counts and the fingerprint.
// Byte-identical for identical inputs.
void export_report(const ImportanceMatrix& matrix, const std::string& csv_path);

}  // namespace recalnet
