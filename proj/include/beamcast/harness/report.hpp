#pragma once

#include <string>
#include <vector>

#include "beamcast/harness/harness.hpp"

namespace beamcast::harness {

// Text serializations. Epochs are printed 1-based. Wall-clock time is kept out
// of the metrics CSV so identical runs produce identical files.

/// epoch,lr,train_loss,top1,top3,top5 (accuracy columns empty on epochs
/// without evaluation).
std::string metrics_csv(const std::vector<EpochRecord>& epochs, bool header = true);

/// epoch,seconds
std::string timing_csv(const std::vector<EpochRecord>& epochs, bool header = true);

/// Q x Q grid of counts, rows = true class, columns = predicted class.
std::string confusion_csv(const std::vector<std::vector<std::uint64_t>>& matrix);

/// Final summary record as JSON: count and one "topK" field per evaluated K.
std::string summary_json(const EvalResult& result);

/// Human-readable Top-K table.
std::string topk_table(const EvalResult& result);

/// lr,top1,top3,status per arm.
std::string sweep_csv(const SweepResult& sweep);

/// Rendered confusion_topn summary.
std::string confusion_topn_text(const ConfusionSummary& summary);

/// Shortest round-trip decimal form of a double.
std::string format_number(double value);

} // namespace beamcast::harness
