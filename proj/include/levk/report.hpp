#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <vector>

#include "levk/detect_eval.hpp"
#include "levk/seg_metrics.hpp"
#include "levk/taxonomy.hpp"

namespace levk {

// CSV writers. Absent values are written as empty cells.

void write_confusion_csv(std::ostream& out, const ConfusionMatrix& cm, const ClassTable& table);
void write_metrics_csv(std::ostream& out, const ConfusionMatrix& cm, const ClassTable& table,
                       const std::vector<std::optional<double>>& nll = {});
void write_wpr_bcr_csv(std::ostream& out, const ConfusionMatrix& cm, const ClassTable& table);
void write_tsd_csv(std::ostream& out, const TsdMatrix& tsd, const ClassTable& table);

/// auroc.csv, counts_<task>.csv, wpre_at.csv, tsd_<class>.csv, roc_<class>_<task>.csv,
/// confusion.csv and metrics.csv under `dir`.
void write_report(const TaskReport& report, const ClassTable& table, const std::filesystem::path& dir);

}  // namespace levk
