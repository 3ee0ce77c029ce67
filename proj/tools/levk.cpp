// levk command-line driver.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "levk/augment.hpp"
#include "levk/detect_eval.hpp"
#include "levk/errors.hpp"
#include "levk/lidar_io.hpp"
#include "levk/report.hpp"
#include "levk/scoring.hpp"
#include "levk/seg_metrics.hpp"
#include "levk/taxonomy.hpp"
#include "levk/trust_scores.hpp"

namespace fs = std::filesystem;
using namespace levk;

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

// Output either to a file or stdout when the path is empty or "-".
class Sink {
 public:
  explicit Sink(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_.open(path);
      if (!file_) throw IoFailure("cannot write " + path);
    }
  }
  std::ostream& get() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

 private:
  std::ofstream file_;
};

// gt/pd pairs from either a score file or the prediction files of a manifest.
ConfusionMatrix confusion_from(const std::string& scores, const std::string& manifest, const ClassTable& table,
                               LossAccumulator* losses) {
  ConfusionMatrix cm(table.size());
  if (!scores.empty()) {
    for (const auto& t : read_score_file(scores))
      for (const auto& row : t.rows) cm.add(row.gt, row.pd);
    return cm;
  }
  if (manifest.empty()) throw ConfigError("give --scores or --manifest");
  for (const auto& entry : Manifest::load(manifest).frames) {
    const auto set = read_prediction_set(entry.predictions);
    const auto columns = table.prediction_columns(static_cast<std::size_t>(set.c));
    for (std::size_t i = 0; i < set.n; ++i) cm.add(set.gt_class(i), predicted_class(set, i, columns, table));
    if (losses) losses->add(set);
  }
  return cm;
}

void run_weights(const std::string& table_path, const std::string& counts_text, const std::string& out,
                 bool raw) {
  const auto table = ClassTable::load(table_path);
  ClassCounts counts = train_counts(table);
  if (!counts_text.empty()) {
    counts.counts.clear();
    for (const auto& item : split_list(counts_text)) counts.counts.push_back(std::stod(item));
    if (counts.counts.size() != table.size()) throw LengthMismatch(counts.counts.size(), table.size());
  }
  std::vector<double> present;
  std::vector<ClassId> ids;
  for (std::size_t c = 0; c < counts.counts.size(); ++c) {
    if (counts.counts[c] <= 0.0) continue;  // OOD or unlabeled in this split
    present.push_back(counts.counts[c]);
    ids.push_back(static_cast<ClassId>(c));
  }
  const auto w = class_weights({present, counts.unit_scale}, table.beta(), !raw);
  Sink sink(out);
  auto& os = sink.get();
  os << "class,count,weight\n";
  for (std::size_t k = 0; k < ids.size(); ++k)
    os << table.name(ids[k]) << ',' << present[k] << ',' << w[k] << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LiDAR segmentation evaluation toolkit"};
  app.require_subcommand(1);

  std::string table_path;

  // weights
  auto* weights = app.add_subcommand("weights", "Effective-number class weights");
  std::string counts_text, weights_out;
  bool raw_weights = false;
  weights->add_option("--table", table_path, "Class table (JSON)")->required();
  weights->add_option("--counts", counts_text, "Comma-separated point counts, one per class");
  weights->add_flag("--raw", raw_weights, "Do not divide by (1 - beta)");
  weights->add_option("--out", weights_out, "Output CSV (default stdout)");

  // import-csv
  auto* import = app.add_subcommand("import-csv", "Convert a CSV prediction fixture to .levk");
  std::string import_in, import_out;
  import->add_option("--in", import_in)->required();
  import->add_option("--out", import_out)->required();

  // augment
  auto* augment = app.add_subcommand("augment", "Transplant instances into source frames");
  std::string source_manifest, aux_manifest, aux_table_path, classes_text = "people,rider", aug_out;
  std::uint64_t seed = 0;
  AugmentConfig aug;
  augment->add_option("--source-manifest", source_manifest)->required();
  augment->add_option("--aux-manifest", aux_manifest)->required();
  augment->add_option("--table", table_path, "Class table of the source frames")->required();
  augment->add_option("--aux-table", aux_table_path, "Class table of the auxiliary frames (default --table)");
  augment->add_option("--classes", classes_text, "Comma-separated class names to transplant");
  augment->add_option("--per-frame", aug.instances_per_frame);
  augment->add_option("--seed", seed);
  augment->add_option("--cell-size", aug.cell_size);
  augment->add_option("--min-points", aug.min_points);
  augment->add_option("--max-trials", aug.max_pose_trials);
  augment->add_option("--out-dir", aug_out)->required();

  // fit-mahalanobis
  auto* fit = app.add_subcommand("fit-mahalanobis", "Fit class means and tied covariance on features");
  std::string fit_manifest, fit_out;
  double shrinkage = 1e-6;
  fit->add_option("--manifest", fit_manifest, "Training manifest with prediction files")->required();
  fit->add_option("--table", table_path)->required();
  fit->add_option("--shrinkage", shrinkage);
  fit->add_option("--out", fit_out)->required();

  // score
  auto* score = app.add_subcommand("score", "Compute trust scores per point");
  std::string score_manifest, methods_text = "conf", model_path, score_out;
  double temperature = 1000.0;
  score->add_option("--manifest", score_manifest)->required();
  score->add_option("--table", table_path)->required();
  score->add_option("--methods", methods_text, "conf,du,mu,temp,md");
  score->add_option("--temperature", temperature);
  score->add_option("--model", model_path, "Mahalanobis model for md");
  score->add_option("--out", score_out, "Score file; blocks are appended")->required();

  // confusion / metrics
  std::string cm_scores, cm_manifest, cm_out;
  auto* confusion = app.add_subcommand("confusion", "Confusion counts and ratios as CSV");
  auto* metrics = app.add_subcommand("metrics", "Per-class IoU, Pre, Rec, wPre as CSV");
  bool with_vectors = false;
  for (auto* sub : {confusion, metrics}) {
    sub->add_option("--table", table_path)->required();
    sub->add_option("--scores", cm_scores, "Score file");
    sub->add_option("--manifest", cm_manifest, "Manifest with prediction files");
    sub->add_option("--out", cm_out, "Output CSV (default stdout)");
  }
  confusion->add_flag("--vectors", with_vectors, "Write WPR/BCR vectors instead of the matrix");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Detection report for one trust score");
  std::string eval_scores, method_text = "conf", tasks_text = "io,cw,cwood", eval_out;
  ReportConfig report_config;
  evaluate->add_option("--scores", eval_scores)->required();
  evaluate->add_option("--table", table_path)->required();
  evaluate->add_option("--method", method_text);
  evaluate->add_option("--tasks", tasks_text);
  evaluate->add_option("--delta-grid", report_config.delta_grid);
  evaluate->add_option("--delta", report_config.delta);
  evaluate->add_option("--bins", report_config.tsd_bins);
  evaluate->add_option("--out", eval_out, "Report directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*weights) {
      run_weights(table_path, counts_text, weights_out, raw_weights);
    } else if (*import) {
      write_prediction_set(import_prediction_csv(import_in), import_out);
    } else if (*augment) {
      const auto table = ClassTable::load(table_path);
      const auto aux_table = aux_table_path.empty() ? table : ClassTable::load(aux_table_path);
      std::set<ClassId> wanted_aux, requested;
      for (const auto& name : split_list(classes_text)) {
        wanted_aux.insert(aux_table.id_of(name));
        requested.insert(table.id_of(name));
      }
      auto bank = build_instance_bank(Manifest::load(aux_manifest), aux_table, wanted_aux, aug.min_points);
      // the bank is keyed by auxiliary ids; carry them over by class name
      for (auto& inst : bank) inst.class_id = table.id_of(aux_table.name(inst.class_id));
      std::cerr << "instance bank: " << bank.size() << " instances\n";
      const auto result =
          augment_dataset(Manifest::load(source_manifest), table, bank, requested, aug, seed, aug_out);
      for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
    } else if (*fit) {
      const auto table = ClassTable::load(table_path);
      std::vector<PredictionSet> sets;
      Eigen::Index rows = 0;
      int d = -1;
      for (const auto& entry : Manifest::load(fit_manifest).frames) {
        sets.push_back(read_prediction_set(entry.predictions));
        if (!sets.back().has_features()) throw FeaturesAbsent();
        if (d >= 0 && sets.back().d != d) throw HeaderInconsistent("feature dimension differs between frames");
        d = sets.back().d;
        rows += static_cast<Eigen::Index>(sets.back().n);
      }
      if (sets.empty()) throw PreconditionError("manifest lists no frames");
      Eigen::MatrixXd features(rows, d);
      std::vector<ClassId> labels;
      labels.reserve(static_cast<std::size_t>(rows));
      Eigen::Index r = 0;
      for (const auto& set : sets)
        for (std::size_t i = 0; i < set.n; ++i, ++r) {
          features.row(r) = set.feature(i).cast<double>().transpose();
          labels.push_back(set.gt_class(i));
        }
      std::vector<std::string> warnings;
      const auto model = MahalanobisModel::fit(features, labels, table, shrinkage, &warnings);
      for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
      model.save(fit_out);
      std::cerr << "fitted " << model.class_ids().size() << " classes, tau = " << model.tau() << '\n';
    } else if (*score) {
      const auto table = ClassTable::load(table_path);
      ScoreOptions options;
      options.methods.clear();
      for (const auto& m : split_list(methods_text)) options.methods.push_back(parse_method(m));
      options.temperature = temperature;
      MahalanobisModel model;
      if (!model_path.empty()) {
        model = MahalanobisModel::load(model_path);
        options.model = &model;
      }
      for (const auto& entry : Manifest::load(score_manifest).frames) {
        PredictionReadStats stats;
        const auto set = read_prediction_set(entry.predictions, &stats);
        if (stats.renormalized_rows > 0)
          std::cerr << entry.frame_id << ": renormalized " << stats.renormalized_rows << " rows\n";
        append_score_table(score_predictions(set, table, options, entry.frame_id), score_out);
      }
    } else if (*confusion || *metrics) {
      const auto table = ClassTable::load(table_path);
      LossAccumulator losses(table);
      const bool from_predictions = cm_scores.empty();
      const auto cm = confusion_from(cm_scores, cm_manifest, table, from_predictions ? &losses : nullptr);
      Sink sink(cm_out);
      if (*confusion && with_vectors) write_wpr_bcr_csv(sink.get(), cm, table);
      else if (*confusion) write_confusion_csv(sink.get(), cm, table);
      else write_metrics_csv(sink.get(), cm, table, from_predictions ? losses.per_class_nll() : std::vector<std::optional<double>>{});
    } else if (*evaluate) {
      const auto table = ClassTable::load(table_path);
      const Method method = parse_method(method_text);
      report_config.tasks.clear();
      for (const auto& t : split_list(tasks_text)) report_config.tasks.push_back(parse_task(t));
      std::vector<EvalRecord> records;
      for (const auto& t : read_score_file(eval_scores)) {
        if (!t.has(method))
          throw PreconditionError("frame " + t.frame_id + " has no " + std::string(to_string(method)) + " scores");
        for (const auto& row : t.rows) {
          if (row.gt == kIgnore) continue;
          records.push_back({row.gt, row.pd, row.g[static_cast<int>(method)]});
        }
      }
      const auto report = task_report(records, table, report_config);
      write_report(report, table, eval_out);
    }
  } catch (const levk::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
