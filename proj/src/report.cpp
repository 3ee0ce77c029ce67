#include "levk/report.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "levk/errors.hpp"

namespace levk {

namespace {

std::string num(double v) {
  std::ostringstream ss;
  ss << std::setprecision(12) << v;
  return ss.str();
}

std::string opt(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoFailure("cannot write " + path.string());
  return out;
}

}  // namespace

void write_confusion_csv(std::ostream& out, const ConfusionMatrix& cm, const ClassTable& table) {
  out << "gt_class,pd_class,count,gt_total,ratio\n";
  for (const auto& r : table.classes())
    for (const auto& c : table.classes()) {
      if (table.is_ood(c.id)) continue;
      out << r.name << ',' << c.name << ',' << cm.count(r.id, c.id) << ',' << cm.gt_total(r.id) << ','
          << opt(cm.ratio(r.id, c.id)) << '\n';
    }
}

void write_metrics_csv(std::ostream& out, const ConfusionMatrix& cm, const ClassTable& table,
                       const std::vector<std::optional<double>>& nll) {
  const auto metrics = class_metrics(cm);
  out << "class,scale_group,present,iou,pre,rec,wpre,not_pre,not_wpre,eta,gt_points,pd_points";
  if (!nll.empty()) out << ",nll";
  out << '\n';
  for (const auto& info : table.classes()) {
    const auto& m = metrics[info.id];
    out << info.name << ',' << to_string(info.group) << ',' << (m.present ? 1 : 0) << ',' << opt(m.iou) << ','
        << opt(m.pre) << ',' << opt(m.rec) << ',' << opt(m.wpre) << ',' << opt(m.not_pre) << ','
        << opt(m.not_wpre) << ',' << opt(m.eta) << ',' << cm.gt_total(info.id) << ',' << cm.pd_total(info.id);
    if (!nll.empty()) out << ',' << opt(nll[info.id]);
    out << '\n';
  }
}

void write_wpr_bcr_csv(std::ostream& out, const ConfusionMatrix& cm, const ClassTable& table) {
  const auto v = wpr_bcr(cm);
  out << "vector,class,other_class,ratio\n";
  for (const auto& info : table.classes())
    for (const auto& [other, ratio] : v.wpr[info.id])
      if (!table.is_ood(other)) out << "wpr," << info.name << ',' << table.name(other) << ',' << num(ratio) << '\n';
  for (const auto& info : table.classes())
    for (const auto& [other, ratio] : v.bcr[info.id])
      if (!table.is_ood(info.id)) out << "bcr," << info.name << ',' << table.name(other) << ',' << num(ratio) << '\n';
}

void write_tsd_csv(std::ostream& out, const TsdMatrix& tsd, const ClassTable& table) {
  out << "gt_class,band,present,row_sum";
  for (std::size_t i = 0; i + 1 < tsd.edges.size(); ++i) out << ",bin_" << num(tsd.edges[i]) << '_' << num(tsd.edges[i + 1]);
  out << '\n';
  for (std::size_t k = 0; k < tsd.rows.size(); ++k) {
    const auto row = static_cast<Eigen::Index>(k);
    out << table.name(tsd.rows[k]) << ',' << to_string(tsd.bands[k]) << ',' << (tsd.row_present[k] ? 1 : 0) << ','
        << num(tsd.q.row(row).sum());
    for (Eigen::Index i = 0; i < tsd.q.cols(); ++i) out << ',' << num(tsd.q(row, i));
    out << '\n';
  }
}

void write_report(const TaskReport& report, const ClassTable& table, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);

  {
    auto out = open_csv(dir / "auroc.csv");
    out << "class,scale_group";
    for (Task t : report.tasks) out << ",auroc_" << to_string(t) << ",n_true_" << to_string(t) << ",n_false_" << to_string(t);
    out << '\n';
    for (const auto& cr : report.classes) {
      out << table.name(cr.predicted) << ',' << to_string(table.info(cr.predicted).group);
      for (const auto& res : cr.tasks) out << ',' << opt(res.roc.auroc) << ',' << res.roc.positives << ',' << res.roc.negatives;
      out << '\n';
    }
  }

  for (std::size_t ti = 0; ti < report.tasks.size(); ++ti) {
    auto out = open_csv(dir / ("counts_" + std::string(to_string(report.tasks[ti])) + ".csv"));
    out << "class,delta,tp,tn,fp,fn,tpr,fpr\n";
    for (const auto& cr : report.classes) {
      const auto& res = cr.tasks[ti];
      for (std::size_t k = 0; k < report.delta_grid.size(); ++k) {
        const auto& c = res.counts[k];
        const auto rates = tpr_fpr(c);
        out << table.name(cr.predicted) << ',' << num(report.delta_grid[k]) << ',' << c.tp << ',' << c.tn << ','
            << c.fp << ',' << c.fn << ',' << opt(rates.tpr) << ',' << opt(rates.fpr) << '\n';
      }
    }
  }

  {
    auto out = open_csv(dir / "wpre_at.csv");
    out << "class,delta";
    for (Task t : report.tasks) out << ",wpre_" << to_string(t);
    out << '\n';
    for (const auto& cr : report.classes) {
      out << table.name(cr.predicted) << ',' << num(report.delta);
      for (const auto& res : cr.tasks) out << ',' << opt(res.wpre_at);
      out << '\n';
    }
  }

  for (const auto& cr : report.classes) {
    const auto& name = table.name(cr.predicted);
    {
      auto out = open_csv(dir / ("tsd_" + name + ".csv"));
      write_tsd_csv(out, cr.tsd, table);
    }
    for (const auto& res : cr.tasks) {
      auto out = open_csv(dir / ("roc_" + name + "_" + std::string(to_string(res.task)) + ".csv"));
      out << "min_score,fpr,tpr\n";
      for (const auto& p : res.roc.points) out << num(p.min_score) << ',' << num(p.fpr) << ',' << num(p.tpr) << '\n';
    }
  }

  {
    auto out = open_csv(dir / "confusion.csv");
    write_confusion_csv(out, report.cm, table);
  }
  {
    auto out = open_csv(dir / "metrics.csv");
    write_metrics_csv(out, report.cm, table);
  }
}

}  // namespace levk
