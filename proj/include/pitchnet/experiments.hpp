#ifndef PITCHNET_EXPERIMENTS_HPP
#define PITCHNET_EXPERIMENTS_HPP

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "pitchnet/io.hpp"
#include "pitchnet/train.hpp"

namespace pitchnet {

struct LossCurve {
  TrainingReport report;
  std::filesystem::path csv;
};

/// Trains with `config` and writes loss_curve.csv (plus a gnuplot script)
/// into config.out_dir.
inline LossCurve run_loss_curve(const TrainConfig& config, std::ostream* summary = nullptr) {
  LossCurve out;
  out.report = train(config);
  out.csv = config.out_dir / "loss_curve.csv";
  write_text_atomic(out.csv, loss_log_csv(out.report.epochs));
  write_text_atomic(config.out_dir / "loss_curve.gp",
                    "set datafile separator ','\n"
                    "set key autotitle columnhead\n"
                    "set xlabel 'epoch'\nset ylabel 'mean cross-entropy'\n"
                    "plot 'loss_curve.csv' using 1:2 with linespoints\n");
  if (summary && !out.report.epochs.empty()) {
    *summary << "first-epoch loss " << format_loss(out.report.epochs.front().mean_loss) << ", best loss "
             << format_loss(out.report.best_loss) << " at epoch " << out.report.best_epoch << "\n";
  }
  return out;
}

struct SweepConfig {
  TrainConfig base;  // out_dir is the sweep directory; spec.lstm_width is overridden
  std::vector<std::size_t> widths{32, 64, 128, 256};
};

struct WidthRun {
  std::size_t width = 0;
  std::vector<double> losses;
  double final_loss = 0.0;
  double best_loss = 0.0;
  std::uint64_t best_epoch = 0;
  double seconds = 0.0;
};

struct SweepResult {
  std::vector<WidthRun> runs;
  std::filesystem::path csv;
};

inline std::string sweep_csv(const std::vector<WidthRun>& runs) {
  std::string out = "epoch";
  for (const auto& r : runs) out += ",loss_w" + std::to_string(r.width);
  out += '\n';
  std::size_t rows = 0;
  for (const auto& r : runs) rows = std::max(rows, r.losses.size());
  for (std::size_t e = 0; e < rows; ++e) {
    out += std::to_string(e + 1);
    for (const auto& r : runs) out += "," + (e < r.losses.size() ? format_loss(r.losses[e]) : std::string());
    out += '\n';
  }
  auto summary = [&](const char* label, auto field) {
    out += label;
    for (const auto& r : runs) out += "," + field(r);
    out += '\n';
  };
  summary("final", [](const WidthRun& r) { return format_loss(r.final_loss); });
  summary("best", [](const WidthRun& r) { return format_loss(r.best_loss); });
  summary("best_epoch", [](const WidthRun& r) { return std::to_string(r.best_epoch); });
  summary("seconds", [](const WidthRun& r) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", r.seconds);
    return std::string(buf);
  });
  return out;
}

/// One training run per hidden width with identical data order and seeds;
/// each run lands in <out_dir>/w<width>/.
inline SweepResult run_hidden_size_sweep(const SweepConfig& sweep, std::ostream* log = nullptr) {
  if (sweep.widths.empty()) fail(ErrorCode::InvalidArgument, "sweep needs at least one width");
  if (std::set<std::size_t>(sweep.widths.begin(), sweep.widths.end()).size() != sweep.widths.size()) {
    fail(ErrorCode::InvalidArgument, "sweep widths must be distinct");
  }
  if (sweep.base.epochs == 0) fail(ErrorCode::InvalidArgument, "sweep needs at least one epoch");
  for (auto w : sweep.widths)
    if (w == 0) fail(ErrorCode::InvalidArgument, "sweep widths must be positive");

  SweepResult result;
  for (auto width : sweep.widths) {
    TrainConfig cfg = sweep.base;
    cfg.spec.lstm_width = width;
    cfg.out_dir = sweep.base.out_dir / ("w" + std::to_string(width));
    cfg.resume.clear();
    const auto curve = run_loss_curve(cfg);
    WidthRun run;
    run.width = width;
    for (const auto& e : curve.report.epochs) {
      run.losses.push_back(e.mean_loss);
      run.seconds += e.seconds;
    }
    run.final_loss = run.losses.empty() ? 0.0 : run.losses.back();
    run.best_loss = curve.report.best_loss;
    run.best_epoch = curve.report.best_epoch;
    if (log) {
      *log << "width " << width << ": best " << format_loss(run.best_loss) << " at epoch " << run.best_epoch << ", "
           << run.seconds << " s\n";
    }
    if (log && !result.runs.empty() && run.seconds < result.runs.back().seconds && width > result.runs.back().width) {
      *log << "warning: width " << width << " trained faster than width " << result.runs.back().width << "\n";
    }
    result.runs.push_back(std::move(run));
    if (curve.report.interrupted) break;
  }

  result.csv = sweep.base.out_dir / "sweep.csv";
  write_text_atomic(result.csv, sweep_csv(result.runs));
  std::string gp = "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'epoch'\nplot ";
  for (std::size_t i = 0; i < result.runs.size(); ++i) {
    gp += (i ? ", " : "") + std::string("'sweep.csv' every ::0::") + std::to_string(sweep.base.epochs - 1) + " using 1:" +
          std::to_string(i + 2) + " with lines";
  }
  write_text_atomic(sweep.base.out_dir / "sweep.gp", gp + "\n");
  return result;
}

}  // namespace pitchnet

#endif  // PITCHNET_EXPERIMENTS_HPP
