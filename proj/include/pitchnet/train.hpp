#ifndef PITCHNET_TRAIN_HPP
#define PITCHNET_TRAIN_HPP

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "pitchnet/checkpoint.hpp"
#include "pitchnet/dataset.hpp"
#include "pitchnet/network.hpp"
#include "pitchnet/optim.hpp"
#include "pitchnet/rng.hpp"

namespace pitchnet {

/// Independent random streams so that, for a fixed seed, the sample order
/// does not depend on the network width (dropout draws scale with width).
struct TrainingRng {
  Engine shuffle;
  Engine dropout;

  static TrainingRng from_seed(std::uint64_t seed) {
    std::seed_seq shuffle_seq{std::uint32_t(seed), std::uint32_t(seed >> 32), 1u};
    std::seed_seq dropout_seq{std::uint32_t(seed), std::uint32_t(seed >> 32), 2u};
    return {Engine(shuffle_seq), Engine(dropout_seq)};
  }
};

struct EpochResult {
  double mean_loss = 0.0;
  std::size_t samples = 0;
  std::size_t steps = 0;
  bool interrupted = false;
};

/// One pass over `data` in shuffled mini-batches with one RMSProp step per
/// batch. Batch gradients are summed in sample order, then averaged. If
/// `stop` becomes true the epoch ends after the current batch.
inline EpochResult train_epoch(const EncodedDataset& data, NetworkParams& params, const NetworkSpec& spec,
                               RmsPropState& opt, std::size_t batch_size, TrainingRng& rng,
                               const std::atomic<bool>* stop = nullptr) {
  const std::size_t n = data.num_samples();
  if (n == 0) fail(ErrorCode::EmptyDataset, "training set is empty");
  if (batch_size == 0) fail(ErrorCode::InvalidArgument, "batch size must be positive");

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  shuffle(order, rng.shuffle);

  NetworkParams grad = zero_params(spec);
  ForwardCache cache;
  EpochResult result;
  double total = 0.0;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    grad.for_each([](const std::string&, Tensor& t) { t.fill(0.0); });
    double batch_loss = 0.0;
    for (std::size_t k = start; k < end; ++k) {
      const std::size_t s = order[k];
      network_forward(data.input(s), params, spec, Mode::Train, rng.dropout, cache);
      batch_loss += cross_entropy(cache.dist, data.target_ids[s]);
      network_backward(cache, params, data.target_ids[s], grad);
    }
    const double inv = 1.0 / static_cast<double>(end - start);
    grad.for_each([&](const std::string&, Tensor& t) {
      for (double& v : t.data) v *= inv;
    });
    rmsprop_step(params, grad, opt);
    total += batch_loss;
    result.samples = end;
    ++result.steps;
    if (stop && stop->load() && end < n) {
      result.interrupted = true;
      break;
    }
  }
  result.mean_loss = total / static_cast<double>(result.samples);
  return result;
}

/// Mean inference-mode loss over the whole dataset.
inline double evaluate_loss(const EncodedDataset& data, const NetworkParams& params, const NetworkSpec& spec) {
  Engine unused(0);
  ForwardCache cache;
  double total = 0.0;
  for (std::size_t s = 0; s < data.num_samples(); ++s) {
    network_forward(data.input(s), params, spec, Mode::Infer, unused, cache);
    total += cross_entropy(cache.dist, data.target_ids[s]);
  }
  return total / static_cast<double>(data.num_samples());
}

struct EpochRecord {
  std::uint64_t epoch = 0;
  double mean_loss = 0.0;
  double seconds = 0.0;
};

struct TrainingReport {
  std::vector<EpochRecord> epochs;
  std::uint64_t best_epoch = 0;
  double best_loss = 0.0;
  bool interrupted = false;
  bool stopped_early = false;
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
};

/// Lowest loss wins; ties go to the earliest epoch.
inline void select_best(TrainingReport& report) {
  for (const auto& e : report.epochs) {
    if (report.best_epoch == 0 || e.mean_loss < report.best_loss) {
      report.best_epoch = e.epoch;
      report.best_loss = e.mean_loss;
    }
  }
}

struct TrainConfig {
  std::filesystem::path corpus;
  // Empty: build the vocabulary from the corpus and write vocab.txt to `out_dir`.
  std::filesystem::path vocab;
  std::filesystem::path out_dir;
  NetworkSpec spec;  // vocab_size is filled in from the vocabulary
  std::size_t stride = 1;
  std::uint64_t epochs = 100;
  std::size_t batch_size = 64;
  RmsPropConfig optimizer;
  std::uint64_t seed = 0;
  std::filesystem::path resume;
  bool keep_best_only = false;
  // Extension: stop after this many epochs without a new best (0 = never).
  std::uint64_t patience = 0;
  const std::atomic<bool>* stop = nullptr;
  std::ostream* progress = nullptr;
};

inline std::string format_loss(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string loss_log_csv(const std::vector<EpochRecord>& records) {
  std::string out = "epoch,mean_loss,seconds\n";
  char buf[96];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%llu,%s,%.3f\n", static_cast<unsigned long long>(r.epoch), format_loss(r.mean_loss).c_str(),
                  r.seconds);
    out += buf;
  }
  return out;
}

inline std::vector<EpochRecord> parse_loss_log(const std::string& text) {
  std::vector<EpochRecord> out;
  std::size_t pos = text.find('\n');
  while (pos != std::string::npos && pos + 1 < text.size()) {
    const std::size_t next = text.find('\n', pos + 1);
    const std::string line = text.substr(pos + 1, next - pos - 1);
    unsigned long long epoch = 0;
    double loss = 0, secs = 0;
    if (std::sscanf(line.c_str(), "%llu,%lf,%lf", &epoch, &loss, &secs) == 3) out.push_back({epoch, loss, secs});
    pos = next;
  }
  return out;
}

inline std::string epoch_checkpoint_name(std::uint64_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%04llu.ckpt", static_cast<unsigned long long>(epoch));
  return buf;
}

/// Corpus, vocabulary and encoded windows as prepared for training.
struct PreparedCorpus {
  std::vector<CorpusPiece> pieces;
  Vocabulary vocab;
  std::vector<std::vector<TokenId>> sequences;
  std::vector<TrainingWindow> windows;
  EncodedDataset data;
};

inline PreparedCorpus prepare_corpus(const std::filesystem::path& corpus, std::optional<Vocabulary> vocab, WindowSpec window) {
  PreparedCorpus pc;
  pc.pieces = load_corpus(corpus);
  pc.vocab = vocab ? std::move(*vocab) : build_vocabulary(token_lists(pc.pieces));
  pc.sequences = encode_corpus(pc.pieces, pc.vocab);
  pc.windows = make_windows(pc.sequences, window);
  pc.data = normalize_inputs(pc.windows, pc.vocab.size(), window);
  return pc;
}

/// Epoch loop with a checkpoint and a loss-log update after every epoch.
/// `epochs` is the total epoch count; a resumed run continues from the
/// checkpoint's epoch up to it.
inline TrainingReport train(TrainConfig config) {
  namespace fs = std::filesystem;
  validate(config.optimizer);
  if (config.batch_size == 0) fail(ErrorCode::InvalidArgument, "batch size must be positive");
  const WindowSpec window{config.spec.window_len, config.stride};
  validate(window);

  std::optional<Vocabulary> given;
  if (!config.vocab.empty()) given = load_vocabulary(config.vocab);
  PreparedCorpus pc = prepare_corpus(config.corpus, std::move(given), window);
  if (pc.vocab.size() < 2) fail(ErrorCode::CorpusTooShort, "training needs at least two distinct tokens");

  NetworkSpec spec = config.spec;
  spec.vocab_size = pc.vocab.size();
  validate(spec);
  const std::string vocab_hash = pc.vocab.content_hash();

  std::error_code ec;
  fs::create_directories(config.out_dir, ec);
  if (ec || !fs::is_directory(config.out_dir)) fail(ErrorCode::IoError, "cannot create output directory " + config.out_dir.string());
  if (config.vocab.empty()) save_vocabulary(config.out_dir / "vocab.txt", pc.vocab);

  TrainingReport report;
  std::vector<EpochRecord> log;
  NetworkParams params;
  RmsPropState opt;
  TrainingRng rng = TrainingRng::from_seed(config.seed);
  std::uint64_t done = 0;
  std::uint64_t best_epoch = 0;
  double best_loss = 0.0;

  const fs::path log_path = config.out_dir / "loss.csv";
  if (!config.resume.empty()) {
    Checkpoint ck = load_checkpoint(config.resume);
    if (ck.vocab_hash != vocab_hash) fail(ErrorCode::ChecksumMismatch, "checkpoint was trained with a different vocabulary");
    if (!(ck.spec == spec)) fail(ErrorCode::ShapeMismatch, "checkpoint network spec differs from the requested one");
    params = std::move(ck.params);
    opt = {config.optimizer, std::move(ck.mean_square)};
    rng = {engine_from_state(ck.shuffle_rng), engine_from_state(ck.dropout_rng)};
    done = ck.epoch;
    best_epoch = ck.best_epoch;
    best_loss = ck.best_loss;
    if (fs::exists(log_path)) {
      for (const auto& r : parse_loss_log(read_text(log_path)))
        if (r.epoch <= done) log.push_back(r);
    }
  } else {
    params = init_params(spec, config.seed);
    opt = RmsPropState::zeros(spec, config.optimizer);
  }

  auto snapshot = [&](std::uint64_t epoch, double loss, bool partial) {
    Checkpoint c;
    c.epoch = epoch;
    c.loss = loss;
    c.spec = spec;
    c.window = window;
    c.vocab_hash = vocab_hash;
    c.optimizer = config.optimizer;
    c.batch_size = config.batch_size;
    c.seed = config.seed;
    c.shuffle_rng = engine_state(rng.shuffle);
    c.dropout_rng = engine_state(rng.dropout);
    c.best_epoch = best_epoch;
    c.best_loss = best_loss;
    c.partial = partial;
    c.params = params;
    c.mean_square = opt.mean_square;
    return c;
  };

  std::uint64_t since_best = 0;
  for (std::uint64_t epoch = done + 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const EpochResult r = train_epoch(pc.data, params, spec, opt, config.batch_size, rng, config.stop);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (r.interrupted) {
      report.interrupted = true;
      report.last_checkpoint = config.out_dir / "interrupted.ckpt";
      save_checkpoint(report.last_checkpoint, snapshot(epoch - 1, r.mean_loss, true));
      if (config.progress) *config.progress << "interrupted during epoch " << epoch << "; saved " << report.last_checkpoint.string() << "\n";
      break;
    }

    const bool improved = best_epoch == 0 || r.mean_loss < best_loss;
    if (improved) {
      best_epoch = epoch;
      best_loss = r.mean_loss;
      since_best = 0;
    } else {
      ++since_best;
    }
    report.epochs.push_back({epoch, r.mean_loss, secs});
    log.push_back({epoch, r.mean_loss, secs});

    const Checkpoint ck = snapshot(epoch, r.mean_loss, false);
    if (config.keep_best_only) {
      report.last_checkpoint = config.out_dir / "last.ckpt";
    } else {
      report.last_checkpoint = config.out_dir / epoch_checkpoint_name(epoch);
    }
    save_checkpoint(report.last_checkpoint, ck);
    if (improved) save_checkpoint(config.out_dir / "best.ckpt", ck);
    write_text_atomic(log_path, loss_log_csv(log));

    if (config.progress) {
      *config.progress << "epoch " << epoch << "/" << config.epochs << " loss " << format_loss(r.mean_loss) << " ("
                       << secs << " s)" << (improved ? " *" : "") << "\n";
    }
    if (config.stop && config.stop->load()) {
      report.interrupted = true;
      break;
    }
    if (config.patience > 0 && since_best >= config.patience) {
      report.stopped_early = true;
      break;
    }
  }

  if (report.epochs.empty() && log.empty() && !report.interrupted) {
    // Nothing ran (epochs = 0): still a valid, empty report.
    return report;
  }
  // After a resume the report covers the whole run, not just this session.
  report.epochs = std::move(log);
  report.best_epoch = best_epoch;
  report.best_loss = best_loss;
  if (best_epoch) report.best_checkpoint = config.out_dir / "best.ckpt";
  return report;
}

}  // namespace pitchnet

#endif  // PITCHNET_TRAIN_HPP
