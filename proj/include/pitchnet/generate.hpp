#ifndef PITCHNET_GENERATE_HPP
#define PITCHNET_GENERATE_HPP

// Autoregressive generation: start from a window taken from the training
// corpus, predict the next token, append it, drop the oldest token, repeat.

#include <cmath>
#include <deque>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "pitchnet/checkpoint.hpp"
#include "pitchnet/dataset.hpp"
#include "pitchnet/midi.hpp"
#include "pitchnet/network.hpp"
#include "pitchnet/score.hpp"
#include "pitchnet/train.hpp"

namespace pitchnet {

struct Sampling {
  enum class Kind { Argmax, Temperature };
  Kind kind = Kind::Argmax;
  double temperature = 1.0;

  static Sampling argmax() { return {}; }
  static Sampling with_temperature(double t) {
    if (!(t > 0.0)) fail(ErrorCode::InvalidArgument, "temperature must be positive");
    return {Kind::Temperature, t};
  }
};

/// The rolling input window; its length never changes.
class GenerationBuffer {
 public:
  explicit GenerationBuffer(std::vector<TokenId> ids) : ids_(ids.begin(), ids.end()) {
    if (ids_.empty()) fail(ErrorCode::InvalidArgument, "generation buffer cannot be empty");
  }

  std::size_t size() const { return ids_.size(); }
  std::vector<TokenId> ids() const { return {ids_.begin(), ids_.end()}; }

  void push(TokenId next) {
    ids_.push_back(next);
    ids_.pop_front();
  }

  std::vector<double> normalized(std::size_t vocab_size) const {
    std::vector<double> x;
    x.reserve(ids_.size());
    for (auto id : ids_) x.push_back(normalize_id(id, vocab_size));
    return x;
  }

 private:
  std::deque<TokenId> ids_;
};

struct SeedChoice {
  // Unset: uniformly random window.
  std::optional<std::size_t> index;
};

inline GenerationBuffer select_seed(const std::vector<TrainingWindow>& windows, const SeedChoice& choice, Engine& rng) {
  if (windows.empty()) fail(ErrorCode::CorpusTooShort, "corpus yields no seed window");
  std::size_t i;
  if (choice.index) {
    i = *choice.index;
    if (i >= windows.size()) {
      fail(ErrorCode::IndexOutOfRange, "seed index " + std::to_string(i) + " but only " + std::to_string(windows.size()) + " windows");
    }
  } else {
    i = static_cast<std::size_t>(uniform_index(rng, windows.size()));
  }
  return GenerationBuffer(windows[i].input_ids);
}

/// Argmax takes the smallest id with maximal probability. Temperature mode
/// samples from softmax(ln(p) / temperature).
inline TokenId sample_index(const PredictionDistribution& dist, const Sampling& mode, Engine& rng) {
  const auto& p = dist.probs;
  if (p.empty()) fail(ErrorCode::InvalidArgument, "empty distribution");
  if (mode.kind == Sampling::Kind::Argmax) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < p.size(); ++k)
      if (p[k] > p[best]) best = k;
    return static_cast<TokenId>(best);
  }
  std::vector<double> logw(p.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < p.size(); ++k) {
    logw[k] = p[k] > 0.0 ? std::log(p[k]) / mode.temperature : -std::numeric_limits<double>::infinity();
    mx = std::max(mx, logw[k]);
  }
  double total = 0.0;
  for (double& w : logw) total += (w = std::exp(w - mx));
  double u = uniform01(rng) * total;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (u < logw[k]) return static_cast<TokenId>(k);
    u -= logw[k];
  }
  for (std::size_t k = p.size(); k-- > 0;)
    if (logw[k] > 0.0) return static_cast<TokenId>(k);
  return 0;
}

/// Called after every step with the step index and the buffer.
using StepObserver = std::function<void(std::size_t step, const GenerationBuffer&)>;

/// Runs `length` predict/append/drop-first iterations and returns the
/// predicted ids (the seed itself is not included).
inline std::vector<TokenId> generate_ids(const NetworkParams& params, const NetworkSpec& spec, GenerationBuffer buffer,
                                         std::size_t length, const Sampling& sampling, Engine& rng,
                                         const StepObserver& observe = {}) {
  if (buffer.size() != spec.window_len) fail(ErrorCode::ShapeMismatch, "seed window length differs from the network's");
  std::vector<TokenId> out;
  out.reserve(length);
  ForwardCache cache;
  Engine no_dropout(0);
  for (std::size_t step = 0; step < length; ++step) {
    network_forward(buffer.normalized(spec.vocab_size), params, spec, Mode::Infer, no_dropout, cache);
    const TokenId next = sample_index(cache.dist, sampling, rng);
    out.push_back(next);
    buffer.push(next);
    if (observe) observe(step, buffer);
  }
  return out;
}

struct GenerationConfig {
  std::filesystem::path checkpoint;
  std::filesystem::path vocab;
  std::filesystem::path corpus;
  std::size_t length = 200;
  Sampling sampling;
  SeedChoice seed_choice;
  std::uint64_t rng_seed = 0;
  bool include_seed = false;
};

struct GenerationResult {
  std::vector<TokenId> seed;
  std::vector<TokenId> generated;
  Vocabulary vocab;

  /// Generated ids, optionally preceded by the seed window.
  std::vector<TokenId> output(bool include_seed) const {
    std::vector<TokenId> ids;
    if (include_seed) ids = seed;
    ids.insert(ids.end(), generated.begin(), generated.end());
    return ids;
  }
};

inline GenerationResult generate_sequence(const GenerationConfig& config) {
  if (config.length == 0) fail(ErrorCode::InvalidArgument, "generation length must be at least 1");
  const Checkpoint ck = load_checkpoint(config.checkpoint);
  Vocabulary vocab = load_vocabulary(config.vocab);
  if (vocab.content_hash() != ck.vocab_hash) {
    fail(ErrorCode::ChecksumMismatch, "vocabulary " + config.vocab.string() + " does not match the checkpoint");
  }
  if (vocab.size() != ck.spec.vocab_size) fail(ErrorCode::ShapeMismatch, "vocabulary size differs from checkpoint spec");

  const auto pieces = load_corpus(config.corpus);
  const auto windows = make_windows(encode_corpus(pieces, vocab), WindowSpec{ck.spec.window_len, 1});

  Engine rng(config.rng_seed);
  GenerationBuffer buffer = select_seed(windows, config.seed_choice, rng);
  GenerationResult result;
  result.seed = buffer.ids();
  result.generated = generate_ids(ck.params, ck.spec, std::move(buffer), config.length, config.sampling, rng);
  result.vocab = std::move(vocab);
  return result;
}

inline std::vector<PitchToken> ids_to_tokens(const std::vector<TokenId>& ids, const Vocabulary& vocab) {
  std::vector<PitchToken> tokens;
  tokens.reserve(ids.size());
  for (auto id : ids) tokens.push_back(PitchToken::parse(vocab.token(id)));
  return tokens;
}

/// Renders ids on the default grid and writes a format-0 MIDI file.
/// When `sidecar` is non-empty the token list is written there, one per line.
inline void emit_piece(const std::vector<TokenId>& ids, const Vocabulary& vocab, const std::filesystem::path& out,
                       const std::filesystem::path& sidecar = {}) {
  const auto tokens = ids_to_tokens(ids, vocab);
  const auto bytes = midi::write_midi(piece_to_midi(tokens_to_piece(tokens)));
  write_file_atomic(out, bytes);
  if (!sidecar.empty()) {
    std::string text;
    for (const auto& t : tokens) (text += t.text()) += '\n';
    write_text_atomic(sidecar, text);
  }
}

}  // namespace pitchnet

#endif  // PITCHNET_GENERATE_HPP
