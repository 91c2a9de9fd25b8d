#ifndef PITCHNET_DATASET_HPP
#define PITCHNET_DATASET_HPP

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "pitchnet/error.hpp"
#include "pitchnet/io.hpp"
#include "pitchnet/midi.hpp"
#include "pitchnet/score.hpp"
#include "pitchnet/tensor.hpp"

namespace pitchnet {

using TokenId = std::uint32_t;

/// Bijection between canonical token strings and ids 0..V-1, in
/// lexicographic token order.
class Vocabulary {
 public:
  Vocabulary() = default;

  /// `tokens` must be strictly ascending.
  explicit Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (i && !(tokens_[i - 1] < tokens_[i])) fail(ErrorCode::InvalidArgument, "vocabulary tokens must be strictly ascending");
      index_.emplace(tokens_[i], static_cast<TokenId>(i));
    }
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  const std::string& token(TokenId id) const {
    if (id >= tokens_.size()) fail(ErrorCode::IdOutOfRange, "token id " + std::to_string(id) + " outside vocabulary");
    return tokens_[id];
  }

  bool contains(std::string_view token) const { return index_.find(std::string(token)) != index_.end(); }

  TokenId id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) fail(ErrorCode::UnknownToken, "token '" + std::string(token) + "' not in vocabulary");
    return it->second;
  }

  std::vector<TokenId> encode(const std::vector<PitchToken>& seq) const {
    std::vector<TokenId> ids;
    ids.reserve(seq.size());
    for (const auto& t : seq) ids.push_back(id(t.text()));
    return ids;
  }

  /// One token per line, in id order.
  std::string to_text() const {
    std::string out;
    for (const auto& t : tokens_) (out += t) += '\n';
    return out;
  }

  static Vocabulary from_text(std::string_view text) {
    std::vector<std::string> tokens;
    std::size_t start = 0;
    while (start < text.size()) {
      std::size_t nl = text.find('\n', start);
      if (nl == std::string_view::npos) nl = text.size();
      std::string_view line = text.substr(start, nl - start);
      if (line.empty()) fail(ErrorCode::InvalidArgument, "blank line in vocabulary file");
      tokens.emplace_back(PitchToken::parse(line).text());
      start = nl + 1;
    }
    return Vocabulary(std::move(tokens));
  }

  std::string content_hash() const { return fnv1a_hex(to_text()); }

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, TokenId, std::less<>> index_;
};

inline Vocabulary build_vocabulary(const std::vector<std::vector<PitchToken>>& corpus) {
  std::set<std::string> distinct;
  for (const auto& seq : corpus)
    for (const auto& t : seq) distinct.insert(t.text());
  if (distinct.empty()) fail(ErrorCode::EmptyCorpus, "corpus contains no tokens");
  return Vocabulary({distinct.begin(), distinct.end()});
}

inline void save_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab) {
  write_text_atomic(path, vocab.to_text());
}

inline Vocabulary load_vocabulary(const std::filesystem::path& path) { return Vocabulary::from_text(read_text(path)); }

struct WindowSpec {
  std::size_t window_len = 80;
  std::size_t stride = 1;
};

struct TrainingWindow {
  std::vector<TokenId> input_ids;
  TokenId target_id = 0;
  bool operator==(const TrainingWindow&) const = default;
};

inline void validate(const WindowSpec& spec) {
  if (spec.window_len == 0 || spec.stride == 0) fail(ErrorCode::InvalidArgument, "window length and stride must be positive");
}

/// Windows from each sequence independently; no window spans two sequences.
inline std::vector<TrainingWindow> make_windows(const std::vector<std::vector<TokenId>>& sequences, const WindowSpec& spec) {
  validate(spec);
  std::vector<TrainingWindow> out;
  for (const auto& s : sequences) {
    for (std::size_t p = 0; p + spec.window_len < s.size(); p += spec.stride) {
      TrainingWindow w;
      w.input_ids.assign(s.begin() + static_cast<std::ptrdiff_t>(p), s.begin() + static_cast<std::ptrdiff_t>(p + spec.window_len));
      w.target_id = s[p + spec.window_len];
      out.push_back(std::move(w));
    }
  }
  if (out.empty()) {
    fail(ErrorCode::CorpusTooShort, "no sequence is longer than the window length " + std::to_string(spec.window_len));
  }
  return out;
}

inline std::vector<TrainingWindow> make_windows(const std::vector<TokenId>& ids, const WindowSpec& spec) {
  return make_windows(std::vector<std::vector<TokenId>>{ids}, spec);
}

inline std::vector<double> one_hot(TokenId id, std::size_t vocab_size) {
  if (id >= vocab_size) fail(ErrorCode::IdOutOfRange, "id " + std::to_string(id) + " >= vocabulary size " + std::to_string(vocab_size));
  std::vector<double> row(vocab_size, 0.0);
  row[id] = 1.0;
  return row;
}

/// Scalar input encoding shared by training and generation.
inline double normalize_id(TokenId id, std::size_t vocab_size) {
  return static_cast<double>(id) / static_cast<double>(vocab_size);
}

struct EncodedDataset {
  Tensor inputs;   // [samples x window_len x 1]
  Tensor targets;  // [samples x V]
  std::vector<TokenId> target_ids;
  std::size_t vocab_size = 0;
  WindowSpec spec;

  std::size_t num_samples() const { return target_ids.size(); }
  std::span<const double> input(std::size_t sample) const {
    return {inputs.data.data() + sample * spec.window_len, spec.window_len};
  }
};

inline EncodedDataset normalize_inputs(const std::vector<TrainingWindow>& windows, std::size_t vocab_size,
                                       WindowSpec spec = {}) {
  if (vocab_size == 0) fail(ErrorCode::InvalidArgument, "vocabulary size must be positive");
  if (!windows.empty()) spec.window_len = windows.front().input_ids.size();
  EncodedDataset ds;
  ds.vocab_size = vocab_size;
  ds.spec = spec;
  ds.inputs = Tensor({windows.size(), spec.window_len, 1});
  ds.targets = Tensor({windows.size(), vocab_size});
  for (std::size_t n = 0; n < windows.size(); ++n) {
    const auto& w = windows[n];
    if (w.input_ids.size() != spec.window_len) fail(ErrorCode::ShapeMismatch, "windows differ in length");
    for (std::size_t t = 0; t < spec.window_len; ++t) {
      if (w.input_ids[t] >= vocab_size) fail(ErrorCode::IdOutOfRange, "input id outside vocabulary");
      ds.inputs[n * spec.window_len + t] = normalize_id(w.input_ids[t], vocab_size);
    }
    auto row = one_hot(w.target_id, vocab_size);
    std::copy(row.begin(), row.end(), ds.targets.row(n).begin());
    ds.target_ids.push_back(w.target_id);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Corpus loading

struct CorpusPiece {
  std::filesystem::path path;
  std::vector<PitchToken> tokens;
};

/// MIDI files (*.mid, *.midi) directly under `path`, sorted by filename, or
/// the single file `path` names.
inline std::vector<std::filesystem::path> corpus_files(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  if (!fs::exists(path)) fail(ErrorCode::IoError, "corpus path not found: " + path.string());
  if (!fs::is_directory(path)) return {path};
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(path)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (ext == ".mid" || ext == ".midi") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) fail(ErrorCode::EmptyCorpus, "no MIDI files in " + path.string());
  return files;
}

inline std::vector<CorpusPiece> load_corpus(const std::filesystem::path& path) {
  std::vector<CorpusPiece> pieces;
  for (const auto& file : corpus_files(path)) {
    const auto bytes = read_file(file);
    try {
      pieces.push_back({file, extract_pitch_tokens(midi::parse_midi(bytes))});
    } catch (const Error& e) {
      throw Error(e.code(), file.string() + ": " + e.what());
    }
  }
  return pieces;
}

inline std::vector<std::vector<PitchToken>> token_lists(const std::vector<CorpusPiece>& pieces) {
  std::vector<std::vector<PitchToken>> out;
  for (const auto& p : pieces) out.push_back(p.tokens);
  return out;
}

inline std::vector<std::vector<TokenId>> encode_corpus(const std::vector<CorpusPiece>& pieces, const Vocabulary& vocab) {
  std::vector<std::vector<TokenId>> out;
  for (const auto& p : pieces) {
    try {
      out.push_back(vocab.encode(p.tokens));
    } catch (const Error& e) {
      throw Error(e.code(), p.path.string() + ": " + e.what());
    }
  }
  return out;
}

}  // namespace pitchnet

#endif  // PITCHNET_DATASET_HPP
