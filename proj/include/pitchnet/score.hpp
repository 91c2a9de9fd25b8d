#ifndef PITCHNET_SCORE_HPP
#define PITCHNET_SCORE_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "pitchnet/error.hpp"
#include "pitchnet/midi.hpp"

namespace pitchnet {

/// A single note or a chord: the distinct MIDI keys sounding at one onset.
class PitchToken {
 public:
  PitchToken() = default;

  /// Sorts and de-duplicates `keys`.
  explicit PitchToken(std::vector<std::uint8_t> keys) : keys_(std::move(keys)) {
    std::sort(keys_.begin(), keys_.end());
    keys_.erase(std::unique(keys_.begin(), keys_.end()), keys_.end());
    if (keys_.empty()) fail(ErrorCode::InvalidArgument, "pitch token needs at least one key");
    if (keys_.back() > 127) fail(ErrorCode::InvalidArgument, "MIDI key out of range");
  }

  /// Parses the canonical `key("." key)*` form.
  static PitchToken parse(std::string_view text) {
    std::vector<std::uint8_t> keys;
    std::size_t start = 0;
    while (start <= text.size()) {
      const std::size_t dot = std::min(text.find('.', start), text.size());
      unsigned value = 0;
      const char* first = text.data() + start;
      const char* last = text.data() + dot;
      auto [ptr, ec] = std::from_chars(first, last, value);
      if (ec != std::errc{} || ptr != last || first == last || value > 127) {
        fail(ErrorCode::InvalidArgument, "malformed pitch token '" + std::string(text) + "'");
      }
      keys.push_back(static_cast<std::uint8_t>(value));
      start = dot + 1;
    }
    PitchToken token(std::move(keys));
    if (token.text() != text) fail(ErrorCode::InvalidArgument, "pitch token not in canonical form: '" + std::string(text) + "'");
    return token;
  }

  const std::vector<std::uint8_t>& keys() const { return keys_; }

  std::string text() const {
    std::string out;
    for (std::size_t i = 0; i < keys_.size(); ++i) {
      if (i) out += '.';
      out += std::to_string(keys_[i]);
    }
    return out;
  }

  bool operator==(const PitchToken&) const = default;

 private:
  std::vector<std::uint8_t> keys_;
};

/// Notes grouped into chords by exact onset tick, across all tracks.
/// Durations and NoteOffs play no part.
inline std::vector<PitchToken> extract_pitch_tokens(const midi::MidiFile& file) {
  std::map<std::uint64_t, std::vector<std::uint8_t>> onsets;
  for (const auto& track : file.tracks) {
    for (const auto& ev : track.events) {
      if (ev.kind == midi::EventKind::NoteOn) onsets[ev.tick].push_back(ev.key);
    }
  }
  if (onsets.empty()) fail(ErrorCode::NoNotes, "MIDI file contains no NoteOn events");
  std::vector<PitchToken> tokens;
  tokens.reserve(onsets.size());
  for (auto& [tick, keys] : onsets) tokens.emplace_back(std::move(keys));
  return tokens;
}

/// Tokens laid out on a fixed rhythmic grid.
struct Piece {
  std::vector<PitchToken> tokens;
  double step_quarters = 0.5;
  double note_quarters = 0.5;
};

struct RenderDefaults {
  static constexpr double step_quarters = 0.5;
  static constexpr double note_quarters = 0.5;
  static constexpr std::uint8_t velocity = 90;
  static constexpr std::uint32_t tempo_us = 500000;
  static constexpr std::uint16_t division = 480;
};

inline Piece tokens_to_piece(std::vector<PitchToken> tokens, double step_quarters = RenderDefaults::step_quarters,
                             double note_quarters = RenderDefaults::note_quarters) {
  if (tokens.empty()) fail(ErrorCode::EmptySequence, "cannot build a piece from zero tokens");
  if (!(step_quarters > 0) || !(note_quarters > 0)) fail(ErrorCode::InvalidArgument, "step and note length must be positive");
  return {std::move(tokens), step_quarters, note_quarters};
}

inline midi::MidiFile piece_to_midi(const Piece& piece, std::uint16_t division = RenderDefaults::division,
                                    std::uint32_t tempo_us = RenderDefaults::tempo_us) {
  if (piece.tokens.empty()) fail(ErrorCode::EmptySequence, "cannot render an empty piece");
  const auto length = static_cast<std::uint64_t>(std::llround(piece.note_quarters * division));

  midi::MidiTrack track;
  track.events.push_back(midi::MidiEvent::tempo(0, tempo_us));
  std::vector<midi::MidiEvent> notes;
  for (std::size_t i = 0; i < piece.tokens.size(); ++i) {
    const auto onset = static_cast<std::uint64_t>(std::llround(static_cast<double>(i) * piece.step_quarters * division));
    for (auto key : piece.tokens[i].keys()) {
      notes.push_back(midi::MidiEvent::note_on(onset, key, RenderDefaults::velocity));
      notes.push_back(midi::MidiEvent::note_off(onset + length, key));
    }
  }
  midi::sort_events(notes);
  const std::uint64_t end = notes.back().tick;
  track.events.insert(track.events.end(), notes.begin(), notes.end());
  track.events.push_back(midi::MidiEvent::end_of_track(end));
  return {.format = 0, .division = division, .tracks = {std::move(track)}};
}

}  // namespace pitchnet

#endif  // PITCHNET_SCORE_HPP
