#ifndef PITCHNET_MIDI_HPP
#define PITCHNET_MIDI_HPP

// Standard MIDI File reader/writer working on absolute-tick events.
//
// The reader accepts formats 0 and 1 with a ticks-per-quarter division and
// normalizes NoteOn with velocity 0 to NoteOff. Channel messages other than
// notes are consumed and dropped. The writer always emits a single format-0
// track with explicit status bytes (no running status).

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pitchnet/error.hpp"

namespace pitchnet::midi {

using Bytes = std::vector<std::uint8_t>;

inline constexpr std::uint32_t kMaxVlq = (1u << 28) - 1;

enum class EventKind : std::uint8_t { NoteOn, NoteOff, Tempo, EndOfTrack, OtherMeta, SysEx };

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::NoteOn: return "NoteOn";
    case EventKind::NoteOff: return "NoteOff";
    case EventKind::Tempo: return "Tempo";
    case EventKind::EndOfTrack: return "EndOfTrack";
    case EventKind::OtherMeta: return "OtherMeta";
    case EventKind::SysEx: return "SysEx";
  }
  return "?";
}

struct MidiEvent {
  std::uint64_t tick = 0;
  EventKind kind = EventKind::OtherMeta;
  std::uint8_t channel = 0;
  std::uint8_t key = 0;
  std::uint8_t velocity = 0;
  std::uint32_t tempo_us_per_quarter = 0;
  // Meta type byte for OtherMeta; 0xF0 or 0xF7 for SysEx.
  std::uint8_t meta_type = 0;
  Bytes raw_payload{};

  bool operator==(const MidiEvent&) const = default;

  static MidiEvent note_on(std::uint64_t tick, std::uint8_t key, std::uint8_t velocity, std::uint8_t channel = 0) {
    return {.tick = tick, .kind = EventKind::NoteOn, .channel = channel, .key = key, .velocity = velocity};
  }
  static MidiEvent note_off(std::uint64_t tick, std::uint8_t key, std::uint8_t velocity = 0, std::uint8_t channel = 0) {
    return {.tick = tick, .kind = EventKind::NoteOff, .channel = channel, .key = key, .velocity = velocity};
  }
  static MidiEvent tempo(std::uint64_t tick, std::uint32_t us_per_quarter) {
    return {.tick = tick, .kind = EventKind::Tempo, .tempo_us_per_quarter = us_per_quarter};
  }
  static MidiEvent end_of_track(std::uint64_t tick) { return {.tick = tick, .kind = EventKind::EndOfTrack}; }

  bool is_note() const { return kind == EventKind::NoteOn || kind == EventKind::NoteOff; }
};

struct MidiTrack {
  std::vector<MidiEvent> events;
  bool operator==(const MidiTrack&) const = default;
};

struct MidiFile {
  std::uint16_t format = 0;
  std::uint16_t division = 480;
  std::vector<MidiTrack> tracks;
  bool operator==(const MidiFile&) const = default;
};

// ---------------------------------------------------------------------------
// Variable-length quantities

/// Decodes one VLQ starting at `offset`; returns the value and the index past it.
inline std::pair<std::uint32_t, std::size_t> decode_vlq(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint32_t value = 0;
  for (int n = 0; n < 4; ++n) {
    if (offset >= bytes.size()) fail(ErrorCode::TruncatedInput, "VLQ runs past end of input");
    const std::uint8_t b = bytes[offset++];
    value = (value << 7) | (b & 0x7Fu);
    if (!(b & 0x80u)) return {value, offset};
  }
  fail(ErrorCode::UnterminatedVlq, "VLQ has no terminating byte within 4 bytes");
}

inline Bytes encode_vlq(std::uint32_t value) {
  if (value > kMaxVlq) fail(ErrorCode::ValueTooLarge, "VLQ value exceeds 2^28-1: " + std::to_string(value));
  std::uint8_t buf[4];
  int n = 0;
  buf[n++] = value & 0x7F;
  while (value >>= 7) buf[n++] = static_cast<std::uint8_t>((value & 0x7F) | 0x80);
  Bytes out;
  while (n > 0) out.push_back(buf[--n]);
  return out;
}

// ---------------------------------------------------------------------------
// Reader

namespace detail {

inline std::uint32_t be32(std::span<const std::uint8_t> b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) | b[at + 3];
}
inline std::uint16_t be16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>((b[at] << 8) | b[at + 1]);
}

// Reads a VLQ confined to one chunk; running off the chunk is a truncated chunk.
inline std::pair<std::uint32_t, std::size_t> chunk_vlq(std::span<const std::uint8_t> chunk, std::size_t pos) {
  try {
    return decode_vlq(chunk, pos);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::TruncatedInput) fail(ErrorCode::TruncatedChunk, "VLQ crosses end of track chunk");
    throw;
  }
}

inline std::uint8_t channel_data_len(std::uint8_t status) {
  const std::uint8_t hi = status & 0xF0;
  return (hi == 0xC0 || hi == 0xD0) ? 1 : 2;
}

inline MidiTrack parse_track(std::span<const std::uint8_t> chunk) {
  MidiTrack track;
  std::uint64_t tick = 0;
  std::uint8_t running = 0;
  std::size_t pos = 0;
  auto need = [&](std::size_t n) {
    if (pos + n > chunk.size()) fail(ErrorCode::TruncatedChunk, "event runs past end of track chunk");
  };

  while (pos < chunk.size()) {
    auto [delta, next] = chunk_vlq(chunk, pos);
    pos = next;
    tick += delta;
    need(1);
    std::uint8_t status = chunk[pos];

    if (status == 0xFF) {
      need(2);
      const std::uint8_t type = chunk[pos + 1];
      auto [len, body] = chunk_vlq(chunk, pos + 2);
      pos = body;
      need(len);
      auto payload = chunk.subspan(pos, len);
      pos += len;
      running = 0;
      if (type == 0x2F) {
        track.events.push_back(MidiEvent::end_of_track(tick));
        return track;
      }
      if (type == 0x51 && len == 3) {
        track.events.push_back(MidiEvent::tempo(tick, (std::uint32_t{payload[0]} << 16) | (payload[1] << 8) | payload[2]));
      } else {
        MidiEvent ev{.tick = tick, .kind = EventKind::OtherMeta, .meta_type = type};
        ev.raw_payload.assign(payload.begin(), payload.end());
        track.events.push_back(std::move(ev));
      }
      continue;
    }

    if (status == 0xF0 || status == 0xF7) {
      auto [len, body] = chunk_vlq(chunk, pos + 1);
      pos = body;
      need(len);
      MidiEvent ev{.tick = tick, .kind = EventKind::SysEx, .meta_type = status};
      ev.raw_payload.assign(chunk.begin() + static_cast<std::ptrdiff_t>(pos),
                            chunk.begin() + static_cast<std::ptrdiff_t>(pos + len));
      pos += len;
      running = 0;
      track.events.push_back(std::move(ev));
      continue;
    }

    if (status & 0x80) {
      if (status >= 0xF0) fail(ErrorCode::MalformedEvent, "system common/real-time byte in track data");
      running = status;
      ++pos;
    } else if (running == 0) {
      fail(ErrorCode::DanglingRunningStatus, "data byte without an established running status");
    } else {
      status = running;
    }

    const std::uint8_t len = channel_data_len(status);
    need(len);
    const std::uint8_t d1 = chunk[pos] & 0x7F;
    const std::uint8_t d2 = len == 2 ? chunk[pos + 1] & 0x7F : 0;
    pos += len;
    const std::uint8_t channel = status & 0x0F;
    switch (status & 0xF0) {
      case 0x90:
        track.events.push_back(d2 == 0 ? MidiEvent::note_off(tick, d1, 0, channel)
                                       : MidiEvent::note_on(tick, d1, d2, channel));
        break;
      case 0x80:
        track.events.push_back(MidiEvent::note_off(tick, d1, d2, channel));
        break;
      default:
        break;  // control/program/pressure/pitch-bend are not modelled
    }
  }

  // Tolerate a missing End-of-Track by synthesizing one.
  track.events.push_back(MidiEvent::end_of_track(tick));
  return track;
}

}  // namespace detail

inline MidiFile parse_midi(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 14 || !std::equal(bytes.begin(), bytes.begin() + 4, "MThd")) {
    fail(ErrorCode::BadHeader, "missing MThd header chunk");
  }
  const std::uint32_t header_len = detail::be32(bytes, 4);
  if (header_len < 6) fail(ErrorCode::BadHeader, "MThd chunk shorter than 6 bytes");
  if (8 + std::uint64_t{header_len} > bytes.size()) fail(ErrorCode::TruncatedChunk, "MThd chunk truncated");

  MidiFile file;
  file.format = detail::be16(bytes, 8);
  const std::uint16_t ntracks = detail::be16(bytes, 10);
  const std::uint16_t division = detail::be16(bytes, 12);
  if (file.format > 1) fail(ErrorCode::UnsupportedFormat, "SMF format " + std::to_string(file.format) + " not supported");
  if (division & 0x8000) fail(ErrorCode::UnsupportedFormat, "SMPTE time division not supported");
  if (division == 0) fail(ErrorCode::BadHeader, "division must be positive");
  if (file.format == 0 && ntracks != 1) fail(ErrorCode::BadHeader, "format 0 requires exactly one track");
  file.division = division;

  std::size_t pos = 8 + header_len;
  while (file.tracks.size() < ntracks) {
    if (pos + 8 > bytes.size()) fail(ErrorCode::TruncatedChunk, "expected more track chunks");
    const std::uint32_t len = detail::be32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (body + std::uint64_t{len} > bytes.size()) fail(ErrorCode::TruncatedChunk, "chunk length exceeds file size");
    if (std::equal(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.begin() + static_cast<std::ptrdiff_t>(pos + 4), "MTrk")) {
      file.tracks.push_back(detail::parse_track(bytes.subspan(body, len)));
    }
    pos = body + len;
  }
  return file;
}

// ---------------------------------------------------------------------------
// Writer

namespace detail {

// Same-tick ordering: meta/sysex, NoteOff, NoteOn, End-of-Track.
inline int tie_rank(EventKind k) {
  switch (k) {
    case EventKind::NoteOff: return 1;
    case EventKind::NoteOn: return 2;
    case EventKind::EndOfTrack: return 3;
    default: return 0;
  }
}

inline void put_be32(Bytes& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}
inline void put_be16(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}
inline void append(Bytes& out, const Bytes& more) { out.insert(out.end(), more.begin(), more.end()); }

}  // namespace detail

/// Canonical event order used by the writer: ticks ascending; at equal ticks
/// meta/sysex first, then NoteOff, then NoteOn, notes by ascending key.
/// The sort is stable, so other ties keep their input order.
inline void sort_events(std::vector<MidiEvent>& events) {
  std::stable_sort(events.begin(), events.end(), [](const MidiEvent& a, const MidiEvent& b) {
    if (a.tick != b.tick) return a.tick < b.tick;
    const int ra = detail::tie_rank(a.kind), rb = detail::tie_rank(b.kind);
    if (ra != rb) return ra < rb;
    if (a.is_note()) return a.key < b.key;
    return false;
  });
}

/// Serializes `file` as a format-0 SMF. Tracks are merged; each input track
/// must already be in non-decreasing tick order.
inline Bytes write_midi(const MidiFile& file) {
  if (file.division == 0 || (file.division & 0x8000)) fail(ErrorCode::UnsupportedFormat, "division must be ticks-per-quarter");

  std::vector<MidiEvent> events;
  std::uint64_t end_tick = 0;
  for (const auto& track : file.tracks) {
    std::uint64_t prev = 0;
    for (const auto& ev : track.events) {
      if (ev.tick < prev) fail(ErrorCode::NegativeDelta, "track events out of tick order at tick " + std::to_string(ev.tick));
      prev = ev.tick;
      end_tick = std::max(end_tick, ev.tick);
      if (ev.kind != EventKind::EndOfTrack) events.push_back(ev);
    }
  }
  sort_events(events);

  Bytes body;
  std::uint64_t last = 0;
  auto put_delta = [&](std::uint64_t tick) {
    const std::uint64_t delta = tick - last;
    if (delta > kMaxVlq) fail(ErrorCode::ValueTooLarge, "delta time exceeds VLQ range");
    detail::append(body, encode_vlq(static_cast<std::uint32_t>(delta)));
    last = tick;
  };

  for (const auto& ev : events) {
    put_delta(ev.tick);
    switch (ev.kind) {
      case EventKind::NoteOn:
      case EventKind::NoteOff:
        body.push_back(static_cast<std::uint8_t>((ev.kind == EventKind::NoteOn ? 0x90 : 0x80) | (ev.channel & 0x0F)));
        body.push_back(ev.key & 0x7F);
        body.push_back(ev.velocity & 0x7F);
        break;
      case EventKind::Tempo:
        body.insert(body.end(), {0xFF, 0x51, 0x03, static_cast<std::uint8_t>(ev.tempo_us_per_quarter >> 16),
                                 static_cast<std::uint8_t>(ev.tempo_us_per_quarter >> 8),
                                 static_cast<std::uint8_t>(ev.tempo_us_per_quarter)});
        break;
      case EventKind::OtherMeta:
        body.push_back(0xFF);
        body.push_back(ev.meta_type);
        detail::append(body, encode_vlq(static_cast<std::uint32_t>(ev.raw_payload.size())));
        detail::append(body, ev.raw_payload);
        break;
      case EventKind::SysEx:
        body.push_back(ev.meta_type == 0xF7 ? 0xF7 : 0xF0);
        detail::append(body, encode_vlq(static_cast<std::uint32_t>(ev.raw_payload.size())));
        detail::append(body, ev.raw_payload);
        break;
      case EventKind::EndOfTrack:
        break;
    }
  }
  put_delta(end_tick);
  body.insert(body.end(), {0xFF, 0x2F, 0x00});

  Bytes out{'M', 'T', 'h', 'd'};
  detail::put_be32(out, 6);
  detail::put_be16(out, 0);
  detail::put_be16(out, 1);
  detail::put_be16(out, file.division);
  out.insert(out.end(), {'M', 'T', 'r', 'k'});
  detail::put_be32(out, static_cast<std::uint32_t>(body.size()));
  detail::append(out, body);
  return out;
}

// ---------------------------------------------------------------------------
// Human-readable listing

inline std::string dump(const MidiFile& file) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "format %u division %u tracks %zu\n", unsigned{file.format}, unsigned{file.division},
                file.tracks.size());
  out += line;
  for (std::size_t t = 0; t < file.tracks.size(); ++t) {
    const auto& events = file.tracks[t].events;
    std::snprintf(line, sizeof line, "track %zu events %zu\n", t, events.size());
    out += line;
    for (const auto& ev : events) {
      std::snprintf(line, sizeof line, "  %8llu %-10s", static_cast<unsigned long long>(ev.tick), to_string(ev.kind));
      out += line;
      switch (ev.kind) {
        case EventKind::NoteOn:
        case EventKind::NoteOff:
          std::snprintf(line, sizeof line, " ch=%u key=%u vel=%u", unsigned{ev.channel}, unsigned{ev.key}, unsigned{ev.velocity});
          out += line;
          break;
        case EventKind::Tempo:
          std::snprintf(line, sizeof line, " us_per_quarter=%u", ev.tempo_us_per_quarter);
          out += line;
          break;
        case EventKind::OtherMeta:
        case EventKind::SysEx:
          std::snprintf(line, sizeof line, " type=0x%02X len=%zu data=", unsigned{ev.meta_type}, ev.raw_payload.size());
          out += line;
          for (auto b : ev.raw_payload) {
            std::snprintf(line, sizeof line, "%02X", unsigned{b});
            out += line;
          }
          break;
        case EventKind::EndOfTrack:
          break;
      }
      out += '\n';
    }
  }
  return out;
}

}  // namespace pitchnet::midi

#endif  // PITCHNET_MIDI_HPP
