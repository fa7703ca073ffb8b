#pragma once

// Event stream files.
//
// Binary: 16-byte header ("SDEVENT1", u32 tag_resolution_ps, u32 record
// size = 13), then packed little-endian records of i64 gate_index,
// u32 t_in_gate in tag_resolution units, u8 cause.
//
// Text: a "# sdapd-events v1 tag_resolution_ps=N" line, then one
// "gate_index,t_ps,cause" line per event with the cause spelled out.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sdapd/engine.hpp"

namespace sdapd {

enum class EventFormat { binary, text };

EventFormat event_format_from_string(std::string_view text);

struct EventStream {
  std::uint32_t tag_resolution_ps = 100;
  std::vector<DetectionEvent> events;
};

class EventWriter {
 public:
  EventWriter(std::ostream& out, EventFormat format, std::uint32_t tag_resolution_ps);
  void write(const DetectionEvent& ev);
  std::int64_t written() const { return written_; }

 private:
  std::ostream& out_;
  EventFormat format_;
  std::uint32_t resolution_;
  std::int64_t written_ = 0;
};

void write_events(std::ostream& out, const EventStream& stream, EventFormat format);
void write_events_file(const std::string& path, const EventStream& stream, EventFormat format);

// Detects the format from the first bytes. Throws IoError on truncated or
// malformed input.
EventStream read_events(std::istream& in);
EventStream read_events_file(const std::string& path);

std::string to_text(const RunSummary& summary);
RunSummary run_summary_from_text(std::string_view text);

}  // namespace sdapd
