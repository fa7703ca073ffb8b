#include "sdapd/event_io.hpp"

#include <array>
#include <charconv>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "sdapd/config.hpp"
#include "sdapd/errors.hpp"

namespace sdapd {
namespace {

constexpr char kMagic[8] = {'S', 'D', 'E', 'V', 'E', 'N', 'T', '1'};
constexpr std::uint32_t kRecordSize = 13;
constexpr std::string_view kTextHeader = "# sdapd-events v1 tag_resolution_ps=";

template <typename T>
void put_le(char* dst, T value) {
  auto u = static_cast<std::make_unsigned_t<T>>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) dst[i] = static_cast<char>((u >> (8 * i)) & 0xFF);
}

template <typename T>
T get_le(const char* src) {
  std::make_unsigned_t<T> u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    u |= static_cast<std::make_unsigned_t<T>>(static_cast<unsigned char>(src[i])) << (8 * i);
  }
  return static_cast<T>(u);
}

Cause cause_from_byte(std::uint8_t b) {
  if (b > static_cast<std::uint8_t>(Cause::unlabeled)) throw IoError("invalid cause byte " + std::to_string(b));
  return static_cast<Cause>(b);
}

EventStream read_binary(std::istream& in) {
  std::array<char, 16> header{};
  if (!in.read(header.data(), header.size())) throw IoError("truncated event file header");
  if (std::memcmp(header.data(), kMagic, sizeof kMagic) != 0) throw IoError("bad event file magic");
  EventStream stream;
  stream.tag_resolution_ps = get_le<std::uint32_t>(header.data() + 8);
  if (get_le<std::uint32_t>(header.data() + 12) != kRecordSize) throw IoError("unsupported record size");
  if (stream.tag_resolution_ps == 0) throw IoError("zero tag resolution in event file");
  std::array<char, kRecordSize> rec{};
  while (in.read(rec.data(), rec.size())) {
    DetectionEvent ev;
    ev.gate_index = get_le<std::int64_t>(rec.data());
    ev.t_in_gate_ps = get_le<std::uint32_t>(rec.data() + 8) * stream.tag_resolution_ps;
    ev.cause = cause_from_byte(static_cast<std::uint8_t>(rec[12]));
    stream.events.push_back(ev);
  }
  if (in.gcount() != 0) throw IoError("truncated event record");
  return stream;
}

EventStream read_text(std::istream& in) {
  EventStream stream;
  std::string line;
  int line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (line.rfind(kTextHeader, 0) == 0) {
        std::string_view v(line);
        v.remove_prefix(kTextHeader.size());
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), stream.tag_resolution_ps);
        if (ec != std::errc() || stream.tag_resolution_ps == 0) {
          throw IoError("line " + std::to_string(line_no) + ": bad tag resolution");
        }
        have_header = true;
      }
      continue;
    }
    std::string_view rest(line);
    auto c1 = rest.find(',');
    auto c2 = c1 == std::string_view::npos ? c1 : rest.find(',', c1 + 1);
    if (c2 == std::string_view::npos) {
      throw IoError("line " + std::to_string(line_no) + ": expected gate_index,t_ps,cause");
    }
    DetectionEvent ev;
    auto r1 = std::from_chars(rest.data(), rest.data() + c1, ev.gate_index);
    auto r2 = std::from_chars(rest.data() + c1 + 1, rest.data() + c2, ev.t_in_gate_ps);
    if (r1.ec != std::errc() || r1.ptr != rest.data() + c1 || r2.ec != std::errc() ||
        r2.ptr != rest.data() + c2) {
      throw IoError("line " + std::to_string(line_no) + ": malformed number");
    }
    try {
      ev.cause = cause_from_string(rest.substr(c2 + 1));
    } catch (const DomainError& e) {
      throw IoError("line " + std::to_string(line_no) + ": " + e.what());
    }
    stream.events.push_back(ev);
  }
  if (!have_header) throw IoError("text event file lacks the '# sdapd-events' header");
  return stream;
}

}  // namespace

EventFormat event_format_from_string(std::string_view text) {
  if (text == "binary" || text == "bin") return EventFormat::binary;
  if (text == "text" || text == "csv") return EventFormat::text;
  throw ConfigError("unknown event format '" + std::string(text) + "'");
}

EventWriter::EventWriter(std::ostream& out, EventFormat format, std::uint32_t tag_resolution_ps)
    : out_(out), format_(format), resolution_(tag_resolution_ps) {
  if (resolution_ == 0) throw DomainError("tag resolution must be positive");
  if (format_ == EventFormat::binary) {
    char header[16];
    std::memcpy(header, kMagic, sizeof kMagic);
    put_le<std::uint32_t>(header + 8, resolution_);
    put_le<std::uint32_t>(header + 12, kRecordSize);
    out_.write(header, sizeof header);
  } else {
    out_ << kTextHeader << resolution_ << '\n';
  }
}

void EventWriter::write(const DetectionEvent& ev) {
  if (ev.t_in_gate_ps % resolution_ != 0) {
    throw DomainError("event time is not a multiple of the tag resolution");
  }
  if (format_ == EventFormat::binary) {
    char rec[kRecordSize];
    put_le<std::int64_t>(rec, ev.gate_index);
    put_le<std::uint32_t>(rec + 8, ev.t_in_gate_ps / resolution_);
    rec[12] = static_cast<char>(static_cast<std::uint8_t>(ev.cause));
    out_.write(rec, sizeof rec);
  } else {
    out_ << ev.gate_index << ',' << ev.t_in_gate_ps << ',' << to_string(ev.cause) << '\n';
  }
  ++written_;
}

void write_events(std::ostream& out, const EventStream& stream, EventFormat format) {
  EventWriter writer(out, format, stream.tag_resolution_ps);
  for (const auto& ev : stream.events) writer.write(ev);
}

void write_events_file(const std::string& path, const EventStream& stream, EventFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  write_events(out, stream, format);
  if (!out) throw IoError("write failed for " + path);
}

EventStream read_events(std::istream& in) {
  char first[8] = {};
  in.read(first, sizeof first);
  const auto got = in.gcount();
  in.clear();
  in.seekg(0);
  if (got == sizeof first && std::memcmp(first, kMagic, sizeof kMagic) == 0) return read_binary(in);
  return read_text(in);
}

EventStream read_events_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return read_events(in);
}

std::string to_text(const RunSummary& s) {
  std::ostringstream os;
  os << "gates_simulated = " << s.gates_simulated << '\n'
     << "illuminated_gates = " << s.illuminated_gates << '\n'
     << "suppressed_gates = " << s.suppressed_gates << '\n'
     << "photon_events = " << s.counts[0] << '\n'
     << "dark_events = " << s.counts[1] << '\n'
     << "afterpulse_events = " << s.counts[2] << '\n'
     << "photon_chain_afterpulses = " << s.photon_chain_afterpulses << '\n'
     << "traps_filled = " << s.traps_filled << '\n'
     << "total_charge_c = " << format_double(s.total_charge_c) << '\n'
     << "simulated_time_s = " << format_double(s.simulated_time_s) << '\n';
  return os.str();
}

RunSummary run_summary_from_text(std::string_view text) {
  auto doc = KeyValueDocument::parse(text);
  const auto& sec = doc.section_or_empty("");
  auto req_int = [&](std::string_view key) {
    auto v = sec.get_int(key);
    if (!v) throw ConfigError("run summary lacks '" + std::string(key) + "'");
    return *v;
  };
  RunSummary s;
  s.gates_simulated = req_int("gates_simulated");
  s.illuminated_gates = req_int("illuminated_gates");
  s.suppressed_gates = req_int("suppressed_gates");
  s.counts[0] = req_int("photon_events");
  s.counts[1] = req_int("dark_events");
  s.counts[2] = req_int("afterpulse_events");
  s.photon_chain_afterpulses = req_int("photon_chain_afterpulses");
  s.traps_filled = req_int("traps_filled");
  s.total_charge_c = sec.get_double("total_charge_c").value_or(0.0);
  s.simulated_time_s = sec.get_double("simulated_time_s").value_or(0.0);
  doc.reject_unused();
  return s;
}

}  // namespace sdapd
