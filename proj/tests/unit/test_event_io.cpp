#include "doctest.h"

#include <sstream>

#include "sdapd/errors.hpp"
#include "sdapd/event_io.hpp"

using namespace sdapd;

namespace {

EventStream sample() {
  EventStream s;
  s.tag_resolution_ps = 100;
  s.events = {{0, 0, Cause::photon}, {2, 300, Cause::dark}, {1LL << 40, 900, Cause::afterpulse},
              {(1LL << 40) + 7, 100, Cause::unlabeled}};
  return s;
}

}  // namespace

TEST_CASE("binary event round trip and layout") {
  std::stringstream buf;
  write_events(buf, sample(), EventFormat::binary);
  const std::string bytes = buf.str();
  CHECK(bytes.size() == 16 + 13 * 4);
  CHECK(bytes.substr(0, 8) == "SDEVENT1");
  // Second record: gate 2, time 3 units, cause dark; little-endian.
  const auto* rec = reinterpret_cast<const unsigned char*>(bytes.data()) + 16 + 13;
  CHECK(rec[0] == 2);
  CHECK(rec[8] == 3);
  CHECK(rec[12] == 1);
  const auto back = read_events(buf);
  CHECK(back.tag_resolution_ps == 100);
  CHECK(back.events == sample().events);
}

TEST_CASE("text event round trip") {
  std::stringstream buf;
  write_events(buf, sample(), EventFormat::text);
  CHECK(buf.str().rfind("# sdapd-events v1 tag_resolution_ps=100\n0,0,photon\n2,300,dark\n", 0) == 0);
  CHECK(read_events(buf).events == sample().events);
}

TEST_CASE("empty streams round trip") {
  for (auto f : {EventFormat::binary, EventFormat::text}) {
    std::stringstream buf;
    write_events(buf, EventStream{}, f);
    CHECK(read_events(buf).events.empty());
  }
}

TEST_CASE("streaming writer matches the bulk writer") {
  std::stringstream a, b;
  write_events(a, sample(), EventFormat::binary);
  EventWriter w(b, EventFormat::binary, 100);
  for (const auto& ev : sample().events) w.write(ev);
  CHECK(w.written() == 4);
  CHECK(a.str() == b.str());
}

TEST_CASE("corrupt event input is an I/O error") {
  std::stringstream buf;
  write_events(buf, sample(), EventFormat::binary);
  std::string bytes = buf.str();
  std::stringstream truncated(bytes.substr(0, bytes.size() - 5));
  CHECK_THROWS_AS(read_events(truncated), IoError);
  std::stringstream magic("XXEVENT1" + bytes.substr(8));
  CHECK_THROWS_AS(read_events(magic), IoError);
  std::stringstream text("# sdapd-events v1 tag_resolution_ps=100\n1,abc,photon\n");
  CHECK_THROWS_AS(read_events(text), IoError);
  std::stringstream cause("# sdapd-events v1 tag_resolution_ps=100\n1,100,cosmic\n");
  CHECK_THROWS_AS(read_events(cause), IoError);
  CHECK_THROWS_AS(read_events_file("/nonexistent/events.bin"), IoError);
}

TEST_CASE("run summary text round trip") {
  RunSummary s;
  s.gates_simulated = 1000000;
  s.counts = {10, 20, 3};
  s.photon_chain_afterpulses = 2;
  s.total_charge_c = 1.25e-12;
  s.simulated_time_s = 1e-3;
  CHECK(run_summary_from_text(to_text(s)) == s);
}
