#include <doctest.h>

#include <filesystem>
#include <map>
#include <sstream>

#include "support/fs.hpp"
#include "support/oracles.hpp"
#include "support/random_scenarios.hpp"
#include "support/trace_helpers.hpp"
#include "vigil/sim_engine.hpp"

using namespace vigil;
using namespace vigil::testing;
namespace fs = std::filesystem;

namespace {

ScenarioScript load(const std::string& name) {
  const auto r = parse_scenario(read_file(scenario_path(name)));
  REQUIRE(r.ok());
  return *r.script;
}

// Stream whose buffer refuses writes past a byte budget.
class LimitedBuf : public std::streambuf {
 public:
  explicit LimitedBuf(std::size_t budget) : budget_(budget) {}

 protected:
  int_type overflow(int_type ch) override {
    if (traits_type::eq_int_type(ch, traits_type::eof())) return traits_type::not_eof(ch);
    if (used_ >= budget_) return traits_type::eof();
    ++used_;
    return ch;
  }
  std::streamsize xsputn(const char*, std::streamsize n) override {
    const auto room = static_cast<std::streamsize>(budget_ - used_);
    const auto take = std::min(room, n);
    used_ += static_cast<std::size_t>(take);
    return take;
  }

 private:
  std::size_t budget_;
  std::size_t used_ = 0;
};

void check_trace_invariants(const Trace& trace, const ControllerConfig& cfg) {
  std::map<std::uint16_t, TimeMs> sent;
  std::map<std::uint16_t, int> resolved;
  TimeMs prev_t = 0;
  std::optional<TimeMs> ramp_start;
  double prev_speed = -1.0;
  for (const auto& r : trace.records) {
    CHECK(r.t_ms >= prev_t);
    prev_t = r.t_ms;
    CHECK_FALSE((r.red && r.green));
    CHECK(r.green == (r.phase == Phase::NORMAL));
    CHECK(r.speed >= 0.0);
    CHECK(r.speed <= 255.0);
    if (r.phase == Phase::STOPPED) CHECK(r.speed == 0.0);
    if (r.phase == Phase::RAMP_DOWN) {
      if (prev_speed >= 0.0) CHECK(r.speed <= prev_speed);
      prev_speed = r.speed;
    } else {
      prev_speed = -1.0;
    }
    if (r.kind == RecordKind::PHASE_CHANGE && r.phase == Phase::RAMP_DOWN) ramp_start = r.t_ms;
    if (r.kind == RecordKind::PHASE_CHANGE && r.phase == Phase::STOPPED) {
      REQUIRE(ramp_start.has_value());
      CHECK(r.t_ms - *ramp_start == cfg.stop_duration_ms());
    }
    if (r.kind == RecordKind::ALERT_SENT) {
      REQUIRE(r.seq.has_value());
      CHECK(sent.find(*r.seq) == sent.end());
      sent[*r.seq] = r.t_ms;
    }
    if (r.kind == RecordKind::ALERT_DELIVERED || r.kind == RecordKind::ALERT_LOST) {
      REQUIRE(r.seq.has_value());
      REQUIRE(sent.count(*r.seq) == 1);
      CHECK(r.t_ms > sent[*r.seq]);
      ++resolved[*r.seq];
    }
  }
  for (const auto& [seq, n] : resolved) CHECK(n == 1);
}

}  // namespace

TEST_CASE("normal drive stays NORMAL with a 2 s status cadence") {
  const auto trace = run(load("normal.vgl"), {}, {});
  CHECK(records_of(trace, RecordKind::PHASE_CHANGE).empty());
  for (const auto& r : trace.records) CHECK(r.phase == Phase::NORMAL);
  const auto sent = records_of(trace, RecordKind::ALERT_SENT);
  REQUIRE(sent.size() == 15);
  for (std::size_t i = 0; i < sent.size(); ++i) {
    CHECK(sent[i]->code == AlertCode::STATUS_EYES_OPEN);
    CHECK(sent[i]->t_ms == static_cast<TimeMs>(2000 * i));
  }
}

TEST_CASE("about to sleep escalates at 5, 7 and 9 s and stops at 21.5 s") {
  const auto trace = run(load("about_to_sleep.vgl"), {}, {});
  CHECK(phase_entered(trace, Phase::EYE_SUSPECT) == 5000);
  CHECK(phase_entered(trace, Phase::EYE_WARNING) == 7000);
  CHECK(phase_entered(trace, Phase::RAMP_DOWN) == 9000);
  CHECK(phase_entered(trace, Phase::STOPPED) == 21500);

  const auto sent = records_of(trace, RecordKind::ALERT_SENT);
  std::vector<std::pair<TimeMs, AlertCode>> got;
  for (const auto* r : sent) got.emplace_back(r->t_ms, *r->code);
  const std::vector<std::pair<TimeMs, AlertCode>> expected = {
      {0, AlertCode::STATUS_EYES_OPEN},      {2000, AlertCode::STATUS_EYES_OPEN},
      {4000, AlertCode::STATUS_EYES_OPEN},   {5000, AlertCode::ALERT_EYES_CLOSED},
      {7000, AlertCode::ALERT_DROWSY},       {9000, AlertCode::ALERT_URGENT_SLEEP},
      {21500, AlertCode::MOTOR_STOPPED}};
  CHECK(got == expected);

  const auto& last = trace.records.back();
  CHECK(last.phase == Phase::STOPPED);
  CHECK(last.speed == 0.0);
}

TEST_CASE("persistent alcohol ramps 20 s after detection") {
  const auto trace = run(load("drunk.vgl"), {}, {});
  CHECK(phase_entered(trace, Phase::ALCOHOL_WARNING) == 2000);
  CHECK(phase_entered(trace, Phase::RAMP_DOWN) == 22000);
  CHECK(phase_entered(trace, Phase::STOPPED) == 34500);
  for (const auto& r : trace.records) {
    if (r.t_ms > 2000) {
      CHECK(r.alarm);
      CHECK(r.red);
    }
    CHECK_FALSE(r.vibration);
  }
}

TEST_CASE("alcohol during an eye escalation takes over") {
  const auto trace = run(load("alcohol_preempts_eyes.vgl"), {}, {});
  CHECK(phase_entered(trace, Phase::EYE_SUSPECT) == 3000);
  CHECK(phase_entered(trace, Phase::EYE_WARNING) == 5000);
  CHECK(phase_entered(trace, Phase::ALCOHOL_WARNING) == 6000);
  CHECK(phase_entered(trace, Phase::RAMP_DOWN) == 26000);
  CHECK(phase_entered(trace, Phase::STOPPED) == 38500);
  for (const auto& r : trace.records) {
    if (r.t_ms > 6000) CHECK_FALSE(r.vibration);
  }
}

TEST_CASE("raw 400 never triggers") {
  const auto trace = run(load("threshold_edge.vgl"), {}, {});
  CHECK(records_of(trace, RecordKind::PHASE_CHANGE).empty());
  bool saw_400 = false;
  for (const auto* s : records_of(trace, RecordKind::SAMPLE)) saw_400 = saw_400 || s->alcohol_raw == 400;
  CHECK(saw_400);
}

TEST_CASE("a short blink never vibrates and is cleared by 7 s") {
  const auto trace = run(load("blink.vgl"), {}, {});
  for (const auto& r : trace.records) CHECK_FALSE(r.vibration);
  const auto changes = records_of(trace, RecordKind::PHASE_CHANGE);
  REQUIRE(changes.size() == 2);
  CHECK(changes[0]->phase == Phase::EYE_SUSPECT);
  CHECK(changes[1]->phase == Phase::NORMAL);
  CHECK(changes[1]->t_ms <= 7000);
}

TEST_CASE("scripted runs match the literal polling loop") {
  const ControllerConfig cfg;
  for (const std::string name : {"about_to_sleep.vgl", "drunk.vgl", "blink.vgl", "sleepy.vgl", "normal.vgl",
                           "threshold_edge.vgl", "sobered.vgl"}) {
    CAPTURE(name);
    const auto script = load(name);
    LoopInputs in{[&](TimeMs t) { return mq3_raw(ground_truth_at_ms(script, t).ppm); },
                  [&](TimeMs t) { return ground_truth_at_ms(script, t).eyes_closed; }};
    const auto ref = literal_loop(in, cfg.alcohol_threshold, cfg.alcohol_recheck_ms(), cfg.eye_recheck_ms(),
                                  cfg.stop_duration_ms(), script.end_ms());
    const auto trace = run(script, cfg, {});
    CHECK(phase_entered(trace, Phase::ALCOHOL_WARNING) == ref.alcohol_warning);
    CHECK(phase_entered(trace, Phase::RAMP_DOWN) == ref.ramp_start);
    CHECK(phase_entered(trace, Phase::STOPPED) == ref.stopped);
    if (!ref.alcohol_warning) {
      CHECK(phase_entered(trace, Phase::EYE_SUSPECT) == ref.first_eye_alert);
      CHECK(phase_entered(trace, Phase::EYE_WARNING) == ref.eye_warning);
    }
  }
}

TEST_CASE("event engine and fixed-step oracle agree on the corpus") {
  for (const auto& entry : fs::directory_iterator(VIGIL_SCENARIO_DIR)) {
    if (entry.path().extension() != ".vgl") continue;
    CAPTURE(entry.path().filename().string());
    const auto script = *parse_scenario(read_file(entry.path())).script;
    const auto a = run(script, {}, {});
    const auto b = oracle_run(script, {}, {});
    const auto mismatch = sequence_mismatch(a, b, 1);
    CHECK_MESSAGE(!mismatch, mismatch.value_or(""));
    CHECK_FALSE(compare_traces(a, b, 1).has_value());
  }
}

TEST_CASE("event engine and fixed-step oracle agree on random scripts") {
  for (std::uint64_t seed = 1000; seed < 1040; ++seed) {
    CAPTURE(seed);
    const auto c = random_case(seed, seed % 3 == 0);
    const auto a = run(c.script, c.controller, c.channel);
    const auto b = oracle_run(c.script, c.controller, c.channel);
    const auto mismatch = sequence_mismatch(a, b, 1);
    CHECK_MESSAGE(!mismatch, mismatch.value_or(""));
    CHECK(a.transcript == b.transcript);
  }
}

TEST_CASE("trace invariants over random scripts") {
  for (std::uint64_t seed = 1; seed <= 150; ++seed) {
    CAPTURE(seed);
    const auto c = random_case(seed, seed % 2 == 0);
    check_trace_invariants(run(c.script, c.controller, c.channel), c.controller);
  }
}

TEST_CASE("runs are deterministic") {
  const auto script = load("noisy_cabin.vgl");
  ChannelConfig ch;
  ch.bit_error_rate = 0.01;
  ch.seed = 42;
  CHECK(run(script, {}, ch) == run(script, {}, ch));
  std::ostringstream a, b;
  export_trace(run(script, {}, ch), TraceFormat::JSONL, a);
  export_trace(run(script, {}, ch), TraceFormat::JSONL, b);
  CHECK(a.str() == b.str());
}

TEST_CASE("the channel seed only affects the channel") {
  const auto script = load("normal.vgl");
  ChannelConfig a, b;
  a.bit_error_rate = b.bit_error_rate = 0.003;
  a.seed = 1;
  b.seed = 2;
  const auto ta = run(script, {}, a);
  const auto tb = run(script, {}, b);
  CHECK(records_of(ta, RecordKind::SAMPLE).size() == records_of(tb, RecordKind::SAMPLE).size());
  CHECK_FALSE(ta.transcript == tb.transcript);
}

TEST_CASE("stop duration override moves the stop time") {
  ControllerConfig cfg;
  cfg.stop_duration = 10.0;
  CHECK(phase_entered(run(load("about_to_sleep.vgl"), cfg, {}), Phase::STOPPED) == 19000);
  cfg.stop_duration = 15.0;
  CHECK(phase_entered(run(load("about_to_sleep.vgl"), cfg, {}), Phase::STOPPED) == 24000);
  cfg.stop_duration = 16.0;
  CHECK_THROWS_AS(run(load("about_to_sleep.vgl"), cfg, {}), ConfigError);
}

TEST_CASE("deliveries are recorded at the next whole millisecond after arrival") {
  const auto trace = run(load("about_to_sleep.vgl"), {}, {});
  const auto sent = records_of(trace, RecordKind::ALERT_SENT);
  const auto delivered = records_of(trace, RecordKind::ALERT_DELIVERED);
  REQUIRE(delivered.size() == sent.size());
  // The first frame goes out on an idle link.
  const auto bytes = encode_frame(AlertMessage{0, 0, AlertCode::STATUS_EYES_OPEN, "eyes open"}).size();
  const double arrival = fixed_step_delivery_ms(bytes, 960.0, 3.0);
  CHECK(delivered[0]->t_ms == static_cast<TimeMs>(std::ceil(arrival - 1e-6)));
  CHECK(delivered[0]->retries == 0);
}

TEST_CASE("a lossy link records losses") {
  ChannelConfig ch;
  ch.bit_error_rate = 1.0;
  const auto trace = run(load("about_to_sleep.vgl"), {}, ch);
  CHECK(records_of(trace, RecordKind::ALERT_DELIVERED).empty());
  CHECK(records_of(trace, RecordKind::ALERT_LOST).size() == records_of(trace, RecordKind::ALERT_SENT).size());
  CHECK(phase_entered(trace, Phase::STOPPED) == 21500);
}

TEST_CASE("export formats") {
  SUBCASE("empty trace gives a header-only CSV") {
    std::ostringstream out;
    const auto n = export_trace(Trace{}, TraceFormat::CSV, out);
    CHECK(out.str() == std::string(kCsvHeader) + "\n");
    CHECK(n == out.str().size());
  }
  SUBCASE("empty trace gives empty JSONL") {
    std::ostringstream out;
    CHECK(export_trace(Trace{}, TraceFormat::JSONL, out) == 0);
    CHECK(out.str().empty());
  }
  SUBCASE("CSV final row of the sleep scenario") {
    std::ostringstream out;
    export_trace(run(load("about_to_sleep.vgl"), {}, {}), TraceFormat::CSV, out);
    std::istringstream in(out.str());
    std::string line, last;
    std::getline(in, line);
    CHECK(line == kCsvHeader);
    while (std::getline(in, line)) last = line;
    CHECK(last.find(",STOPPED,0,") != std::string::npos);
  }
  SUBCASE("CSV quoting") {
    TraceRecord r;
    r.kind = RecordKind::ALERT_SENT;
    r.code = AlertCode::MOTOR_RAMP;
    r.detail = "a, \"b\"";
    r.speed = 87.5;
    CHECK(record_to_csv(r) == "0,alert_sent,NORMAL,87.5,0,0,0,0,MOTOR_RAMP,\"a, \"\"b\"\"\"");
  }
  SUBCASE("JSONL round trip") {
    ChannelConfig ch;
    ch.bit_error_rate = 0.01;
    const auto trace = run(load("noisy_cabin.vgl"), {}, ch);
    std::stringstream buf;
    export_trace(trace, TraceFormat::JSONL, buf);
    const auto back = import_trace_jsonl(buf);
    REQUIRE(std::holds_alternative<Trace>(back));
    CHECK(std::get<Trace>(back).records == trace.records);
  }
  SUBCASE("bad JSONL line is reported by number") {
    std::istringstream in(record_to_json(TraceRecord{}) + "\n{\"t_ms\":\"x\"}\n");
    const auto back = import_trace_jsonl(in);
    REQUIRE(std::holds_alternative<TraceParseError>(back));
    CHECK(std::get<TraceParseError>(back).line == 2);
  }
  SUBCASE("a failing sink reports the bytes already written") {
    const auto trace = run(load("about_to_sleep.vgl"), {}, {});
    LimitedBuf buf(500);
    std::ostream sink(&buf);
    try {
      export_trace(trace, TraceFormat::CSV, sink);
      FAIL("expected ExportError");
    } catch (const ExportError& e) {
      CHECK(e.bytes_written <= 500);
      CHECK(e.bytes_written > 0);
    }
  }
}

TEST_CASE("live-style engine handles reset from STOPPED") {
  auto truth = std::make_shared<GroundTruth>();
  truth->ppm = 450;
  EventEngine engine({}, {}, TruthSource{[truth](TimeMs) { return *truth; },
                                         [](TimeMs) { return std::optional<std::size_t>{}; }},
                     std::nullopt);
  engine.advance_to(40000);
  CHECK(engine.core().stopped());
  CHECK(phase_entered(engine.core().trace(), Phase::STOPPED) == 32500);
  const auto pending = engine.next_event_time();
  CHECK((!pending || *pending > 40000));

  truth->ppm = 0;
  REQUIRE(engine.reset(40000));
  CHECK(engine.core().controller().phase.phase == Phase::NORMAL);
  engine.advance_to(45000);
  CHECK(engine.core().controller().phase.phase == Phase::NORMAL);
  CHECK(engine.core().speed_at(45000) == 200.0);
  CHECK_FALSE(engine.reset(45000));
}
