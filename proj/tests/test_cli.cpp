#include <doctest.h>

#include <cstdlib>
#include <sstream>

#include "support/fs.hpp"
#include "vigil/cli.hpp"
#include "vigil/live.hpp"

using namespace vigil;
using namespace vigil::testing;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string scenario(const char* name) { return scenario_path(name).string(); }

}  // namespace

TEST_CASE("run writes the CSV trace") {
  TempDir dir("vigil-cli");
  const auto csv = (dir / "out.csv").string();
  const auto r = cli({"run", scenario("normal.vgl"), "--csv", csv});
  CHECK(r.code == kExitOk);
  const auto text = read_file(csv);
  CHECK(text.rfind(std::string(kCsvHeader) + "\n", 0) == 0);
  CHECK(text.size() > std::string(kCsvHeader).size() + 1);
}

TEST_CASE("run --oracle agrees on every corpus script") {
  for (const char* name : {"about_to_sleep.vgl", "normal.vgl", "drunk.vgl", "noisy_cabin.vgl"}) {
    CAPTURE(name);
    const auto r = cli({"run", scenario(name), "--oracle"});
    CHECK(r.code == kExitOk);
    CHECK_MESSAGE(r.err.empty(), r.err);
  }
}

TEST_CASE("run reports a missing file") {
  const auto r = cli({"run", "missing.vgl"});
  CHECK(r.code == kExitInputError);
  CHECK(r.err.find("file not found") != std::string::npos);
}

TEST_CASE("run rejects invalid configuration") {
  auto r = cli({"run", scenario("normal.vgl"), "--set", "stop_duration=16"});
  CHECK(r.code == kExitInputError);
  CHECK(r.err.find("stop_duration outside [10,15]") != std::string::npos);
  r = cli({"run", scenario("normal.vgl"), "--set", "warp_speed=9"});
  CHECK(r.code == kExitInputError);
  r = cli({"run", scenario("normal.vgl"), "--set", "stop_duration=abc"});
  CHECK(r.code == kExitInputError);
}

TEST_CASE("run honours overrides") {
  TempDir dir("vigil-cli");
  const auto trace = (dir / "t.jsonl").string();
  const auto r = cli({"run", scenario("about_to_sleep.vgl"), "--trace", trace, "--set", "stop_duration=10", "--set",
                      "t_eye_recheck=1"});
  REQUIRE(r.code == kExitOk);
  std::istringstream in(read_file(trace));
  const auto t = std::get<Trace>(import_trace_jsonl(in));
  std::optional<TimeMs> stopped;
  for (const auto& rec : t.records) {
    if (rec.kind == RecordKind::PHASE_CHANGE && rec.phase == Phase::STOPPED) stopped = rec.t_ms;
  }
  CHECK(stopped == 5000 + 2000 + 10000);
}

TEST_CASE("run on an invalid script prints positioned diagnostics") {
  TempDir dir("vigil-cli");
  const auto path = (dir / "bad.vgl").string();
  write_file(path, "scenario \"x\"\nat 5s eyes shut\nend 9s\n");
  const auto r = cli({"run", path});
  CHECK(r.code == kExitInputError);
  CHECK(r.err.find(":2:12: error:") != std::string::npos);
}

TEST_CASE("override parsing") {
  ControllerConfig c;
  ChannelConfig ch;
  apply_override(c, ch, "stop_duration=11.5");
  apply_override(c, ch, "bit_error_rate=0.001");
  apply_override(c, ch, "channel_seed=77");
  apply_override(c, ch, "cruise_speed=180");
  CHECK(c.stop_duration == 11.5);
  CHECK(ch.bit_error_rate == 0.001);
  CHECK(ch.seed == 77u);
  CHECK(c.cruise_speed == 180);
  CHECK_THROWS_AS(apply_override(c, ch, "stop_duration"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, ch, "=3"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, ch, "max_retries=2.5"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, ch, "bogus=1"), ConfigError);
}

TEST_CASE("check") {
  TempDir dir("vigil-cli");
  SUBCASE("valid corpus file") {
    const auto r = cli({"check", scenario("sleepy.vgl")});
    CHECK(r.code == kExitOk);
  }
  SUBCASE("column points at the bad word") {
    const auto path = (dir / "shut.vgl").string();
    write_file(path, "scenario \"x\"\nat 5s eyes shut\nend 9s\n");
    const auto r = cli({"check", path});
    CHECK(r.code == kExitInputError);
    CHECK(r.err.find("shut.vgl:2:12: error:") != std::string::npos);
  }
  SUBCASE("--fmt output is canonical and re-checks clean") {
    const auto path = (dir / "messy.vgl").string();
    write_file(path, "  scenario   \"m\"\nat 5.000s eyes   closed # zzz\nend 60.0s\n");
    const auto first = cli({"check", path, "--fmt"});
    REQUIRE(first.code == kExitOk);
    CHECK(first.out == "scenario \"m\"\nat 5s eyes closed\nend 60s\n");
    const auto again_path = (dir / "again.vgl").string();
    write_file(again_path, first.out);
    const auto second = cli({"check", again_path, "--fmt"});
    CHECK(second.code == kExitOk);
    CHECK(second.out == first.out);
  }
  SUBCASE("missing file") { CHECK(cli({"check", (dir / "nope.vgl").string()}).code == kExitInputError); }
}

TEST_CASE("metrics") {
  TempDir dir("vigil-cli");
  SUBCASE("data rate") {
    const auto path = (dir / "rate.jsonl").string();
    write_file(path,
               "{\"t_ms\":0,\"dir\":\"send\",\"seq\":0,\"bytes\":2100}\n"
               "{\"t_ms\":1000,\"dir\":\"deliver\",\"seq\":0,\"bytes\":2100}\n");
    const auto r = cli({"metrics", path});
    CHECK(r.code == kExitOk);
    CHECK(r.out.find("measured_data_rate_Bps: 2100\n") != std::string::npos);
    CHECK(r.out.find("delay_p50_ms: 1000\n") != std::string::npos);
  }
  SUBCASE("correction ratio") {
    std::string text;
    for (int s = 0; s < 4; ++s) {
      const int t = s * 100;
      text += "{\"t_ms\":" + std::to_string(t) + ",\"dir\":\"send\",\"seq\":" + std::to_string(s) + ",\"bytes\":11}\n";
      text += "{\"t_ms\":" + std::to_string(t + 15) + ",\"dir\":\"corrupt\",\"seq\":" + std::to_string(s) +
              ",\"bytes\":11}\n";
      if (s < 3) {
        text += "{\"t_ms\":" + std::to_string(t + 33) + ",\"dir\":\"deliver\",\"seq\":" + std::to_string(s) +
                ",\"bytes\":11}\n";
      }
    }
    const auto path = (dir / "ec.jsonl").string();
    write_file(path, text);
    const auto r = cli({"metrics", path});
    CHECK(r.code == kExitOk);
    CHECK(r.out.find("ec_ratio: 0.75\n") != std::string::npos);
  }
  SUBCASE("empty transcript") {
    const auto path = (dir / "empty.jsonl").string();
    write_file(path, "");
    const auto r = cli({"metrics", path});
    CHECK(r.code == kExitOk);
    CHECK(r.out.find("messages_sent: 0\n") != std::string::npos);
    CHECK(r.out.find("measured_data_rate_Bps: undefined\n") != std::string::npos);
  }
  SUBCASE("malformed line") {
    const auto path = (dir / "bad.jsonl").string();
    write_file(path, "{\"t_ms\":0,\"dir\":\"send\",\"seq\":0,\"bytes\":1}\nnonsense\n");
    const auto r = cli({"metrics", path});
    CHECK(r.code == kExitInputError);
    CHECK(r.err.find(":2:") != std::string::npos);
  }
  SUBCASE("transcript written by run") {
    const auto path = (dir / "run.jsonl").string();
    REQUIRE(cli({"run", scenario("drunk.vgl"), "--transcript", path, "--set", "bit_error_rate=0.01"}).code ==
            kExitOk);
    const auto r = cli({"metrics", path});
    CHECK(r.code == kExitOk);
    CHECK(r.out.find("messages_sent:") != std::string::npos);
  }
}

TEST_CASE("serve on a port in use exits 2") {
  ServeOptions opts;
  opts.port = 0;
  LiveServer holder(opts);
  holder.start();
  const auto r = cli({"serve", "--port", std::to_string(holder.port())});
  CHECK(r.code == kExitInputError);
  CHECK_FALSE(r.err.empty());
  holder.stop();
}

TEST_CASE("usage errors exit 2") {
  CHECK(cli({}).code == kExitInputError);
  CHECK(cli({"fly"}).code == kExitInputError);
  CHECK(cli({"serve", "--pace", "0"}).code == kExitInputError);
}

TEST_CASE("the installed binary runs") {
  const std::string cmd = std::string(VIGIL_BINARY) + " check " + scenario("normal.vgl") + " > /dev/null";
  CHECK(std::system(cmd.c_str()) == 0);
}
