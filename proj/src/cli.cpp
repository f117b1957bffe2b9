#include "vigil/cli.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "vigil/live.hpp"
#include "vigil/log.hpp"
#include "vigil/scenario.hpp"
#include "vigil/sim_engine.hpp"

namespace vigil {

namespace {

template <class T>
T parse_value(std::string_view key, std::string_view text) {
  T value{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError("invalid value '" + std::string(text) + "' for " + std::string(key));
  }
  return value;
}

struct RunOptions {
  std::string scenario;
  std::string trace_path;
  std::string csv_path;
  std::string transcript_path;
  std::optional<std::uint64_t> seed;
  bool oracle = false;
  std::vector<std::string> overrides;
};

std::optional<std::string> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void print_diagnostics(const std::string& file, const ParseResult& parsed, std::ostream& err) {
  for (const auto& d : parsed.diagnostics) {
    err << file << ':' << d.line << ':' << d.column << ": "
        << (d.severity == ParseDiagnostic::Severity::ERROR ? "error: " : "warning: ") << d.message << '\n';
  }
}

std::optional<ScenarioScript> load_scenario(const std::string& path, std::ostream& err) {
  const auto source = read_file(path);
  if (!source) {
    err << path << ": file not found\n";
    return std::nullopt;
  }
  auto parsed = parse_scenario(*source);
  print_diagnostics(path, parsed, err);
  return std::move(parsed.script);
}

template <class Writer>
bool write_output(const std::string& path, std::ostream& err, Writer&& writer) {
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) {
    err << path << ": cannot open for writing\n";
    return false;
  }
  try {
    writer(file);
  } catch (const ExportError& e) {
    err << path << ": " << e.what() << " after " << e.bytes_written << " bytes\n";
    return false;
  }
  return true;
}

int cmd_run(const RunOptions& opts, std::ostream& out, std::ostream& err) {
  const auto script = load_scenario(opts.scenario, err);
  if (!script) return kExitInputError;

  ControllerConfig controller;
  ChannelConfig channel;
  try {
    for (const auto& kv : opts.overrides) apply_override(controller, channel, kv);
    if (opts.seed) channel.seed = *opts.seed;
    controller.validate();
    channel.validate();
  } catch (const ConfigError& e) {
    err << "invalid configuration: " << e.what() << '\n';
    return kExitInputError;
  }

  log_info("running " + opts.scenario);
  const Trace trace = run(*script, controller, channel);

  if (!opts.trace_path.empty() &&
      !write_output(opts.trace_path, err, [&](std::ostream& s) { export_trace(trace, TraceFormat::JSONL, s); })) {
    return kExitInputError;
  }
  if (!opts.csv_path.empty() &&
      !write_output(opts.csv_path, err, [&](std::ostream& s) { export_trace(trace, TraceFormat::CSV, s); })) {
    return kExitInputError;
  }
  if (!opts.transcript_path.empty() && !write_output(opts.transcript_path, err, [&](std::ostream& s) {
        for (const auto& ev : trace.transcript) s << transcript_to_jsonl(ev) << '\n';
        if (!s) throw ExportError("transcript write failed", 0);
      })) {
    return kExitInputError;
  }

  const auto& last = trace.records.back();
  out << script->name << ": " << trace.records.size() << " records, final phase " << to_string(last.phase)
      << " at " << last.t_ms << " ms, speed " << last.speed << '\n';

  if (opts.oracle) {
    const Trace reference = oracle_run(*script, controller, channel);
    if (const auto diff = compare_traces(trace, reference, 1)) {
      err << "oracle divergence: " << diff->description << '\n';
      return kExitOracleDivergence;
    }
    out << "oracle: " << reference.records.size() << " records, engines agree\n";
  }
  return kExitOk;
}

int cmd_check(const std::string& path, bool fmt, std::ostream& out, std::ostream& err) {
  const auto source = read_file(path);
  if (!source) {
    err << path << ": file not found\n";
    return kExitInputError;
  }
  const auto parsed = parse_scenario(*source);
  print_diagnostics(path, parsed, err);
  if (!parsed.ok()) return kExitInputError;
  if (fmt) out << format_scenario(*parsed.script);
  return kExitOk;
}

int cmd_metrics(const std::string& path, std::ostream& out, std::ostream& err) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    err << path << ": file not found\n";
    return kExitInputError;
  }
  const auto read = read_transcript_jsonl(in);
  if (const auto* bad = std::get_if<TranscriptParseError>(&read)) {
    err << path << ':' << bad->line << ": " << bad->message << '\n';
    return kExitInputError;
  }
  const auto& events = std::get<std::vector<TranscriptEvent>>(read);
  ChannelMetrics m;
  try {
    m = compute_metrics(events);
  } catch (const DomainError& e) {
    err << path << ": " << e.what() << '\n';
    return kExitInputError;
  }

  auto opt = [](std::optional<double> v) {
    if (!v) return std::string("undefined");
    std::ostringstream s;
    s << *v;
    return s.str();
  };
  out << "messages_sent: " << m.messages_sent << '\n';
  out << "messages_delivered: " << m.messages_delivered << '\n';
  out << "messages_lost: " << m.messages_lost << '\n';
  out << "bytes_delivered: " << m.bytes_delivered << '\n';
  out << "elapsed_s: " << m.elapsed_s << '\n';
  out << "measured_data_rate_Bps: " << opt(m.measured_data_rate) << '\n';
  out << "delay_p50_ms: " << opt(percentile(m.delays_ms, 0.50)) << '\n';
  out << "delay_p95_ms: " << opt(percentile(m.delays_ms, 0.95)) << '\n';
  out << "delay_max_ms: " << opt(percentile(m.delays_ms, 1.0)) << '\n';
  out << "errors_total: " << m.errors_total << '\n';
  out << "errors_corrected: " << m.errors_corrected << '\n';
  out << "ec_ratio: " << m.ec_ratio << (m.ec_ratio_vacuous ? " (no errors)" : "") << '\n';
  return kExitOk;
}

int cmd_serve(unsigned short port, double pace, const std::vector<std::string>& overrides, std::ostream& out,
              std::ostream& err) {
  ServeOptions options;
  options.port = port;
  options.pace = pace;
  try {
    for (const auto& kv : overrides) apply_override(options.controller, options.channel, kv);
    LiveServer server(options);
    server.start();
    out << "vigil serving on ws://127.0.0.1:" << server.port() << " (pace " << pace << "x)" << std::endl;
    server.wait();
  } catch (const PortInUseError& e) {
    err << e.what() << '\n';
    return kExitInputError;
  } catch (const ConfigError& e) {
    err << "invalid configuration: " << e.what() << '\n';
    return kExitInputError;
  }
  return kExitOk;
}

}  // namespace

void apply_override(ControllerConfig& controller, ChannelConfig& channel, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override must look like key=value: '" + std::string(assignment) + "'");
  }
  const auto key = assignment.substr(0, eq);
  const auto value = assignment.substr(eq + 1);

  static const std::map<std::string_view, std::function<void(ControllerConfig&, ChannelConfig&, std::string_view)>>
      setters = {
          {"alcohol_threshold", [](auto& c, auto&, auto v) { c.alcohol_threshold = parse_value<int>("alcohol_threshold", v); }},
          {"t_alcohol_recheck", [](auto& c, auto&, auto v) { c.t_alcohol_recheck = parse_value<double>("t_alcohol_recheck", v); }},
          {"t_eye_recheck", [](auto& c, auto&, auto v) { c.t_eye_recheck = parse_value<double>("t_eye_recheck", v); }},
          {"stop_duration", [](auto& c, auto&, auto v) { c.stop_duration = parse_value<double>("stop_duration", v); }},
          {"eye_sample_period", [](auto& c, auto&, auto v) { c.eye_sample_period = parse_value<double>("eye_sample_period", v); }},
          {"alcohol_sample_period", [](auto& c, auto&, auto v) { c.alcohol_sample_period = parse_value<double>("alcohol_sample_period", v); }},
          {"cruise_speed", [](auto& c, auto&, auto v) { c.cruise_speed = parse_value<int>("cruise_speed", v); }},
          {"data_rate", [](auto&, auto& ch, auto v) { ch.data_rate = parse_value<double>("data_rate", v); }},
          {"propagation_delay", [](auto&, auto& ch, auto v) { ch.propagation_delay_ms = parse_value<double>("propagation_delay", v); }},
          {"bit_error_rate", [](auto&, auto& ch, auto v) { ch.bit_error_rate = parse_value<double>("bit_error_rate", v); }},
          {"max_retries", [](auto&, auto& ch, auto v) { ch.max_retries = parse_value<int>("max_retries", v); }},
          {"channel_seed", [](auto&, auto& ch, auto v) { ch.seed = parse_value<std::uint64_t>("channel_seed", v); }},
      };
  const auto it = setters.find(key);
  if (it == setters.end()) {
    throw ConfigError("unknown setting '" + std::string(key) + "'");
  }
  it->second(controller, channel, value);
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"vigil - driver drowsiness and alcohol safety controller simulator", "vigil"};
  app.require_subcommand(1);

  RunOptions run_opts;
  auto* run_cmd = app.add_subcommand("run", "simulate a scenario script");
  run_cmd->add_option("file", run_opts.scenario, "scenario (.vgl)")->required();
  run_cmd->add_option("--trace", run_opts.trace_path, "write the trace as JSONL");
  run_cmd->add_option("--csv", run_opts.csv_path, "write the trace as CSV");
  run_cmd->add_option("--transcript", run_opts.transcript_path, "write the alert channel transcript as JSONL");
  run_cmd->add_option("--seed", run_opts.seed, "alert channel seed");
  run_cmd->add_flag("--oracle", run_opts.oracle, "cross-check against the 1 ms fixed-step interpreter");
  run_cmd->add_option("--set", run_opts.overrides, "override a setting, key=value")->take_all();

  std::string check_file;
  bool check_fmt = false;
  auto* check_cmd = app.add_subcommand("check", "validate a scenario script");
  check_cmd->add_option("file", check_file, "scenario (.vgl)")->required();
  check_cmd->add_flag("--fmt", check_fmt, "print the canonical form");

  std::string metrics_file;
  auto* metrics_cmd = app.add_subcommand("metrics", "channel metrics from a transcript");
  metrics_cmd->add_option("transcript", metrics_file, "transcript JSONL")->required();

  unsigned short port = 8717;
  double pace = 1.0;
  std::vector<std::string> serve_overrides;
  auto* serve_cmd = app.add_subcommand("serve", "live mode for the driver console");
  serve_cmd->add_option("--port", port, "WebSocket port");
  serve_cmd->add_option("--pace", pace, "virtual time per wall-clock time")->check(CLI::PositiveNumber);
  serve_cmd->add_option("--set", serve_overrides, "override a setting, key=value")->take_all();

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "vigil: " << e.what() << '\n';
    return kExitInputError;
  }

  if (run_cmd->parsed()) return cmd_run(run_opts, out, err);
  if (check_cmd->parsed()) return cmd_check(check_file, check_fmt, out, err);
  if (metrics_cmd->parsed()) return cmd_metrics(metrics_file, out, err);
  if (serve_cmd->parsed()) return cmd_serve(port, pace, serve_overrides, out, err);
  return kExitInputError;
}

}  // namespace vigil
