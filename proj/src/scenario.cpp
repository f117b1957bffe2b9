#include "vigil/scenario.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "vigil/alert_channel.hpp"  // is_valid_utf8

namespace vigil {

namespace {

struct Token {
  std::string text;
  std::size_t column = 1;
  bool quoted = false;
};

struct LineTokens {
  std::vector<Token> tokens;
  std::optional<ParseDiagnostic> error;
};

// Splits one line into whitespace-separated tokens. A double-quoted token may contain
// spaces and the escapes \" and \\. Everything from an unquoted '#' on is a comment.
LineTokens tokenize(std::string_view line, std::size_t line_no) {
  LineTokens out;
  std::size_t i = 0;
  while (i < line.size()) {
    const char c = line[i];
    if (c == ' ' || c == '\t' || c == '\r') {
      ++i;
      continue;
    }
    if (c == '#') break;
    Token tok;
    tok.column = i + 1;
    if (c == '"') {
      tok.quoted = true;
      ++i;
      bool closed = false;
      while (i < line.size()) {
        const char d = line[i];
        if (d == '\\') {
          if (i + 1 < line.size() && (line[i + 1] == '"' || line[i + 1] == '\\')) {
            tok.text.push_back(line[i + 1]);
            i += 2;
            continue;
          }
          out.error = ParseDiagnostic{line_no, i + 1, "invalid escape in string"};
          return out;
        }
        if (d == '"') {
          closed = true;
          ++i;
          break;
        }
        tok.text.push_back(d);
        ++i;
      }
      if (!closed) {
        out.error = ParseDiagnostic{line_no, tok.column, "unterminated string"};
        return out;
      }
    } else {
      while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r' && line[i] != '#') {
        tok.text.push_back(line[i]);
        ++i;
      }
    }
    out.tokens.push_back(std::move(tok));
  }
  return out;
}

// Decimal literal: optional '-', digits, optional '.' and digits. No exponents.
std::optional<double> parse_real(std::string_view text) {
  std::size_t i = 0;
  if (i < text.size() && text[i] == '-') ++i;
  const std::size_t int_start = i;
  while (i < text.size() && text[i] >= '0' && text[i] <= '9') ++i;
  if (i == int_start) return std::nullopt;
  if (i < text.size() && text[i] == '.') {
    ++i;
    const std::size_t frac_start = i;
    while (i < text.size() && text[i] >= '0' && text[i] <= '9') ++i;
    if (i == frac_start) return std::nullopt;
  }
  if (i != text.size()) return std::nullopt;
  double value = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || !std::isfinite(value)) return std::nullopt;
  return value == 0.0 ? 0.0 : value;
}

std::optional<double> parse_suffixed(std::string_view text, std::string_view suffix) {
  if (text.size() <= suffix.size() || text.substr(text.size() - suffix.size()) != suffix) {
    return std::nullopt;
  }
  return parse_real(text.substr(0, text.size() - suffix.size()));
}

std::optional<std::uint64_t> parse_uint(std::string_view text) {
  std::uint64_t value = 0;
  if (text.empty()) return std::nullopt;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

std::string format_real(double value) {
  char buf[512];  // fixed notation of any finite double fits
  const auto res = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::fixed);
  if (res.ec != std::errc()) return std::to_string(value);
  return std::string(buf, res.ptr);
}

std::string quote(std::string_view text) {
  std::string out = "\"";
  for (char c : text) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

class Parser {
 public:
  explicit Parser(std::string_view source) : source_(source) {}

  ParseResult run() {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= source_.size()) {
      const std::size_t nl = source_.find('\n', pos);
      const std::size_t stop = nl == std::string_view::npos ? source_.size() : nl;
      ++line_no;
      parse_line(source_.substr(pos, stop - pos), line_no);
      if (nl == std::string_view::npos) break;
      pos = nl + 1;
    }
    last_line_ = line_no == 0 ? 1 : line_no;

    if (!saw_header_ && !has_error()) {
      error(1, 1, "missing 'scenario' header");
    }
    if (saw_header_ && !end_at_) {
      error(last_line_, 1, "missing 'end' line");
    }

    ParseResult result;
    result.diagnostics = std::move(diags_);
    if (!has_error_) {
      script_.end_at = *end_at_;
      result.script = std::move(script_);
    }
    return result;
  }

 private:
  bool has_error() const { return has_error_; }

  void error(std::size_t line, std::size_t col, std::string message) {
    diags_.push_back({line, col, std::move(message), ParseDiagnostic::Severity::ERROR});
    has_error_ = true;
  }

  void warning(std::size_t line, std::size_t col, std::string message) {
    diags_.push_back({line, col, std::move(message), ParseDiagnostic::Severity::WARNING});
  }

  void parse_line(std::string_view line, std::size_t line_no) {
    if (!is_valid_utf8(line)) {
      error(line_no, 1, "line is not valid UTF-8");
      return;
    }
    auto lexed = tokenize(line, line_no);
    if (lexed.error) {
      diags_.push_back(*lexed.error);
      has_error_ = true;
      return;
    }
    auto& toks = lexed.tokens;
    if (toks.empty()) return;

    const Token& head = toks[0];
    if (head.quoted) {
      error(line_no, head.column, "expected a keyword, found a string");
      return;
    }

    if (end_at_ && head.text != "end") {
      error(line_no, head.column, "statement after 'end'");
      return;
    }

    if (head.text == "scenario") {
      parse_header(toks, line_no);
    } else if (!saw_header_) {
      error(line_no, head.column, "expected 'scenario' header before '" + head.text + "'");
    } else if (head.text == "at") {
      parse_event(toks, line_no);
    } else if (head.text == "end") {
      parse_end(toks, line_no);
    } else {
      error(line_no, head.column, "unknown keyword '" + head.text + "'");
    }
  }

  void parse_header(const std::vector<Token>& toks, std::size_t line_no) {
    if (saw_header_) {
      error(line_no, toks[0].column, "duplicate 'scenario' header");
      return;
    }
    saw_header_ = true;
    if (toks.size() < 2 || !toks[1].quoted) {
      const std::size_t col = toks.size() < 2 ? toks[0].column + toks[0].text.size() + 1 : toks[1].column;
      error(line_no, col, "expected quoted scenario name");
      return;
    }
    if (toks.size() > 2) {
      error(line_no, toks[2].column, "unexpected token '" + toks[2].text + "'");
      return;
    }
    script_.name = toks[1].text;
  }

  std::optional<double> expect_time(const std::vector<Token>& toks, std::size_t idx, std::size_t line_no) {
    if (idx >= toks.size()) {
      error(line_no, after(toks), "expected time like '5s'");
      return std::nullopt;
    }
    const auto t = parse_suffixed(toks[idx].text, "s");
    if (!t || toks[idx].quoted) {
      error(line_no, toks[idx].column, "invalid time '" + toks[idx].text + "' (expected e.g. '5s' or '2.5s')");
      return std::nullopt;
    }
    if (*t < 0.0) {
      error(line_no, toks[idx].column, "time must be >= 0");
      return std::nullopt;
    }
    if (*t > kMaxScriptSeconds) {
      error(line_no, toks[idx].column, "time exceeds " + format_real(kMaxScriptSeconds) + "s");
      return std::nullopt;
    }
    return t;
  }

  static std::size_t after(const std::vector<Token>& toks) {
    const Token& last = toks.back();
    return last.column + last.text.size() + (last.quoted ? 2 : 0);
  }

  bool expect_exact(const std::vector<Token>& toks, std::size_t idx, std::string_view word, std::size_t line_no) {
    if (idx >= toks.size()) {
      error(line_no, after(toks), "expected '" + std::string(word) + "'");
      return false;
    }
    if (toks[idx].text != word || toks[idx].quoted) {
      error(line_no, toks[idx].column, "expected '" + std::string(word) + "', found '" + toks[idx].text + "'");
      return false;
    }
    return true;
  }

  bool expect_end_of_line(const std::vector<Token>& toks, std::size_t count, std::size_t line_no) {
    if (toks.size() > count) {
      error(line_no, toks[count].column, "unexpected token '" + toks[count].text + "'");
      return false;
    }
    return true;
  }

  void parse_event(const std::vector<Token>& toks, std::size_t line_no) {
    const auto at = expect_time(toks, 1, line_no);
    if (!at) return;
    if (toks.size() < 3) {
      error(line_no, after(toks), "expected 'eyes', 'alcohol' or 'noise'");
      return;
    }
    const Token& kw = toks[2];
    ScenarioEvent event;
    event.at = *at;

    if (kw.text == "eyes" && !kw.quoted) {
      if (toks.size() < 4) {
        error(line_no, after(toks), "expected 'open' or 'closed'");
        return;
      }
      if (toks[3].text == "open") {
        event.kind = EyesEvent{false};
      } else if (toks[3].text == "closed") {
        event.kind = EyesEvent{true};
      } else {
        error(line_no, toks[3].column, "expected 'open' or 'closed', found '" + toks[3].text + "'");
        return;
      }
      if (!expect_end_of_line(toks, 4, line_no)) return;
    } else if (kw.text == "alcohol" && !kw.quoted) {
      if (toks.size() < 4) {
        error(line_no, after(toks), "expected alcohol level like '450ppm'");
        return;
      }
      const auto ppm = parse_suffixed(toks[3].text, "ppm");
      if (!ppm) {
        error(line_no, toks[3].column, "invalid alcohol level '" + toks[3].text + "' (expected e.g. '450ppm')");
        return;
      }
      if (*ppm < 0.0 || *ppm > kMaxGroundTruthPpm) {
        error(line_no, toks[3].column, "alcohol level must be in [0,1000] ppm");
        return;
      }
      if (*ppm > kMq3FullScalePpm) {
        warning(line_no, toks[3].column, "alcohol level above 500 ppm saturates the sensor");
      }
      event.kind = AlcoholEvent{*ppm};
      if (!expect_end_of_line(toks, 4, line_no)) return;
    } else if (kw.text == "noise" && !kw.quoted) {
      NoiseSpec spec;
      if (!expect_exact(toks, 3, "seed", line_no)) return;
      if (toks.size() < 5) {
        error(line_no, after(toks), "expected seed integer");
        return;
      }
      const auto seed = parse_uint(toks[4].text);
      if (!seed) {
        error(line_no, toks[4].column, "invalid seed '" + toks[4].text + "'");
        return;
      }
      spec.seed = *seed;
      if (!expect_exact(toks, 5, "jitter", line_no)) return;
      if (toks.size() < 7) {
        error(line_no, after(toks), "expected jitter value");
        return;
      }
      const auto jitter = parse_real(toks[6].text);
      if (!jitter || *jitter < 0.0) {
        error(line_no, toks[6].column, "jitter must be a number >= 0");
        return;
      }
      spec.alcohol_jitter = *jitter;
      if (!expect_exact(toks, 7, "flip", line_no)) return;
      if (toks.size() < 9) {
        error(line_no, after(toks), "expected flip probability");
        return;
      }
      const auto flip = parse_real(toks[8].text);
      if (!flip || *flip < 0.0 || *flip >= 1.0) {
        error(line_no, toks[8].column, "flip must be a probability in [0,1)");
        return;
      }
      spec.eye_flip_prob = *flip;
      event.kind = NoiseEvent{spec};
      if (!expect_end_of_line(toks, 9, line_no)) return;
    } else {
      error(line_no, kw.column, "unknown event '" + kw.text + "' (expected eyes, alcohol or noise)");
      return;
    }

    if (!script_.events.empty()) {
      const auto& prev = script_.events.back();
      if (event.at < prev.at) {
        error(line_no, toks[1].column, "event time goes backwards (previous event at " + format_real(prev.at) + "s)");
        return;
      }
    }
    for (auto it = script_.events.rbegin(); it != script_.events.rend() && it->at == event.at; ++it) {
      if (it->kind.index() == event.kind.index()) {
        error(line_no, kw.column, "duplicate '" + kw.text + "' event at the same time");
        return;
      }
    }
    script_.events.push_back(std::move(event));
  }

  void parse_end(const std::vector<Token>& toks, std::size_t line_no) {
    if (end_at_) {
      error(line_no, toks[0].column, "duplicate 'end' line");
      return;
    }
    const auto t = expect_time(toks, 1, line_no);
    if (!t) {
      end_at_ = 0.0;  // still counts as the end line for later checks
      return;
    }
    if (!expect_end_of_line(toks, 2, line_no)) {
      end_at_ = *t;
      return;
    }
    if (!script_.events.empty() && *t < script_.events.back().at) {
      error(line_no, toks[1].column, "end time precedes the last event");
    }
    end_at_ = *t;
  }

  std::string_view source_;
  ScenarioScript script_;
  std::vector<ParseDiagnostic> diags_;
  std::optional<double> end_at_;
  bool saw_header_ = false;
  bool has_error_ = false;
  std::size_t last_line_ = 1;
};

template <class Pred>
GroundTruth evaluate(const ScenarioScript& script, Pred in_effect) {
  GroundTruth truth;
  for (const auto& ev : script.events) {
    if (!in_effect(ev)) break;
    if (const auto* eyes = std::get_if<EyesEvent>(&ev.kind)) {
      truth.eyes_closed = eyes->closed;
    } else if (const auto* alc = std::get_if<AlcoholEvent>(&ev.kind)) {
      truth.ppm = alc->ppm;
    } else if (const auto* noise = std::get_if<NoiseEvent>(&ev.kind)) {
      truth.noise = noise->spec;
    }
  }
  return truth;
}

}  // namespace

ParseResult parse_scenario(std::string_view source) { return Parser(source).run(); }

std::string format_scenario(const ScenarioScript& script) {
  std::ostringstream out;
  out << "scenario " << quote(script.name) << '\n';
  for (const auto& ev : script.events) {
    out << "at " << format_real(ev.at) << "s ";
    if (const auto* eyes = std::get_if<EyesEvent>(&ev.kind)) {
      out << "eyes " << (eyes->closed ? "closed" : "open");
    } else if (const auto* alc = std::get_if<AlcoholEvent>(&ev.kind)) {
      out << "alcohol " << format_real(alc->ppm) << "ppm";
    } else if (const auto* noise = std::get_if<NoiseEvent>(&ev.kind)) {
      out << "noise seed " << noise->spec.seed << " jitter " << format_real(noise->spec.alcohol_jitter) << " flip "
          << format_real(noise->spec.eye_flip_prob);
    }
    out << '\n';
  }
  out << "end " << format_real(script.end_at) << "s\n";
  return out.str();
}

GroundTruth ground_truth_at(const ScenarioScript& script, double t_seconds) {
  if (!(t_seconds >= 0.0 && t_seconds <= script.end_at)) {
    throw RangeError("time " + format_real(t_seconds) + "s outside [0, " + format_real(script.end_at) + "s]");
  }
  return evaluate(script, [t_seconds](const ScenarioEvent& ev) { return ev.at <= t_seconds; });
}

GroundTruth ground_truth_at_ms(const ScenarioScript& script, TimeMs t_ms) {
  if (t_ms < 0 || t_ms > script.end_ms()) {
    throw RangeError("time " + std::to_string(t_ms) + " ms outside the scenario");
  }
  return evaluate(script, [t_ms](const ScenarioEvent& ev) { return ev.at_ms() <= t_ms; });
}

std::optional<std::size_t> active_noise_event(const ScenarioScript& script, TimeMs t_ms) {
  std::optional<std::size_t> found;
  for (std::size_t i = 0; i < script.events.size(); ++i) {
    if (script.events[i].at_ms() > t_ms) break;
    if (std::holds_alternative<NoiseEvent>(script.events[i].kind)) found = i;
  }
  return found;
}

}  // namespace vigil
