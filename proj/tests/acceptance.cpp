// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <regex>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include "fixtures.hpp"
#include "golden.hpp"
#include "ktest/automaton.hpp"
#include "ktest/harness.hpp"
#include "ktest/spec_text.hpp"
#include "ktest/trace.hpp"
#include "oracle.hpp"

using namespace ktest;
using namespace ktest::testing;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void fail(const std::string& why) {
    if (pass) detail = why;
    pass = false;
  }
};

constexpr std::chrono::milliseconds kLiveTimeout{30};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::set<DigitWord> to_digit_words(const Language& lang) {
  std::vector<char> digit;
  for (const auto& s : lang.alphabet) digit.push_back(s.event.kind.name().back());
  std::set<DigitWord> out;
  for (const auto& w : lang.words) {
    DigitWord d;
    for (int i : w) d.push_back(digit[i]);
    out.insert(d);
  }
  return out;
}

Outcome golden_languages() {
  Outcome o;
  const auto t0 = Clock::now();
  for (const auto& g : golden_specs()) {
    const auto automaton = compile(validate(parse_golden(g)));
    const auto lang = enumerate_language(*automaton, g.max_len);
    const auto words = to_digit_words(lang);
    if (g.exact && words != g.accepted) o.fail(g.name + ": language differs");
    for (const auto& w : g.accepted) {
      if (!words.count(w)) o.fail(g.name + ": missing '" + w + "'");
    }
    for (const auto& w : g.rejected) {
      if (words.count(w)) o.fail(g.name + ": accepts '" + w + "'");
    }
  }
  const double secs = seconds_since(t0);
  if (secs >= 5.0) o.fail("took " + std::to_string(secs) + " s");
  if (o.pass) o.detail = std::to_string(golden_specs().size()) + " golden specs";
  return o;
}

Outcome oracle_equivalence() {
  Outcome o;
  const auto t0 = Clock::now();
  const Vocabulary v = make_vocabulary(4);
  const SetSemantics oracle(v.matchers, 8);
  std::mt19937 rng(20240611);
  int discrepancies = 0;
  for (int i = 0; i < 200; ++i) {
    const SpecAst ast = random_passive_spec(rng, v);
    const auto lang = enumerate_language(*compile(validate(ast)), 8);
    WordSet got;
    for (const auto& w : lang.words) {
      Word mapped;
      for (int s : w) {
        for (std::size_t k = 0; k < v.events.size(); ++k) {
          if (lang.alphabet[s].event.kind == v.events[k].kind) mapped.push_back(static_cast<int>(k));
        }
      }
      got.insert(mapped);
    }
    if (got != oracle.language(ast)) {
      if (discrepancies == 0) {
        o.fail("spec " + std::to_string(i) + " differs:\n" + print(ast).text);
      }
      ++discrepancies;
    }
  }
  const double secs = seconds_since(t0);
  if (discrepancies) o.detail += " (" + std::to_string(discrepancies) + " discrepancies)";
  if (secs >= 60.0) o.fail("took " + std::to_string(secs) + " s");
  if (o.pass) o.detail = "200 specs, 0 discrepancies, " + std::to_string(secs) + " s";
  return o;
}

Outcome constraint_semantics() {
  Outcome o;
  const auto& t = EmitterTypes::get();
  std::mt19937 rng(12);
  int passes = 0;
  int disallowed = 0;
  for (int run = 0; run < 100; ++run) {
    // e3, e4 and e5 interleaved before e2 (the final state has no
    // constraint loops).
    std::vector<int> noise{3, 4, 5};
    for (int extra = std::uniform_int_distribution<int>(0, 3)(rng); extra > 0; --extra) {
      noise.push_back(3 + std::uniform_int_distribution<int>(0, 2)(rng));
    }
    std::shuffle(noise.begin(), noise.end(), rng);
    const std::size_t split = std::uniform_int_distribution<std::size_t>(0, noise.size())(rng);
    std::vector<int> script(noise.begin(), noise.begin() + static_cast<long>(split));
    script.push_back(1);
    script.insert(script.end(), noise.begin() + static_cast<long>(split), noise.end());
    script.push_back(2);

    {
      auto ctx = TestContext::create<Emitter>(script);
      ctx->set_timeout(kLiveTimeout);
      Component& peer = ctx->create_peer<Receiver>();
      const PortRef p = ctx->cut().inside(t.port);
      ctx->connect(ctx->cut().outside(t.port), peer.outside(t.port));
      ctx->spec()
          .allow(t.event(3), p, Direction::Out)
          .allow(t.event(4), p, Direction::Out)
          .drop(t.event(5), p, Direction::Out);
      ctx->body().trigger(make_event(t.go), p).expect(t.event(1), p, Direction::Out).expect(
          t.event(2), p, Direction::Out);
      const bool ok = ctx->check();
      peer.wait_idle(Clock::now() + std::chrono::seconds(2));
      const auto& r = peer.definition_as<Receiver>().received;
      const auto n = [&](int i) { return static_cast<int>(std::count(script.begin(), script.end(), i)); };
      if (!ok) {
        o.fail("allow/drop run " + std::to_string(run) + " failed: " + describe(*ctx->failure()));
      } else if (r[3] != n(3) || r[4] != n(4) || r[5] != 0 || r[1] != 1 || r[2] != 1) {
        o.fail("allow/drop run " + std::to_string(run) + " delivered e3=" + std::to_string(r[3]) +
               " e4=" + std::to_string(r[4]) + " e5=" + std::to_string(r[5]));
      } else {
        ++passes;
      }
    }

    // Same configuration plus disallow e9, with e9 injected before e2.
    std::vector<int> bad(script.begin(), script.end() - 1);
    const std::size_t at = std::uniform_int_distribution<std::size_t>(0, bad.size())(rng);
    bad.insert(bad.begin() + static_cast<long>(at), 9);
    bad.push_back(2);
    {
      auto ctx = TestContext::create<Emitter>(bad);
      ctx->set_timeout(kLiveTimeout);
      const PortRef p = ctx->cut().inside(t.port);
      ctx->spec()
          .allow(t.event(3), p, Direction::Out)
          .allow(t.event(4), p, Direction::Out)
          .drop(t.event(5), p, Direction::Out)
          .disallow(t.event(9), p, Direction::Out);
      ctx->body().trigger(make_event(t.go), p).expect(t.event(1), p, Direction::Out).expect(
          t.event(2), p, Direction::Out);
      const bool ok = ctx->check();
      const auto& f = ctx->failure();
      if (ok || !f || f->kind != FailureKind::Disallowed || f->position != at) {
        o.fail("disallow run " + std::to_string(run) + ": " +
               (f ? describe(*f) : std::string("passed")) + ", injected at " + std::to_string(at));
      } else {
        ++disallowed;
      }
    }
  }
  if (o.pass) {
    o.detail = std::to_string(passes) + "/100 allow/drop runs, " + std::to_string(disallowed) +
               "/100 disallow runs";
  }
  return o;
}

Outcome live_harness() {
  Outcome o;
  int pingpong = 0;
  for (int run = 0; run < 100; ++run) {
    const auto& t = PingPongTypes::get();
    auto ctx = TestContext::create<Ponger>();
    ctx->set_timeout(kLiveTimeout);
    const PortRef p = ctx->cut().inside(t.port);
    ctx->body().trigger(make_event(t.ping, {{"n", run}}), p).expect(make_event(t.pong, {{"n", run}}),
                                                                      p, Direction::Out);
    if (ctx->check()) {
      ++pingpong;
    } else {
      o.fail("ping-pong run " + std::to_string(run) + ": " + describe(*ctx->failure()));
    }
  }

  int counted = 0;
  int premature = 0;
  const std::array<int, 3> ks{1, 5, 20};
  for (int run = 0; run < 100; ++run) {
    const int k = ks[run % 3];
    const auto& t = CounterTypes::get();
    auto ctx = TestContext::create<Counter>();
    ctx->set_timeout(kLiveTimeout);
    const PortRef p = ctx->cut().inside(t.port);
    Component* cut = &ctx->cut();
    ctx->body().repeat(static_cast<unsigned>(k)).body().trigger(make_event(t.inc), p).end();
    ctx->spec().inspect<Counter>(std::function<bool(const Counter&)>([&, k, cut](const Counter& c) {
      if (c.count != k || cut->work_count() != 0) ++premature;
      return c.count == k;
    }));
    if (ctx->check()) {
      ++counted;
    } else {
      o.fail("count run " + std::to_string(run) + " (k=" + std::to_string(k) +
             "): " + describe(*ctx->failure()));
    }
  }
  if (premature) o.fail(std::to_string(premature) + " premature inspections");
  if (o.pass) {
    o.detail = std::to_string(pingpong) + "/100 ping-pong, " + std::to_string(counted) +
               "/100 count-then-inspect, 0 premature";
  }
  return o;
}

Outcome request_response() {
  Outcome o;
  const auto& t = ReqResTypes::get();
  int passes = 0;
  for (int run = 0; run < 100; ++run) {
    const int n = run % 2 == 0 ? 1 : 3;
    auto ctx = TestContext::create<Requester>(n, static_cast<unsigned>(run) * 7919u + 1u);
    ctx->set_timeout(kLiveTimeout);
    const PortRef control = ctx->cut().inside(t.control);
    const PortRef service = ctx->cut().inside(t.service);
    auto& b = ctx->body().trigger(make_event(t.start), control).expect_with_mapper();
    for (int i = 0; i < n; ++i) {
      b.expect(t.request, service, service, [&t](const Event& req) -> std::optional<Event> {
        return make_event(t.response, {{"id", req.payload.at("id")}});
      });
    }
    b.end();
    b.inspect<Requester>(std::function<bool(const Requester&)>([](const Requester& r) {
      return std::multiset<int>(r.ids.begin(), r.ids.end()) == r.answered;
    }));
    if (ctx->check()) {
      ++passes;
    } else {
      o.fail("run " + std::to_string(run) + " (n=" + std::to_string(n) +
             "): " + describe(*ctx->failure()));
    }
  }
  if (o.pass) o.detail = std::to_string(passes) + "/100 runs, n in {1,3}";
  return o;
}

Outcome ambiguity_validation() {
  Outcome o;
  const auto& t = PingPongTypes::get();
  const PortRef p = make_port_pair("p", t.port, PortRole::Provided, 1, 0).inside;
  const Event ping = make_event(t.ping);
  const Event pong = make_event(t.pong);

  auto expect_rejected = [&](const char* name, const SpecAst& ast, const std::string& needle) {
    try {
      validate(ast);
      o.fail(std::string(name) + " accepted");
    } catch (const AmbiguousSpec& ex) {
      if (ex.path().find(needle) == std::string::npos) {
        o.fail(std::string(name) + " path '" + ex.path() + "' lacks '" + needle + "'");
      }
    }
  };

  SpecBuilder kleene_trigger;
  kleene_trigger.body().repeat().body().trigger(ping, p).end();
  expect_rejected("kleene-without-expect", kleene_trigger.build(), "repeat");

  SpecBuilder both_active;
  both_active.body().either().trigger(ping, p).expect(pong, p, Direction::Out).or_().trigger(ping, p).end();
  expect_rejected("either-both-active", both_active.build(), "either");

  SpecBuilder mixed;
  mixed.body()
      .either()
      .trigger(ping, p)
      .expect(pong, p, Direction::Out)
      .or_()
      .expect(pong, p, Direction::Out)
      .end();
  try {
    validate(mixed.build());
  } catch (const std::exception& ex) {
    o.fail(std::string("either trigger/expect rejected: ") + ex.what());
  }
  if (o.pass) o.detail = "two shapes rejected with paths, one accepted";
  return o;
}

Outcome timeout_behaviour() {
  Outcome o;
  std::ostringstream detail;
  for (int ms : {50, 400}) {
    const auto& t = PingPongTypes::get();
    auto ctx = TestContext::create<Silent>();
    ctx->set_timeout(std::chrono::milliseconds(ms));
    ctx->body().expect(make_event(t.pong), ctx->cut().inside(t.port), Direction::Out);
    const auto t0 = Clock::now();
    const bool ok = ctx->check();
    const auto elapsed =
        std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - t0).count();
    if (ok) o.fail(std::to_string(ms) + " ms: check returned true");
    if (!ctx->failure() || ctx->failure()->kind != FailureKind::Timeout) {
      o.fail(std::to_string(ms) + " ms: failure is not a timeout");
    }
    if (elapsed > ms + 100) {
      o.fail(std::to_string(ms) + " ms: took " + std::to_string(elapsed) + " ms");
    }
    if (detail.tellp() > 0) detail << "; ";
    detail << ms << " ms timeout failed after " << elapsed << " ms";
  }
  if (o.pass) o.detail = detail.str();
  return o;
}

SymbolTable round_trip_extras() {
  SymbolTable extra;
  const auto kind = EventKind::make("P");
  extra.predicates.emplace(
      "big", SymbolTable::PredicateBinding{kind, std::make_shared<const EventPredicate>(
                                                     [](const Event&) { return true; })});
  extra.predicates.emplace(
      "small", SymbolTable::PredicateBinding{kind, std::make_shared<const EventPredicate>(
                                                       [](const Event&) { return false; })});
  extra.inspections.emplace(
      "ready", std::make_shared<const InspectFn>([](const ComponentDefinition&) { return true; }));
  extra.inspections.emplace(
      "done", std::make_shared<const InspectFn>([](const ComponentDefinition&) { return false; }));
  return extra;
}

struct LexToken {
  std::size_t offset;
  std::size_t length;
  bool identifier;
};

std::vector<LexToken> lex(const std::string& text) {
  static const std::regex token(R"([A-Za-z_][A-Za-z0-9_]*|[0-9]+|[@:])");
  std::vector<LexToken> out;
  for (std::sregex_iterator it(text.begin(), text.end(), token), end; it != end; ++it) {
    const std::string s = it->str();
    out.push_back({static_cast<std::size_t>(it->position()), s.size(),
                   std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_'});
  }
  return out;
}

Outcome parser_round_trip() {
  Outcome o;
  const Vocabulary v = make_vocabulary(4);
  const SymbolTable extra = round_trip_extras();
  std::mt19937 rng(99);
  int equal = 0;
  for (int i = 0; i < 100; ++i) {
    const SpecAst ast = random_text_spec(rng, v, extra);
    const SpecSource src = print(ast);
    try {
      if (parse(src.text, src.symbols) == ast) {
        ++equal;
      } else {
        o.fail("round trip " + std::to_string(i) + " differs:\n" + src.text);
      }
    } catch (const std::exception& ex) {
      o.fail("round trip " + std::to_string(i) + " threw " + ex.what() + "\n" + src.text);
    }
  }

  // Corruptions that are invalid wherever they appear: a stray character,
  // a lone '@' or ':', or an unbound identifier.
  int corrupted = 0;
  const std::array<std::string, 4> replacements{"#", "@", ":", "nosuchname"};
  for (int i = 0; i < 100; ++i) {
    const SpecSource src = print(random_text_spec(rng, v, extra));
    const auto tokens = lex(src.text);
    const LexToken tok = tokens[std::uniform_int_distribution<std::size_t>(0, tokens.size() - 1)(rng)];
    std::string rep = replacements[i % replacements.size()];
    std::string text = src.text;
    if ((rep == "nosuchname" && !tok.identifier) || text.compare(tok.offset, tok.length, rep) == 0) {
      rep = "#";
    }
    text.replace(tok.offset, tok.length, rep);
    try {
      parse(text, src.symbols);
      // A keyword swapped for an unbound name can only fail to parse.
      o.fail("corruption " + std::to_string(i) + " parsed:\n" + text);
    } catch (const ParseError& ex) {
      if (ex.offset() > tok.offset) {
        o.fail("corruption " + std::to_string(i) + " reported at " + std::to_string(ex.offset()) +
               " after " + std::to_string(tok.offset) + ":\n" + text);
      } else {
        ++corrupted;
      }
    }
  }
  if (o.pass) {
    o.detail = std::to_string(equal) + "/100 round trips, " + std::to_string(corrupted) +
               "/100 corruptions located";
  }
  return o;
}

struct Run {
  int status = -1;
  std::string out;
};

Run run_cli(const std::string& args) {
  Run r;
  const std::string cmd = std::string(KTEST_CLI_PATH) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

Outcome cli_conformance() {
  Outcome o;
  const auto dir = std::filesystem::temp_directory_path() /
                   ("ktest-acceptance-" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  write_file(dir / "bindings.json", golden_bindings_json().dump(2));
  const std::string bindings = "--bindings " + (dir / "bindings.json").string();

  int in_process = 0;
  int via_binary = 0;
  for (const auto& g : golden_specs()) {
    const auto automaton = compile(validate(parse_golden(g)));
    const auto lang = enumerate_language(*automaton, g.max_len);

    for (const auto& w : all_words(digits_of(g.shorthand), g.max_len)) {
      std::istringstream in(trace_text(w));
      const Verdict v = check_trace(automaton, parse_trace(in, golden_bindings()));
      if (v.accepted != lang.contains(symbols_of(w))) {
        o.fail(g.name + ": in-process verdict differs on '" + w + "'");
      }
      ++in_process;
    }

    const auto spec_path = dir / (g.name + ".spec");
    write_file(spec_path, expand(g.shorthand) + "\n");
    std::set<DigitWord> pairs = g.accepted;
    pairs.insert(g.rejected.begin(), g.rejected.end());
    for (const auto& w : pairs) {
      const auto trace_path = dir / (g.name + "-" + (w.empty() ? "empty" : w) + ".jsonl");
      write_file(trace_path, trace_text(w));
      const Run r = run_cli("check --spec " + spec_path.string() + " " + bindings + " --trace " +
                            trace_path.string());
      const bool member = lang.contains(symbols_of(w));
      const auto verdict = nlohmann::json::parse(r.out, nullptr, false);
      if (r.status != (member ? 0 : 1) || verdict.is_discarded() ||
          verdict.value("accepted", !member) != member) {
        o.fail(g.name + ": binary verdict on '" + w + "' exit " + std::to_string(r.status));
      }
      ++via_binary;
    }

    const Run a = run_cli("dot --spec " + spec_path.string() + " " + bindings);
    const Run b = run_cli("dot --spec " + spec_path.string() + " " + bindings);
    if (a.status != 0 || a.out.empty() || a.out != b.out || a.out != to_dot(*automaton)) {
      o.fail(g.name + ": DOT output not stable");
    }
  }
  std::filesystem::remove_all(dir);
  if (o.pass) {
    o.detail = std::to_string(in_process) + " in-process and " + std::to_string(via_binary) +
               " binary verdicts agree; DOT stable";
  }
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"golden languages", golden_languages},
      {"oracle equivalence", oracle_equivalence},
      {"constraint semantics", constraint_semantics},
      {"live harness", live_harness},
      {"request-response", request_response},
      {"ambiguity validation", ambiguity_validation},
      {"timeout behaviour", timeout_behaviour},
      {"parser round trip", parser_round_trip},
      {"cli conformance", cli_conformance},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& ex) {
      o.fail(std::string("exception: ") + ex.what());
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first << ": "
              << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
