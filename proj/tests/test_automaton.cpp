#include <gtest/gtest.h>

#include <random>
#include <regex>

#include "ktest/automaton.hpp"
#include "ktest/spec_text.hpp"
#include "oracle.hpp"

using namespace ktest;
using namespace ktest::testing;

namespace {

using Words = std::set<std::vector<std::string>>;

class AutomatonTest : public ::testing::Test {
 protected:
  Vocabulary v = make_vocabulary(10);

  AutomatonPtr build(const std::string& body,
                     AmbiguityPolicy policy = AmbiguityPolicy::Reject) const {
    const std::string text = body.rfind("repeat", 0) == 0 ? body : "repeat 1 body " + body + " end";
    return compile(validate(parse(text, v.symbols), policy));
  }
  AutomatonPtr build(const SpecAst& ast) const { return compile(validate(ast)); }

  EventSymbol sym(int i) const { return make_symbol(v.events[i], v.port, Direction::In); }

  std::size_t count_edges(const Automaton& a, EdgeKind k) const {
    return static_cast<std::size_t>(std::count_if(a.edges().begin(), a.edges().end(),
                                                  [&](const Edge& e) { return e.kind == k; }));
  }

  bool accepts(const AutomatonPtr& a, const std::vector<int>& word) const {
    Simulation sim(a);
    for (int i : word) {
      if (sim.step(sym(i)).failed()) return false;
    }
    return sim.is_accepting();
  }

  static Words words(const Automaton& a, std::size_t max_len) {
    const Language lang = enumerate_language(a, max_len);
    Words out;
    for (const auto& w : lang.words) {
      std::vector<std::string> names;
      for (int s : w) names.push_back(lang.alphabet[s].event.kind.name());
      out.insert(names);
    }
    return out;
  }
};

std::size_t count(const std::string& text, const std::string& pattern) {
  const std::regex re(pattern);
  return static_cast<std::size_t>(
      std::distance(std::sregex_iterator(text.begin(), text.end(), re), std::sregex_iterator()));
}

}  // namespace

TEST_F(AutomatonTest, ExpectSequenceIsLinear) {
  const auto a = build("expect e1@p:in e2@p:in e3@p:in");
  EXPECT_EQ(a->states().size(), 4u);
  EXPECT_EQ(count_edges(*a, EdgeKind::Symbol), 3u);
  EXPECT_EQ(a->edges().size(), 3u);
  ASSERT_EQ(a->finals().size(), 1u);
  EXPECT_EQ(a->state(a->finals()[0]).kind, StateKind::Final);
}

TEST_F(AutomatonTest, EitherMergesStartStates) {
  const auto a = build("either expect e1@p:in e2@p:in or expect e1@p:in e3@p:in end");
  int from_start = 0;
  for (int idx : a->out_edges(a->start())) {
    const Edge& e = a->edges()[idx];
    if (e.kind == EdgeKind::Symbol && e.matcher && *e.matcher == v.matchers[1]) ++from_start;
  }
  EXPECT_EQ(from_start, 2);
  EXPECT_EQ(a->finals().size(), 2u);
}

TEST_F(AutomatonTest, KleeneHasEpsilonBothWays) {
  const auto a = build("repeat body expect e1@p:in e2@p:in end");
  ASSERT_EQ(a->finals().size(), 1u);
  const StateId q0 = a->start();
  const StateId fin = a->finals()[0];
  bool forward = false;
  bool back = false;
  for (const Edge& e : a->edges()) {
    if (e.kind != EdgeKind::Epsilon) continue;
    forward |= e.from == q0 && e.to == fin;
    back |= e.from == fin && e.to == q0;
  }
  EXPECT_TRUE(forward);
  EXPECT_TRUE(back);

  const std::string dot = to_dot(*a);
  EXPECT_EQ(count(dot, R"(\n  q\d+ \[)"), 3u) << dot;
  EXPECT_EQ(count(dot, R"(->)"), 4u) << dot;
  EXPECT_EQ(count(dot, "ε"), 2u);
}

TEST_F(AutomatonTest, EclosureOfKleeneStart) {
  const auto a = build("repeat body expect e1@p:in e2@p:in end");
  const std::set<StateId> c = eclosure(*a, std::set<StateId>{a->start()});
  EXPECT_EQ(c, (std::set<StateId>{a->start(), a->finals()[0]}));
}

TEST_F(AutomatonTest, EclosureWithoutEpsilonIsIdentity) {
  const auto a = build("expect e1@p:in e2@p:in e3@p:in");
  for (StateId s = 0; s < static_cast<StateId>(a->states().size()); ++s) {
    EXPECT_EQ(eclosure(*a, std::set<StateId>{s}), std::set<StateId>{s});
  }
}

TEST_F(AutomatonTest, SinkWithAllBitsSetReachesExit) {
  const auto a = build("repeat 1 blockExpect e0@p:in body expect e1@p:in end");
  StateId sink = kNoState;
  for (const State& s : a->states()) {
    if (s.kind == StateKind::Sink) sink = s.id;
  }
  ASSERT_NE(sink, kNoState);

  Config cfg{sink, {FrameState{0, 1, 0b1}}, 0};
  const auto closed = eclosure(*a, std::vector<Config>{cfg});
  EXPECT_TRUE(std::any_of(closed.begin(), closed.end(),
                          [&](const Config& c) { return c.state == a->finals()[0]; }));

  cfg.frames[0].bits = 0;
  const auto blocked = eclosure(*a, std::vector<Config>{cfg});
  EXPECT_FALSE(std::any_of(blocked.begin(), blocked.end(),
                           [&](const Config& c) { return c.state == a->finals()[0]; }));
}

TEST_F(AutomatonTest, EclosureIsIdempotent) {
  std::mt19937 rng(7);
  const auto v4 = make_vocabulary(4);
  for (int i = 0; i < 100; ++i) {
    const auto a = compile(validate(random_passive_spec(rng, v4)));
    std::set<StateId> all;
    for (const State& s : a->states()) all.insert(s.id);
    for (StateId s : all) {
      const auto once = eclosure(*a, std::set<StateId>{s});
      EXPECT_EQ(eclosure(*a, once), once);
    }
    Simulation sim(a);
    const auto configs = sim.configs();
    EXPECT_EQ(eclosure(*a, configs), configs);
  }
}

TEST_F(AutomatonTest, StepDecisions) {
  const std::string headed =
      "repeat 1 allow e3@p:in e4@p:in drop e5@p:in body expect e1@p:in e2@p:in end";
  {
    Simulation sim(build(headed));
    const auto before = sim.states();
    EXPECT_EQ(sim.step(sym(3)).decision, Decision::ConsumeForward);
    EXPECT_EQ(sim.states(), before);
    EXPECT_EQ(sim.step(sym(5)).decision, Decision::ConsumeDrop);
    EXPECT_EQ(sim.states(), before);
    EXPECT_EQ(sim.step(sym(1)).decision, Decision::ConsumeForward);
    EXPECT_EQ(sim.step(sym(2)).decision, Decision::ConsumeForward);
    EXPECT_TRUE(sim.is_accepting());
  }
  {
    Simulation sim(build("expect e1@p:in e2@p:in"));
    const auto out = sim.step(sym(2));
    EXPECT_EQ(out.decision, Decision::FailUnexpected);
    EXPECT_TRUE(out.failed());
    EXPECT_TRUE(sim.failed());
  }
  {
    Simulation sim(build("repeat 1 disallow e9@p:in body expect e1@p:in end"));
    EXPECT_EQ(sim.step(sym(9)).decision, Decision::FailDisallowed);
    EXPECT_TRUE(sim.failed());
  }
}

TEST_F(AutomatonTest, AcceptedNowTracksAcceptance) {
  Simulation sim(build("expect e1@p:in e2@p:in"));
  EXPECT_FALSE(sim.step(sym(1)).accepted_now);
  EXPECT_TRUE(sim.step(sym(2)).accepted_now);
}

TEST_F(AutomatonTest, PendingActionsInProgramOrder) {
  Simulation sim(build("expect e1@p:in trigger e2@p:in trigger e3@p:in expect e4@p:in"));
  EXPECT_TRUE(sim.pending_actions().empty());
  EXPECT_FALSE(sim.has_pending_actions());
  sim.step(sym(1));
  const auto actions = sim.pending_actions();
  ASSERT_EQ(actions.size(), 2u);
  EXPECT_EQ(actions[0].kind, Action::Kind::Trigger);
  EXPECT_EQ(actions[0].event, v.events[2]);
  EXPECT_EQ(actions[1].event, v.events[3]);

  EXPECT_EQ(sim.take_action().event, v.events[2]);
  EXPECT_EQ(sim.take_action().event, v.events[3]);
  EXPECT_FALSE(sim.has_pending_actions());
  sim.step(sym(4));
  EXPECT_TRUE(sim.is_accepting());
}

TEST_F(AutomatonTest, BothActiveEitherIsAmbiguousAtRuntime) {
  const auto a = build("either trigger e1@p:in or trigger e2@p:in end", AmbiguityPolicy::Allow);
  Simulation sim(a);
  EXPECT_THROW(sim.pending_actions(), AmbiguousRuntimeChoice);
  EXPECT_THROW(sim.take_action(), AmbiguousRuntimeChoice);
}

TEST_F(AutomatonTest, IsAccepting) {
  EXPECT_TRUE(accepts(build("repeat body expect e1@p:in e2@p:in end"), {}));
  const auto twice = build("repeat 2 body expect e1@p:in e2@p:in end");
  EXPECT_FALSE(accepts(twice, {1, 2}));
  EXPECT_TRUE(accepts(twice, {1, 2, 1, 2}));
  EXPECT_FALSE(accepts(twice, {1, 2, 1, 2, 1, 2}));
  const auto be = build("repeat 1 blockExpect e0@p:in body expect e1@p:in e2@p:in end");
  EXPECT_FALSE(accepts(be, {1, 2}));
  EXPECT_TRUE(accepts(be, {1, 0, 2}));
}

TEST_F(AutomatonTest, EnumerateLanguageExamples) {
  EXPECT_EQ(words(*build("expect unordered e1@p:in e2@p:in end"), 2),
            (Words{{"E1", "E2"}, {"E2", "E1"}}));
  EXPECT_EQ(words(*build("repeat 1 blockExpect e3@p:in body expect e1@p:in e2@p:in end"), 3),
            (Words{{"E3", "E1", "E2"}, {"E1", "E3", "E2"}, {"E1", "E2", "E3"}}));
  const auto mixed = build("expect e1@p:in e2@p:in unordered e3@p:in e4@p:in end e5@p:in");
  EXPECT_TRUE(accepts(mixed, {1, 2, 4, 3, 5}));
  EXPECT_FALSE(accepts(mixed, {2, 1, 3, 4, 5}));
}

TEST_F(AutomatonTest, UnorderedAddsOneState) {
  const std::size_t base = build("expect e0@p:in")->states().size();
  for (int n = 1; n <= 8; ++n) {
    std::string text = "expect e0@p:in unordered";
    for (int i = 1; i <= n; ++i) text += " e" + std::to_string(i) + "@p:in";
    const auto a = build(text + " end");
    EXPECT_EQ(a->states().size(), base + 1) << n;
  }
}

TEST_F(AutomatonTest, KleeneFragmentsAcceptEmpty) {
  std::mt19937 rng(99);
  const auto v4 = make_vocabulary(4);
  for (int i = 0; i < 100; ++i) {
    SpecAst inner = random_passive_spec(rng, v4);
    SpecAst ast;
    Block k;
    k.body = inner.root.body;
    ast.root.body.emplace_back(std::move(k));
    const auto a = compile(validate(ast));
    Simulation sim(a);
    EXPECT_TRUE(sim.is_accepting());
  }
}

TEST_F(AutomatonTest, RepeatUnrollingEquivalence) {
  std::mt19937 rng(5);
  const auto v3 = make_vocabulary(3);
  GenOptions opt;
  opt.max_depth = 2;
  for (int i = 0; i < 60; ++i) {
    const SpecAst inner = random_passive_spec(rng, v3, opt);
    for (unsigned n = 1; n <= 3; ++n) {
      SpecAst looped;
      Block b;
      b.count = n;
      b.headers = inner.root.headers;
      b.body = inner.root.body;
      looped.root.body.emplace_back(b);

      SpecAst unrolled;
      for (unsigned r = 0; r < n; ++r) {
        Block copy;
        copy.count = 1;
        copy.headers = inner.root.headers;
        copy.body = inner.root.body;
        unrolled.root.body.emplace_back(copy);
      }
      EXPECT_EQ(words(*build(looped), 7), words(*build(unrolled), 7)) << i << " n=" << n;
    }
  }
}

TEST_F(AutomatonTest, OracleEquivalence) {
  std::mt19937 rng(1234);
  const auto v4 = make_vocabulary(4);
  const SetSemantics oracle(v4.matchers, 8);
  for (int i = 0; i < 150; ++i) {
    const SpecAst ast = random_passive_spec(rng, v4);
    const Language lang = enumerate_language(*build(ast), 8);
    WordSet got;
    for (const auto& w : lang.words) {
      std::vector<int> mapped;
      for (int s : w) {
        for (std::size_t k = 0; k < v4.events.size(); ++k) {
          if (lang.alphabet[s].event.kind == v4.events[k].kind) mapped.push_back(static_cast<int>(k));
        }
      }
      got.insert(mapped);
    }
    EXPECT_EQ(got, oracle.language(ast)) << i;
  }
}

// Insertion points are the positions before each symbol of an accepted word.
TEST_F(AutomatonTest, DisallowDominance) {
  std::mt19937 rng(42);
  const auto v4 = make_vocabulary(4);
  int checked = 0;
  for (int i = 0; i < 80; ++i) {
    SpecAst ast = random_passive_spec(rng, v4);
    ast.root.headers.push_back(HeaderStmt{HeaderKind::Disallow, {v.matchers[9]}});
    const auto a = build(ast);
    const Language lang = enumerate_language(*a, 5);
    for (const auto& w : lang.words) {
      for (std::size_t at = 0; at < w.size(); ++at) {
        Simulation sim(a);
        for (std::size_t k = 0; k < at; ++k) ASSERT_FALSE(sim.step(lang.alphabet[w[k]]).failed());
        EXPECT_EQ(sim.step(sym(9)).decision, Decision::FailDisallowed) << i;
        ++checked;
      }
    }
  }
  EXPECT_GT(checked, 100);
}

TEST_F(AutomatonTest, InnerDisallowShadowsOuterAllow) {
  const auto a = build(
      "repeat 1 allow e9@p:in body expect e1@p:in "
      "repeat 1 disallow e9@p:in body expect e2@p:in e3@p:in end expect e4@p:in end");
  {
    Simulation sim(a);
    EXPECT_EQ(sim.step(sym(9)).decision, Decision::ConsumeForward);
    sim.step(sym(1));
    EXPECT_EQ(sim.step(sym(9)).decision, Decision::ConsumeForward);
  }
  {
    Simulation sim(a);
    sim.step(sym(1));
    sim.step(sym(2));
    EXPECT_EQ(sim.step(sym(9)).decision, Decision::FailDisallowed);
  }
  {
    Simulation sim(a);
    for (int i : {1, 2, 3}) sim.step(sym(i));
    EXPECT_EQ(sim.step(sym(9)).decision, Decision::ConsumeForward);
    EXPECT_FALSE(sim.step(sym(4)).failed());
    EXPECT_TRUE(sim.is_accepting());
  }
}

TEST_F(AutomatonTest, DotIsDeterministic) {
  const std::string text = "repeat 2 allow e3@p:in body either expect e1@p:in or expect e2@p:in end end";
  EXPECT_EQ(to_dot(*build(text)), to_dot(*build(text)));

  const std::string single = to_dot(*build("expect e1@p:in"));
  EXPECT_EQ(count(single, R"(\n  q\d+ \[)"), 2u) << single;
  EXPECT_EQ(count(single, "->"), 1u);
  EXPECT_NE(single.find("doublecircle"), std::string::npos);
}

TEST_F(AutomatonTest, OracleRejectsActiveAutomata) {
  EXPECT_THROW(enumerate_language(*build("trigger e1@p:in"), 3), OracleUnsupported);
  EXPECT_TRUE(build("trigger e1@p:in")->has_active_states());
  EXPECT_FALSE(build("expect e1@p:in")->has_active_states());
}
