#include <algorithm>
#include <map>

#include "ktest/automaton.hpp"

namespace ktest {

namespace {

std::uint64_t full_mask(std::size_t n) {
  return n >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << n) - 1;
}

bool is_active_state(const State& s) {
  return s.kind == StateKind::ActiveTrigger || s.kind == StateKind::ActiveInspect;
}

// Applies a guard to `c`; false when the condition does not hold.
bool apply_guard(const Automaton& a, const Guard& g, Config& c) {
  switch (g.op) {
    case Guard::Op::Push:
      c.frames.push_back(FrameState{g.block, g.count.value_or(0), 0});
      return true;
    case Guard::Op::Iterate:
    case Guard::Op::Pop: {
      if (c.frames.empty() || c.frames.back().block != g.block) return false;
      FrameState& f = c.frames.back();
      if (f.bits != full_mask(a.block_expect(g.block).size())) return false;
      if (g.op == Guard::Op::Iterate) {
        if (g.count) {
          if (f.remaining <= 1) return false;
          --f.remaining;
        }
        f.bits = 0;
      } else {
        if (g.count && f.remaining != 1) return false;
        c.frames.pop_back();
      }
      return true;
    }
    case Guard::Op::UnorderedDone:
    case Guard::Op::ReqResDone:
      if (c.local != full_mask(static_cast<std::size_t>(g.arity))) return false;
      c.local = 0;
      return true;
  }
  return false;
}

}  // namespace

Config initial_config(const Automaton& a) {
  return Config{a.start(), {FrameState{0, 1, 0}}, 0};
}

std::vector<Config> eclosure(const Automaton& a, const std::vector<Config>& configs) {
  std::set<Config> seen(configs.begin(), configs.end());
  std::vector<Config> work(seen.begin(), seen.end());
  while (!work.empty()) {
    Config c = std::move(work.back());
    work.pop_back();
    if (is_active_state(a.state(c.state))) continue;
    for (int ei : a.out_edges(c.state)) {
      const Edge& e = a.edges()[ei];
      Config n = c;
      if (e.kind == EdgeKind::Epsilon) {
        n.state = e.to;
      } else if (e.kind == EdgeKind::Guard) {
        if (!apply_guard(a, e.guard, n)) continue;
        n.state = e.to;
      } else {
        continue;
      }
      if (seen.insert(n).second) work.push_back(std::move(n));
    }
  }
  return {seen.begin(), seen.end()};
}

std::set<StateId> eclosure(const Automaton& a, const std::set<StateId>& states) {
  std::vector<Config> cs;
  for (StateId s : states) cs.push_back(Config{s, {FrameState{0, 1, 0}}, 0});
  std::set<StateId> out;
  for (const auto& c : eclosure(a, cs)) out.insert(c.state);
  return out;
}

Simulation::Simulation(AutomatonPtr automaton) : automaton_(std::move(automaton)) {
  configs_ = eclosure(*automaton_, {initial_config(*automaton_)});
}

StepOutcome Simulation::step(const EventSymbol& observed) {
  return step(observed, automaton_->comparators());
}

StepOutcome Simulation::step(const EventSymbol& observed, const ComparatorRegistry& registry) {
  const Automaton& a = *automaton_;
  std::set<Config> next;
  bool all_drop = true;
  bool disallowed = false;
  std::vector<Action> responses;
  std::map<std::pair<int, int>, std::optional<Event>> mapped;

  auto add = [&](Config c, bool drop) {
    next.insert(std::move(c));
    if (!drop) all_drop = false;
  };

  for (const auto& c : configs_) {
    const State& st = a.state(c.state);
    if (is_active_state(st)) continue;
    for (int ei : a.out_edges(c.state)) {
      const Edge& e = a.edges()[ei];
      switch (e.kind) {
        case EdgeKind::Symbol:
          if (matches(*e.matcher, observed, registry, &errors_)) {
            Config n = c;
            n.state = e.to;
            add(std::move(n), false);
          }
          break;
        case EdgeKind::Allow:
          if (matches(*e.matcher, observed, registry, &errors_)) add(c, false);
          break;
        case EdgeKind::Drop:
          if (matches(*e.matcher, observed, registry, &errors_)) add(c, true);
          break;
        case EdgeKind::Disallow:
          if (matches(*e.matcher, observed, registry, &errors_)) disallowed = true;
          break;
        default:
          break;
      }
    }
    if (st.kind == StateKind::Unordered) {
      const auto& ms = a.unordered(st.aux);
      for (std::size_t i = 0; i < ms.size(); ++i) {
        const std::uint64_t bit = std::uint64_t{1} << i;
        if ((c.local & bit) == 0 && matches(ms[i], observed, registry, &errors_)) {
          Config n = c;
          n.local |= bit;
          add(std::move(n), false);
        }
      }
    }
    if (st.kind == StateKind::ReqRes && observed.direction == Direction::Out) {
      const auto& entries = a.reqres(st.aux);
      for (std::size_t i = 0; i < entries.size(); ++i) {
        const std::uint64_t bit = std::uint64_t{1} << i;
        const MappedEntry& en = entries[i];
        if ((c.local & bit) != 0 || !same_port(en.request_port, observed.port) ||
            !observed.event.kind.is_assignable_to(en.request_kind)) {
          continue;
        }
        const auto key = std::make_pair(st.aux, static_cast<int>(i));
        auto it = mapped.find(key);
        if (it == mapped.end()) {
          std::optional<Event> response;
          try {
            response = (*en.mapper)(observed.event);
          } catch (const std::exception& ex) {
            errors_.push_back("mapper for " + en.request_kind.name() + ": " + ex.what());
          }
          it = mapped.emplace(key, std::move(response)).first;
        }
        if (!it->second) continue;
        Action r{Action::Kind::Respond, *it->second, en.response_port, nullptr, {}};
        if (std::none_of(responses.begin(), responses.end(),
                         [&](const Action& x) { return x.same_as(r); })) {
          responses.push_back(std::move(r));
        }
        Config n = c;
        n.local |= bit;
        add(std::move(n), false);
        break;
      }
    }
    for (std::size_t fi = 0; fi < c.frames.size(); ++fi) {
      const auto& ms = a.block_expect(c.frames[fi].block);
      for (std::size_t i = 0; i < ms.size(); ++i) {
        const std::uint64_t bit = std::uint64_t{1} << i;
        if ((c.frames[fi].bits & bit) == 0 && matches(ms[i], observed, registry, &errors_)) {
          Config n = c;
          n.frames[fi].bits |= bit;
          add(std::move(n), false);
        }
      }
    }
  }

  StepOutcome out;
  if (next.empty()) {
    failed_ = true;
    out.decision = disallowed ? Decision::FailDisallowed : Decision::FailUnexpected;
    return out;
  }
  out.decision = all_drop ? Decision::ConsumeDrop : Decision::ConsumeForward;
  out.actions = std::move(responses);
  configs_ = eclosure(a, std::vector<Config>(next.begin(), next.end()));
  out.accepted_now = is_accepting();
  return out;
}

bool Simulation::would_consume(const EventSymbol& observed) const {
  Simulation copy = *this;
  return !copy.step(observed).failed();
}

bool Simulation::has_pending_actions() const {
  return std::any_of(configs_.begin(), configs_.end(), [&](const Config& c) {
    return is_active_state(automaton_->state(c.state));
  });
}

bool Simulation::has_passive_alternatives() const {
  return std::any_of(configs_.begin(), configs_.end(), [&](const Config& c) {
    return !is_active_state(automaton_->state(c.state));
  });
}

Action Simulation::take_action() {
  const Automaton& a = *automaton_;
  std::optional<Action> chosen;
  std::vector<Config> advanced;
  for (const auto& c : configs_) {
    const State& st = a.state(c.state);
    if (!is_active_state(st)) continue;
    const Action& act = a.action(st.aux);
    if (!chosen) {
      chosen = act;
    } else if (!chosen->same_as(act)) {
      throw AmbiguousRuntimeChoice("alternatives demand different actions: " +
                                   describe(*chosen) + " vs " + describe(act));
    }
    for (int ei : a.out_edges(c.state)) {
      const Edge& e = a.edges()[ei];
      if (e.kind != EdgeKind::Action) continue;
      Config n = c;
      n.state = e.to;
      advanced.push_back(std::move(n));
    }
  }
  if (!chosen) throw std::logic_error("no pending action");
  configs_ = eclosure(a, advanced);
  return *chosen;
}

std::vector<Action> Simulation::pending_actions() const {
  std::vector<Action> out;
  if (!has_pending_actions()) return out;
  Simulation copy = *this;
  do {
    out.push_back(copy.take_action());
  } while (copy.has_pending_actions() && !copy.has_passive_alternatives());
  return out;
}

bool Simulation::is_accepting() const {
  return std::any_of(configs_.begin(), configs_.end(), [&](const Config& c) {
    return automaton_->state(c.state).kind == StateKind::Final;
  });
}

std::set<StateId> Simulation::states() const {
  std::set<StateId> out;
  for (const auto& c : configs_) out.insert(c.state);
  return out;
}

std::vector<std::string> Simulation::expected() const {
  const Automaton& a = *automaton_;
  std::vector<std::string> out;
  auto push = [&](std::string s) {
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(std::move(s));
  };
  for (const auto& c : configs_) {
    const State& st = a.state(c.state);
    if (is_active_state(st)) {
      push(describe(a.action(st.aux)));
      continue;
    }
    for (int ei : a.out_edges(c.state)) {
      const Edge& e = a.edges()[ei];
      if (e.kind == EdgeKind::Symbol) push(describe(*e.matcher));
    }
    if (st.kind == StateKind::Unordered) {
      const auto& ms = a.unordered(st.aux);
      for (std::size_t i = 0; i < ms.size(); ++i) {
        if ((c.local & (std::uint64_t{1} << i)) == 0) push(describe(ms[i]));
      }
    }
    if (st.kind == StateKind::ReqRes) {
      const auto& es = a.reqres(st.aux);
      for (std::size_t i = 0; i < es.size(); ++i) {
        if ((c.local & (std::uint64_t{1} << i)) == 0) {
          push(es[i].request_kind.name() + "?@" + es[i].request_port.id() + ":out");
        }
      }
    }
    for (const auto& f : c.frames) {
      const auto& ms = a.block_expect(f.block);
      for (std::size_t i = 0; i < ms.size(); ++i) {
        if ((f.bits & (std::uint64_t{1} << i)) == 0) push(describe(ms[i]));
      }
    }
  }
  return out;
}

// ------------------------------------------------------------------ oracle

bool Language::contains(const std::vector<EventSymbol>& word) const {
  std::vector<int> idx;
  for (const auto& s : word) {
    auto it = std::find(alphabet.begin(), alphabet.end(), s);
    if (it == alphabet.end()) return false;
    idx.push_back(static_cast<int>(it - alphabet.begin()));
  }
  return words.count(idx) > 0;
}

Language enumerate_language(const Automaton& a, std::size_t max_len) {
  if (a.has_active_states() || a.has_reqres_states()) {
    throw OracleUnsupported("automaton has active or request-response states");
  }
  Language lang;
  auto collect = [&](const Matcher& m) {
    const Event* e = m.concrete_event();
    if (e == nullptr) throw OracleUnsupported("predicate matchers have no finite alphabet");
    EventSymbol s{*e, m.port, m.direction};
    if (std::find(lang.alphabet.begin(), lang.alphabet.end(), s) == lang.alphabet.end()) {
      lang.alphabet.push_back(std::move(s));
    }
  };
  for (const auto& e : a.edges()) {
    if (e.matcher) collect(*e.matcher);
  }
  for (const auto& st : a.states()) {
    if (st.kind == StateKind::Unordered) {
      for (const auto& m : a.unordered(st.aux)) collect(m);
    }
  }
  for (std::size_t b = 0; b < a.block_count(); ++b) {
    for (const auto& m : a.block_expect(static_cast<int>(b))) collect(m);
  }

  AutomatonPtr view(&a, [](const Automaton*) {});
  std::vector<std::pair<std::vector<int>, Simulation>> layer;
  layer.emplace_back(std::vector<int>{}, Simulation(view));
  if (layer.front().second.is_accepting()) lang.words.insert(std::vector<int>{});
  for (std::size_t len = 1; len <= max_len && !layer.empty(); ++len) {
    std::vector<std::pair<std::vector<int>, Simulation>> next;
    for (const auto& [word, sim] : layer) {
      for (std::size_t i = 0; i < lang.alphabet.size(); ++i) {
        Simulation s = sim;
        if (s.step(lang.alphabet[i]).failed()) continue;
        std::vector<int> w = word;
        w.push_back(static_cast<int>(i));
        if (s.is_accepting()) lang.words.insert(w);
        if (len < max_len) next.emplace_back(std::move(w), std::move(s));
      }
    }
    layer = std::move(next);
  }
  return lang;
}

}  // namespace ktest
