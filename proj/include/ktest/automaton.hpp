#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "ktest/spec_ast.hpp"

namespace ktest {

using StateId = int;
constexpr StateId kNoState = -1;

class OracleUnsupported : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AmbiguousRuntimeChoice : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class StateKind {
  Start,
  Expect,
  Final,
  Unordered,
  ActiveTrigger,
  ActiveInspect,
  ReqRes,
  Sink,
  Plain,  // only during construction
};
std::string_view to_string(StateKind k);

struct State {
  StateId id;
  StateKind kind;
  int block;     // owning block id
  int aux = -1;  // index into unordered sets, reqres sets or actions
};

enum class EdgeKind { Symbol, Epsilon, Guard, Action, Allow, Drop, Disallow };

struct Guard {
  enum class Op { Push, Iterate, Pop, UnorderedDone, ReqResDone };
  Op op;
  int block = -1;
  std::optional<unsigned> count;  // Push: nullopt for Kleene
  int arity = 0;                  // *Done: number of bits
};

struct Edge {
  StateId from;
  StateId to;  // kNoState for disallow
  EdgeKind kind;
  std::optional<Matcher> matcher;
  Guard guard{Guard::Op::Push, -1, std::nullopt, 0};
  int action = -1;
};

struct Action {
  enum class Kind { Trigger, Inspect, Respond };
  Kind kind;
  Event event{EventKind::make("none"), nullptr};
  PortRef port;
  std::shared_ptr<const InspectFn> inspect;
  std::string label;

  /// Same action content: triggers/responses by event and port, inspections
  /// by predicate object.
  bool same_as(const Action& other) const;
};
std::string describe(const Action& a);

class Automaton {
 public:
  const std::vector<State>& states() const { return states_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<int>& out_edges(StateId s) const { return out_[s]; }
  StateId start() const { return start_; }
  const std::vector<StateId>& finals() const { return finals_; }
  const State& state(StateId s) const { return states_[s]; }

  std::size_t block_count() const { return block_expect_.size(); }
  const std::vector<Matcher>& block_expect(int block) const { return block_expect_[block]; }
  /// Whether the block keeps a frame (loop counter and requirement bits).
  bool block_has_frame(int block) const { return has_frame_[block]; }
  const std::vector<Matcher>& unordered(int i) const { return unordered_[i]; }
  const std::vector<MappedEntry>& reqres(int i) const { return reqres_[i]; }
  const Action& action(int i) const { return actions_[i]; }
  const ComparatorRegistry& comparators() const { return comparators_; }

  bool has_active_states() const;
  bool has_reqres_states() const;

 private:
  friend class Compiler;
  std::vector<State> states_;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> out_;
  StateId start_ = 0;
  std::vector<StateId> finals_;
  std::vector<std::vector<Matcher>> block_expect_;
  std::vector<bool> has_frame_;
  std::vector<std::vector<Matcher>> unordered_;
  std::vector<std::vector<MappedEntry>> reqres_;
  std::vector<Action> actions_;
  ComparatorRegistry comparators_;
};

using AutomatonPtr = std::shared_ptr<const Automaton>;

AutomatonPtr compile(const ValidatedSpec& spec);

/// Extended-state snapshot of one alternative.
struct FrameState {
  int block;
  unsigned remaining;  // 0 for Kleene frames
  std::uint64_t bits;
  auto operator<=>(const FrameState&) const = default;
};

struct Config {
  StateId state;
  std::vector<FrameState> frames;
  std::uint64_t local = 0;  // unordered / request-response bits of `state`
  auto operator<=>(const Config&) const = default;
};

/// The configuration the simulation starts from before closure.
Config initial_config(const Automaton& a);

std::vector<Config> eclosure(const Automaton& a, const std::vector<Config>& configs);
/// State-level closure: each state starts with the root frame and clear bits.
std::set<StateId> eclosure(const Automaton& a, const std::set<StateId>& states);

enum class Decision { ConsumeForward, ConsumeDrop, FailDisallowed, FailUnexpected };
std::string_view to_string(Decision d);

struct StepOutcome {
  Decision decision;
  std::vector<Action> actions;  // responses produced by request-response states
  bool accepted_now = false;

  bool failed() const {
    return decision == Decision::FailDisallowed || decision == Decision::FailUnexpected;
  }
};

class Simulation {
 public:
  explicit Simulation(AutomatonPtr automaton);

  StepOutcome step(const EventSymbol& observed);
  StepOutcome step(const EventSymbol& observed, const ComparatorRegistry& registry);
  /// Whether step() would not fail on `observed`.
  bool would_consume(const EventSymbol& observed) const;

  bool has_pending_actions() const;
  bool has_passive_alternatives() const;
  /// Actions along the chain of active states reachable without consuming.
  std::vector<Action> pending_actions() const;
  /// Commits to the active alternatives and moves past one active state.
  Action take_action();

  bool is_accepting() const;
  bool failed() const { return failed_; }
  std::vector<std::string> expected() const;
  const std::vector<Config>& configs() const { return configs_; }
  std::set<StateId> states() const;
  const MatchErrors& errors() const { return errors_; }
  const Automaton& automaton() const { return *automaton_; }

 private:
  AutomatonPtr automaton_;
  std::vector<Config> configs_;
  bool failed_ = false;
  MatchErrors errors_;
};

/// Words over the concrete symbols occurring in an automaton.
struct Language {
  std::vector<EventSymbol> alphabet;
  std::set<std::vector<int>> words;

  bool contains(const std::vector<EventSymbol>& word) const;
};

/// Every accepted word of length <= max_len. Passive, concrete automata only.
Language enumerate_language(const Automaton& a, std::size_t max_len);

std::string to_dot(const Automaton& a);

}  // namespace ktest
