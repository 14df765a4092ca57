#include "ktest/automaton.hpp"

#include <algorithm>
#include <map>
#include <sstream>

namespace ktest {

std::string_view to_string(StateKind k) {
  switch (k) {
    case StateKind::Start: return "start";
    case StateKind::Expect: return "expect";
    case StateKind::Final: return "final";
    case StateKind::Unordered: return "unordered";
    case StateKind::ActiveTrigger: return "trigger";
    case StateKind::ActiveInspect: return "inspect";
    case StateKind::ReqRes: return "reqres";
    case StateKind::Sink: return "sink";
    case StateKind::Plain: return "plain";
  }
  return "?";
}

std::string_view to_string(Decision d) {
  switch (d) {
    case Decision::ConsumeForward: return "forward";
    case Decision::ConsumeDrop: return "drop";
    case Decision::FailDisallowed: return "disallowed";
    case Decision::FailUnexpected: return "unexpected";
  }
  return "?";
}

bool Action::same_as(const Action& other) const {
  if (kind != other.kind) return false;
  if (kind == Kind::Inspect) return inspect == other.inspect;
  return event == other.event && same_port(port, other.port);
}

std::string describe(const Action& a) {
  switch (a.kind) {
    case Action::Kind::Trigger:
      return "trigger " + (a.label.empty() ? describe(a.event) : a.label) + "@" + a.port.id();
    case Action::Kind::Inspect:
      return "inspect" + (a.label.empty() ? std::string() : " " + a.label);
    case Action::Kind::Respond:
      return "respond " + describe(a.event) + "@" + a.port.id();
  }
  return "?";
}

bool Automaton::has_active_states() const {
  return std::any_of(states_.begin(), states_.end(), [](const State& s) {
    return s.kind == StateKind::ActiveTrigger || s.kind == StateKind::ActiveInspect;
  });
}

bool Automaton::has_reqres_states() const {
  return std::any_of(states_.begin(), states_.end(),
                     [](const State& s) { return s.kind == StateKind::ReqRes; });
}

class Compiler {
 public:
  explicit Compiler(const ValidatedSpec& spec) : spec_(spec) {}

  AutomatonPtr run() {
    auto a = std::make_shared<Automaton>();
    a_ = a.get();
    a_->comparators_ = spec_.ast.comparators;
    Fragment root = block(spec_.ast.root, -1);
    finish(root);
    return a;
  }

 private:
  struct Fragment {
    StateId start;
    std::vector<StateId> finals;
  };

  struct Node {
    StateKind kind;
    int block;
    int aux = -1;
    bool alive = true;
  };

  StateId add(StateKind kind, int block, int aux = -1) {
    nodes_.push_back(Node{kind, block, aux});
    return static_cast<StateId>(nodes_.size() - 1);
  }

  void edge(StateId from, StateId to, EdgeKind kind) {
    Edge e{from, to, kind, std::nullopt};
    edges_.push_back(e);
  }
  void symbol_edge(StateId from, StateId to, const Matcher& m) {
    Edge e{from, to, EdgeKind::Symbol, m};
    edges_.push_back(e);
  }
  void guard_edge(StateId from, StateId to, Guard g) {
    Edge e{from, to, EdgeKind::Guard, std::nullopt};
    e.guard = g;
    edges_.push_back(e);
  }

  bool has_incoming(StateId s) const {
    return std::any_of(edges_.begin(), edges_.end(), [&](const Edge& e) { return e.to == s; });
  }
  bool has_outgoing(StateId s) const {
    return std::any_of(edges_.begin(), edges_.end(), [&](const Edge& e) { return e.from == s; });
  }
  bool plain(StateId s) const { return nodes_[s].kind == StateKind::Plain; }

  // Redirects every edge touching `from` to `into` and retires `from`.
  void merge(StateId from, StateId into) {
    for (auto& e : edges_) {
      if (e.from == from) e.from = into;
      if (e.to == from) e.to = into;
    }
    nodes_[from].alive = false;
  }

  Fragment concat(Fragment a, const Fragment& b) {
    if (a.finals.size() == 1) {
      const StateId f = a.finals.front();
      if (plain(f) && !has_outgoing(f) && !has_incoming(b.start) &&
          nodes_[f].block == nodes_[b.start].block && f != b.start) {
        merge(f, b.start);
        return Fragment{a.start == f ? b.start : a.start, b.finals};
      }
    }
    for (StateId f : a.finals) edge(f, b.start, EdgeKind::Epsilon);
    return Fragment{a.start, b.finals};
  }

  Fragment unite(const Fragment& a, const Fragment& b, int owner) {
    if (!has_incoming(a.start) && !has_incoming(b.start) && plain(a.start) && plain(b.start) &&
        nodes_[a.start].block == nodes_[b.start].block) {
      merge(b.start, a.start);
      Fragment out{a.start, a.finals};
      for (StateId f : b.finals) {
        const StateId g = f == b.start ? a.start : f;
        if (std::find(out.finals.begin(), out.finals.end(), g) == out.finals.end()) {
          out.finals.push_back(g);
        }
      }
      return out;
    }
    const StateId s = add(StateKind::Plain, owner);
    edge(s, a.start, EdgeKind::Epsilon);
    edge(s, b.start, EdgeKind::Epsilon);
    Fragment out{s, a.finals};
    for (StateId f : b.finals) {
      if (std::find(out.finals.begin(), out.finals.end(), f) == out.finals.end()) {
        out.finals.push_back(f);
      }
    }
    return out;
  }

  Fragment kleene(Fragment f, int owner) {
    bool minimal = !has_incoming(f.start);
    for (StateId x : f.finals) minimal = minimal && !has_outgoing(x);
    if (!minimal) {
      const StateId s = add(StateKind::Plain, owner);
      const StateId t = add(StateKind::Plain, owner);
      edge(s, f.start, EdgeKind::Epsilon);
      for (StateId x : f.finals) edge(x, t, EdgeKind::Epsilon);
      f = Fragment{s, {t}};
    }
    for (StateId x : f.finals) {
      if (x == f.start) continue;
      edge(f.start, x, EdgeKind::Epsilon);
      edge(x, f.start, EdgeKind::Epsilon);
    }
    return f;
  }

  Fragment list(const BodyList& stmts, int owner) {
    if (stmts.empty()) {
      const StateId s = add(StateKind::Plain, owner);
      return Fragment{s, {s}};
    }
    Fragment acc = stmt(stmts.front(), owner);
    for (std::size_t i = 1; i < stmts.size(); ++i) acc = concat(acc, stmt(stmts[i], owner));
    return acc;
  }

  Fragment gated(StateKind kind, int owner, int aux, Guard g) {
    const StateId s = add(kind, owner, aux);
    const StateId d = add(StateKind::Plain, owner);
    guard_edge(s, d, g);
    return Fragment{s, {d}};
  }

  Fragment active(StateKind kind, int owner, Action action) {
    a_->actions_.push_back(std::move(action));
    const int idx = static_cast<int>(a_->actions_.size() - 1);
    const StateId s = add(kind, owner, idx);
    const StateId d = add(StateKind::Plain, owner);
    Edge e{s, d, EdgeKind::Action, std::nullopt};
    e.action = idx;
    edges_.push_back(e);
    return Fragment{s, {d}};
  }

  Fragment stmt(const BodyStmt& s, int owner) {
    if (const auto* e = s.as<ExpectStmt>()) {
      const StateId a = add(StateKind::Plain, owner);
      const StateId b = add(StateKind::Plain, owner);
      symbol_edge(a, b, e->matcher);
      return Fragment{a, {b}};
    }
    if (const auto* u = s.as<UnorderedStmt>()) {
      if (u->matchers.size() > 64) throw std::invalid_argument("unordered arity above 64");
      a_->unordered_.push_back(u->matchers);
      const int idx = static_cast<int>(a_->unordered_.size() - 1);
      return gated(StateKind::Unordered, owner, idx,
                   Guard{Guard::Op::UnorderedDone, -1, std::nullopt,
                         static_cast<int>(u->matchers.size())});
    }
    if (const auto* m = s.as<ExpectMappedStmt>()) {
      if (m->entries.size() > 64) throw std::invalid_argument("mapper arity above 64");
      a_->reqres_.push_back(m->entries);
      const int idx = static_cast<int>(a_->reqres_.size() - 1);
      return gated(StateKind::ReqRes, owner, idx,
                   Guard{Guard::Op::ReqResDone, -1, std::nullopt,
                         static_cast<int>(m->entries.size())});
    }
    if (const auto* t = s.as<TriggerStmt>()) {
      Action act{Action::Kind::Trigger, t->event, t->port, nullptr, t->label};
      return active(StateKind::ActiveTrigger, owner, std::move(act));
    }
    if (const auto* i = s.as<InspectStmt>()) {
      Action act{Action::Kind::Inspect, Event{EventKind::make("inspect"), nullptr}, PortRef{},
                 i->predicate, i->name};
      return active(StateKind::ActiveInspect, owner, std::move(act));
    }
    if (const auto* ei = s.as<EitherStmt>()) {
      Fragment a = list(ei->first, owner);
      Fragment b = list(ei->second, owner);
      return unite(a, b, owner);
    }
    return block(std::get<Block>(s.node), owner);
  }

  Fragment block(const Block& b, int parent) {
    const int id = next_block_++;
    std::vector<Matcher> expects;
    for (const auto& h : b.headers) {
      if (h.kind == HeaderKind::BlockExpect) {
        expects.insert(expects.end(), h.matchers.begin(), h.matchers.end());
      }
    }
    if (expects.size() > 64) throw std::invalid_argument("blockExpect arity above 64");
    a_->block_expect_.resize(std::max<std::size_t>(a_->block_expect_.size(), id + 1));
    a_->has_frame_.resize(a_->block_expect_.size(), false);
    a_->block_expect_[id] = expects;

    const bool is_root = parent < 0;
    const bool frame = is_root ? true : (!expects.empty() || (b.count && *b.count > 1));
    a_->has_frame_[id] = frame;

    Fragment body = list(b.body, id);
    if (is_root) {
      if (expects.empty()) return body;
      const StateId sink = sink_for(body, id);
      const StateId x = add(StateKind::Plain, id);
      guard_edge(sink, x, Guard{Guard::Op::Pop, id, b.count, 0});
      return Fragment{body.start, {x}};
    }
    if (!frame) {
      if (b.count) return body;
      return kleene(body, id);
    }
    const StateId enter = add(StateKind::Plain, parent);
    guard_edge(enter, body.start, Guard{Guard::Op::Push, id, b.count, 0});
    const StateId sink = sink_for(body, id);
    const StateId exit = add(StateKind::Plain, parent);
    if (!b.count || *b.count > 1) {
      guard_edge(sink, body.start, Guard{Guard::Op::Iterate, id, b.count, 0});
    }
    guard_edge(sink, exit, Guard{Guard::Op::Pop, id, b.count, 0});
    if (!b.count) edge(enter, exit, EdgeKind::Epsilon);
    return Fragment{enter, {exit}};
  }

  StateId sink_for(const Fragment& body, int id) {
    if (body.finals.size() == 1) {
      const StateId f = body.finals.front();
      if (plain(f) && !has_outgoing(f) && nodes_[f].block == id) {
        nodes_[f].kind = StateKind::Sink;
        return f;
      }
    }
    const StateId s = add(StateKind::Sink, id);
    for (StateId f : body.finals) edge(f, s, EdgeKind::Epsilon);
    return s;
  }

  void finish(const Fragment& root) {
    // Renumber live states in creation order.
    std::vector<StateId> remap(nodes_.size(), kNoState);
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (!nodes_[i].alive) continue;
      remap[i] = static_cast<StateId>(a_->states_.size());
      a_->states_.push_back(State{remap[i], nodes_[i].kind, nodes_[i].block, nodes_[i].aux});
    }
    a_->start_ = remap[root.start];
    for (StateId f : root.finals) a_->finals_.push_back(remap[f]);
    for (auto& st : a_->states_) {
      if (st.kind != StateKind::Plain) continue;
      const bool is_final =
          std::find(a_->finals_.begin(), a_->finals_.end(), st.id) != a_->finals_.end();
      if (is_final) {
        st.kind = StateKind::Final;
      } else if (st.id == a_->start_) {
        st.kind = StateKind::Start;
      } else {
        st.kind = StateKind::Expect;
      }
    }
    for (auto e : edges_) {
      e.from = remap[e.from];
      if (e.to != kNoState) e.to = remap[e.to];
      a_->edges_.push_back(std::move(e));
    }
    add_constraints();
    a_->out_.assign(a_->states_.size(), {});
    for (std::size_t i = 0; i < a_->edges_.size(); ++i) {
      a_->out_[a_->edges_[i].from].push_back(static_cast<int>(i));
    }
  }

  void add_constraints() {
    for (const auto& st : a_->states_) {
      if (st.kind == StateKind::ActiveTrigger || st.kind == StateKind::ActiveInspect) continue;
      const bool root_final =
          st.block == 0 &&
          std::find(a_->finals_.begin(), a_->finals_.end(), st.id) != a_->finals_.end();
      if (root_final) continue;
      for (const auto& entry : spec_.constraints[st.block].entries) {
        Edge e{st.id, st.id, EdgeKind::Allow, entry.matcher};
        if (entry.kind == HeaderKind::Drop) e.kind = EdgeKind::Drop;
        if (entry.kind == HeaderKind::Disallow) {
          e.kind = EdgeKind::Disallow;
          e.to = kNoState;
        }
        a_->edges_.push_back(std::move(e));
      }
    }
  }

  const ValidatedSpec& spec_;
  Automaton* a_ = nullptr;
  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  int next_block_ = 0;
};

AutomatonPtr compile(const ValidatedSpec& spec) { return Compiler(spec).run(); }

// -------------------------------------------------------------------- dot

namespace {

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

std::string guard_label(const Guard& g) {
  std::ostringstream os;
  switch (g.op) {
    case Guard::Op::Push:
      os << "enter b" << g.block;
      if (g.count) os << " [n=" << *g.count << "]";
      break;
    case Guard::Op::Iterate:
      os << "[bits(b" << g.block << ") full";
      if (g.count) os << ", n>1";
      os << "] again";
      break;
    case Guard::Op::Pop:
      os << "[bits(b" << g.block << ") full";
      if (g.count) os << ", n=1";
      os << "] exit";
      break;
    case Guard::Op::UnorderedDone:
    case Guard::Op::ReqResDone:
      os << "[bits = " << std::string(static_cast<std::size_t>(g.arity), '1') << "]";
      break;
  }
  return os.str();
}

}  // namespace

std::string to_dot(const Automaton& a) {
  std::ostringstream os;
  os << "digraph automaton {\n";
  os << "  rankdir=LR;\n";
  const bool any_disallow = std::any_of(a.edges().begin(), a.edges().end(), [](const Edge& e) {
    return e.kind == EdgeKind::Disallow;
  });
  for (const auto& s : a.states()) {
    os << "  q" << s.id << " [shape=" << (s.kind == StateKind::Final ? "doublecircle" : "circle");
    std::string label = "q" + std::to_string(s.id);
    switch (s.kind) {
      case StateKind::Unordered: label += "\\nunordered"; break;
      case StateKind::ReqRes: label += "\\nreqres"; break;
      case StateKind::Sink: label += "\\nsink"; break;
      case StateKind::ActiveTrigger:
      case StateKind::ActiveInspect:
        label += "\\n" + escape(describe(a.action(s.aux)));
        break;
      default: break;
    }
    os << ", label=\"" << label << "\"";
    if (s.id == a.start()) os << ", style=bold";
    os << "];\n";
  }
  if (any_disallow) os << "  qerr [shape=box, label=\"error\"];\n";
  for (const auto& e : a.edges()) {
    os << "  q" << e.from << " -> " << (e.to == kNoState ? std::string("qerr")
                                                         : "q" + std::to_string(e.to));
    std::string label;
    switch (e.kind) {
      case EdgeKind::Symbol: label = describe(*e.matcher); break;
      case EdgeKind::Epsilon: label = "ε"; break;
      case EdgeKind::Guard: label = guard_label(e.guard); break;
      case EdgeKind::Action: label = describe(a.action(e.action)); break;
      case EdgeKind::Allow: label = "allow " + describe(*e.matcher); break;
      case EdgeKind::Drop: label = "drop " + describe(*e.matcher); break;
      case EdgeKind::Disallow: label = "disallow " + describe(*e.matcher); break;
    }
    os << " [label=\"" << escape(label) << "\"];\n";
  }
  os << "}\n";
  return os.str();
}

}  // namespace ktest
