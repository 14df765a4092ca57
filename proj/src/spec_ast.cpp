#include "ktest/spec_ast.hpp"

#include <algorithm>

namespace ktest {

std::string_view to_string(HeaderKind k) {
  switch (k) {
    case HeaderKind::Allow: return "allow";
    case HeaderKind::Disallow: return "disallow";
    case HeaderKind::Drop: return "drop";
    case HeaderKind::BlockExpect: return "blockExpect";
  }
  return "?";
}

bool operator==(const HeaderStmt& a, const HeaderStmt& b) {
  return a.kind == b.kind && a.matchers == b.matchers;
}

bool operator==(const MappedEntry& a, const MappedEntry& b) {
  return a.request_kind == b.request_kind && same_port(a.request_port, b.request_port) &&
         same_port(a.response_port, b.response_port) && a.mapper == b.mapper;
}

namespace {

struct StmtEq {
  const BodyStmt& other;

  bool operator()(const ExpectStmt& a) const {
    return a.matcher == std::get<ExpectStmt>(other.node).matcher;
  }
  bool operator()(const TriggerStmt& a) const {
    const auto& b = std::get<TriggerStmt>(other.node);
    return a.event == b.event && same_port(a.port, b.port);
  }
  bool operator()(const InspectStmt& a) const {
    const auto& b = std::get<InspectStmt>(other.node);
    return a.predicate == b.predicate;
  }
  bool operator()(const UnorderedStmt& a) const {
    return a.matchers == std::get<UnorderedStmt>(other.node).matchers;
  }
  bool operator()(const EitherStmt& a) const {
    const auto& b = std::get<EitherStmt>(other.node);
    return a.first == b.first && a.second == b.second;
  }
  bool operator()(const Block& a) const { return a == std::get<Block>(other.node); }
  bool operator()(const ExpectMappedStmt& a) const {
    return a.entries == std::get<ExpectMappedStmt>(other.node).entries;
  }
};

}  // namespace

bool operator==(const BodyStmt& a, const BodyStmt& b) {
  if (a.node.index() != b.node.index()) return false;
  return std::visit(StmtEq{b}, a.node);
}

bool operator==(const Block& a, const Block& b) {
  return a.count == b.count && a.headers == b.headers && a.body == b.body;
}

bool operator==(const SpecAst& a, const SpecAst& b) {
  return a.root == b.root && a.timeout == b.timeout;
}

bool is_active(const BodyStmt& s) {
  return std::holds_alternative<TriggerStmt>(s.node) || std::holds_alternative<InspectStmt>(s.node);
}

// ---------------------------------------------------------------- builder

SpecBuilder::SpecBuilder() {
  Frame root;
  root.kind = FrameKind::Block;
  root.block.count = 1;
  stack_.push_back(std::move(root));
}

SpecBuilder& SpecBuilder::set_comparator(const EventKind& kind, Comparator cmp) {
  if (stack_.size() != 1 || top().in_body) {
    throw StructureError("set_comparator is only allowed in the root header");
  }
  comparators_.register_comparator(kind, std::move(cmp));
  return *this;
}

SpecBuilder& SpecBuilder::set_timeout(std::chrono::milliseconds timeout) {
  if (stack_.size() != 1 || top().in_body) {
    throw StructureError("set_timeout is only allowed in the root header");
  }
  if (timeout.count() <= 0) throw StructureError("timeout must be positive");
  timeout_ = timeout;
  return *this;
}

SpecBuilder& SpecBuilder::body() {
  Frame& f = top();
  if (f.kind != FrameKind::Block) throw StructureError("body() outside a block");
  if (f.in_body) throw StructureError("body() called twice for one block");
  f.in_body = true;
  return *this;
}

BodyList& SpecBuilder::statements(const char* op) {
  Frame& f = top();
  switch (f.kind) {
    case FrameKind::Block:
      if (!f.in_body) throw StructureError(std::string(op) + " before body()");
      return f.block.body;
    case FrameKind::Either:
      return f.in_body ? f.either.second : f.either.first;
    case FrameKind::Unordered:
      throw StructureError(std::string(op) + " inside unordered");
    case FrameKind::Mapped:
      throw StructureError(std::string(op) + " inside expect_with_mapper");
  }
  throw StructureError(op);
}

void SpecBuilder::add_statement(BodyStmt s, const char* op) {
  statements(op).push_back(std::move(s));
}

SpecBuilder& SpecBuilder::repeat(unsigned count) {
  if (count == 0) throw StructureError("repeat count must be positive");
  statements("repeat");
  Frame f;
  f.kind = FrameKind::Block;
  f.block.count = count;
  stack_.push_back(std::move(f));
  return *this;
}

SpecBuilder& SpecBuilder::repeat() {
  statements("repeat");
  Frame f;
  f.kind = FrameKind::Block;
  f.block.count = std::nullopt;
  stack_.push_back(std::move(f));
  return *this;
}

SpecBuilder& SpecBuilder::end() {
  if (stack_.size() == 1) throw StructureError("unbalanced end()");
  Frame f = std::move(top());
  stack_.pop_back();
  std::optional<BodyStmt> stmt;
  switch (f.kind) {
    case FrameKind::Block:
      if (!f.in_body) throw StructureError("end() before body()");
      stmt = BodyStmt{std::move(f.block)};
      break;
    case FrameKind::Either:
      if (!f.in_body) throw StructureError("either without or_()");
      if (f.either.first.empty() || f.either.second.empty()) {
        throw StructureError("either/or branches must be non-empty");
      }
      stmt = BodyStmt{std::move(f.either)};
      break;
    case FrameKind::Unordered:
      if (f.unordered.empty()) throw StructureError("empty unordered");
      stmt = BodyStmt{UnorderedStmt{std::move(f.unordered)}};
      break;
    case FrameKind::Mapped:
      if (f.mapped.empty()) throw StructureError("empty expect_with_mapper");
      stmt = BodyStmt{ExpectMappedStmt{std::move(f.mapped)}};
      break;
  }
  add_statement(std::move(*stmt), "end");
  return *this;
}

SpecBuilder& SpecBuilder::header(HeaderKind kind, std::vector<Matcher> ms, const char* op) {
  Frame& f = top();
  if (f.kind != FrameKind::Block || f.in_body) {
    throw StructureError(std::string(op) + " is only allowed in a block header");
  }
  if (ms.empty()) throw StructureError(std::string(op) + " needs at least one symbol");
  f.block.headers.push_back(HeaderStmt{kind, std::move(ms)});
  return *this;
}

SpecBuilder& SpecBuilder::allow(Matcher m) { return allow(std::vector<Matcher>{std::move(m)}); }
SpecBuilder& SpecBuilder::allow(std::vector<Matcher> ms) {
  return header(HeaderKind::Allow, std::move(ms), "allow");
}
SpecBuilder& SpecBuilder::disallow(Matcher m) {
  return disallow(std::vector<Matcher>{std::move(m)});
}
SpecBuilder& SpecBuilder::disallow(std::vector<Matcher> ms) {
  return header(HeaderKind::Disallow, std::move(ms), "disallow");
}
SpecBuilder& SpecBuilder::drop(Matcher m) { return drop(std::vector<Matcher>{std::move(m)}); }
SpecBuilder& SpecBuilder::drop(std::vector<Matcher> ms) {
  return header(HeaderKind::Drop, std::move(ms), "drop");
}
SpecBuilder& SpecBuilder::block_expect(Matcher m) {
  return block_expect(std::vector<Matcher>{std::move(m)});
}
SpecBuilder& SpecBuilder::block_expect(std::vector<Matcher> ms) {
  return header(HeaderKind::BlockExpect, std::move(ms), "blockExpect");
}
SpecBuilder& SpecBuilder::allow(const Event& e, const PortRef& p, Direction d) {
  return allow(match_event(e, p, d));
}
SpecBuilder& SpecBuilder::disallow(const Event& e, const PortRef& p, Direction d) {
  return disallow(match_event(e, p, d));
}
SpecBuilder& SpecBuilder::drop(const Event& e, const PortRef& p, Direction d) {
  return drop(match_event(e, p, d));
}
SpecBuilder& SpecBuilder::block_expect(const Event& e, const PortRef& p, Direction d) {
  return block_expect(match_event(e, p, d));
}

SpecBuilder& SpecBuilder::expect(Matcher m) {
  if (top().kind == FrameKind::Unordered) {
    top().unordered.push_back(std::move(m));
    return *this;
  }
  add_statement(BodyStmt{ExpectStmt{std::move(m)}}, "expect");
  return *this;
}

SpecBuilder& SpecBuilder::expect(const Event& e, const PortRef& p, Direction d) {
  return expect(match_event(e, p, d));
}

SpecBuilder& SpecBuilder::expect(const EventKind& kind, EventPredicate pred, const PortRef& p,
                                 Direction d) {
  return expect(match_kind(kind, std::move(pred), p, d));
}

SpecBuilder& SpecBuilder::expect(const EventKind& request_kind, const PortRef& request_port,
                                 const PortRef& response_port, Mapper mapper) {
  return expect(MappedEntry{request_kind, request_port, response_port,
                            std::make_shared<const Mapper>(std::move(mapper))});
}

SpecBuilder& SpecBuilder::expect(MappedEntry entry) {
  if (top().kind != FrameKind::Mapped) {
    throw StructureError("mapper expectations are only allowed inside expect_with_mapper");
  }
  top().mapped.push_back(std::move(entry));
  return *this;
}

SpecBuilder& SpecBuilder::trigger(const Event& e, const PortRef& p, std::string label) {
  add_statement(BodyStmt{TriggerStmt{e, p, std::move(label)}}, "trigger");
  return *this;
}

SpecBuilder& SpecBuilder::inspect(InspectFn fn, std::string name) {
  return inspect(std::make_shared<const InspectFn>(std::move(fn)), std::move(name));
}

SpecBuilder& SpecBuilder::inspect(std::shared_ptr<const InspectFn> fn, std::string name) {
  add_statement(BodyStmt{InspectStmt{std::move(fn), std::move(name)}}, "inspect");
  return *this;
}

SpecBuilder& SpecBuilder::unordered() {
  statements("unordered");
  Frame f;
  f.kind = FrameKind::Unordered;
  stack_.push_back(std::move(f));
  return *this;
}

SpecBuilder& SpecBuilder::either() {
  statements("either");
  Frame f;
  f.kind = FrameKind::Either;
  stack_.push_back(std::move(f));
  return *this;
}

SpecBuilder& SpecBuilder::or_() {
  Frame& f = top();
  if (f.kind != FrameKind::Either) throw StructureError("or_() outside either()");
  if (f.in_body) throw StructureError("or_() called twice");
  if (f.either.first.empty()) throw StructureError("empty either branch");
  f.in_body = true;
  return *this;
}

SpecBuilder& SpecBuilder::expect_with_mapper() {
  statements("expect_with_mapper");
  Frame f;
  f.kind = FrameKind::Mapped;
  stack_.push_back(std::move(f));
  return *this;
}

bool SpecBuilder::complete() const { return stack_.size() == 1; }

SpecAst SpecBuilder::build() const {
  if (stack_.size() != 1) throw StructureError("unclosed construct; missing end()");
  SpecAst ast;
  ast.root = stack_.front().block;
  ast.comparators = comparators_;
  ast.timeout = timeout_;
  return ast;
}

// ------------------------------------------------------------- validation

std::optional<HeaderKind> ConstraintTable::lookup(const Matcher& m) const {
  for (const auto& e : entries) {
    if (same_constraint_target(e.matcher, m)) return e.kind;
  }
  return std::nullopt;
}

namespace {

bool body_has_block_expect(const Block& b) {
  return std::any_of(b.headers.begin(), b.headers.end(),
                     [](const HeaderStmt& h) { return h.kind == HeaderKind::BlockExpect; });
}

bool starts_passive(const BodyList& list, std::size_t from = 0);

bool stmt_starts_passive(const BodyList& list, std::size_t i) {
  const BodyStmt& s = list[i];
  if (const auto* e = s.as<EitherStmt>()) {
    return starts_passive(e->first) && starts_passive(e->second);
  }
  if (const auto* b = s.as<Block>()) {
    if (!starts_passive(b->body)) return false;
    // A skippable Kleene block also exposes whatever follows it.
    if (!b->count) return i + 1 >= list.size() || starts_passive(list, i + 1);
    return true;
  }
  return !is_active(s);
}

bool starts_passive(const BodyList& list, std::size_t from) {
  if (from >= list.size()) return false;
  return stmt_starts_passive(list, from);
}

bool starts_active(const BodyList& list) {
  if (list.empty()) return false;
  const BodyStmt& s = list.front();
  if (is_active(s)) return true;
  if (const auto* e = s.as<EitherStmt>()) return starts_active(e->first) || starts_active(e->second);
  if (const auto* b = s.as<Block>()) return starts_active(b->body);
  return false;
}

struct PredicateKey {
  EventKind kind;
  std::uint64_t port;
  Direction dir;
  friend bool operator==(const PredicateKey& a, const PredicateKey& b) {
    return a.kind == b.kind && a.port == b.port && a.dir == b.dir;
  }
};

std::optional<PredicateKey> key_of(const Matcher& m) {
  if (const auto* p = m.predicate_match()) {
    return PredicateKey{p->kind, m.port.pair_uid(), m.direction};
  }
  return std::nullopt;
}

struct FirstSet {
  std::vector<PredicateKey> keys;
  bool nullable = true;
};

void add_keys(std::vector<PredicateKey>& out, const std::vector<Matcher>& ms) {
  for (const auto& m : ms) {
    if (auto k = key_of(m)) out.push_back(*k);
  }
}

FirstSet first_of(const BodyList& list, std::size_t from = 0);

FirstSet first_of_stmt(const BodyStmt& s) {
  FirstSet f;
  if (const auto* e = s.as<ExpectStmt>()) {
    if (auto k = key_of(e->matcher)) f.keys.push_back(*k);
    f.nullable = false;
  } else if (const auto* u = s.as<UnorderedStmt>()) {
    add_keys(f.keys, u->matchers);
    f.nullable = false;
  } else if (const auto* ei = s.as<EitherStmt>()) {
    FirstSet a = first_of(ei->first);
    FirstSet b = first_of(ei->second);
    f.keys = a.keys;
    f.keys.insert(f.keys.end(), b.keys.begin(), b.keys.end());
    f.nullable = a.nullable || b.nullable;
  } else if (const auto* b = s.as<Block>()) {
    FirstSet inner = first_of(b->body);
    f.keys = inner.keys;
    for (const auto& h : b->headers) {
      if (h.kind == HeaderKind::BlockExpect) add_keys(f.keys, h.matchers);
    }
    f.nullable = !b->count || (inner.nullable && !body_has_block_expect(*b));
  } else if (s.as<ExpectMappedStmt>() != nullptr) {
    f.nullable = false;
  }
  // Trigger and inspect consume nothing.
  return f;
}

FirstSet first_of(const BodyList& list, std::size_t from) {
  FirstSet f;
  for (std::size_t i = from; i < list.size(); ++i) {
    FirstSet s = first_of_stmt(list[i]);
    f.keys.insert(f.keys.end(), s.keys.begin(), s.keys.end());
    if (!s.nullable) {
      f.nullable = false;
      return f;
    }
  }
  return f;
}

bool has_duplicate(const std::vector<PredicateKey>& keys) {
  for (std::size_t i = 0; i < keys.size(); ++i) {
    for (std::size_t j = i + 1; j < keys.size(); ++j) {
      if (keys[i] == keys[j]) return true;
    }
  }
  return false;
}

bool intersects(const std::vector<PredicateKey>& a, const std::vector<PredicateKey>& b) {
  for (const auto& x : a) {
    if (std::find(b.begin(), b.end(), x) != b.end()) return true;
  }
  return false;
}

class Validator {
 public:
  explicit Validator(AmbiguityPolicy policy) : policy_(policy) {}

  std::vector<ConstraintTable> tables;

  void block(const Block& b, const ConstraintTable& inherited, const std::string& path) {
    ConstraintTable table = inherited;
    std::vector<PredicateKey> expect_keys;
    for (const auto& h : b.headers) {
      if (h.kind == HeaderKind::BlockExpect) {
        add_keys(expect_keys, h.matchers);
        continue;
      }
      for (const auto& m : h.matchers) {
        auto& es = table.entries;
        es.erase(std::remove_if(es.begin(), es.end(),
                                [&](const ConstraintTable::Entry& e) {
                                  return same_constraint_target(e.matcher, m);
                                }),
                 es.end());
        es.push_back(ConstraintTable::Entry{m, h.kind});
      }
    }
    if (check() && has_duplicate(expect_keys)) {
      throw AmbiguousSpec(path + "/blockExpect",
                          "two predicate requirements share kind, port and direction");
    }
    if (check() && !b.count && !starts_passive(b.body)) {
      throw AmbiguousSpec(path, "Kleene block has no expectation at its entry");
    }
    tables.push_back(table);
    list(b.body, table, path + "/body");
  }

  void list(const BodyList& stmts, const ConstraintTable& table, const std::string& prefix) {
    for (std::size_t i = 0; i < stmts.size(); ++i) {
      const std::string path = prefix + "[" + std::to_string(i) + "]";
      const BodyStmt& s = stmts[i];
      if (const auto* u = s.as<UnorderedStmt>()) {
        std::vector<PredicateKey> keys;
        add_keys(keys, u->matchers);
        if (check() && has_duplicate(keys)) {
          throw AmbiguousSpec(path + "/unordered",
                              "two predicate matchers share kind, port and direction");
        }
      } else if (const auto* e = s.as<EitherStmt>()) {
        if (check() && starts_active(e->first) && starts_active(e->second)) {
          throw AmbiguousSpec(path + "/either", "both branches begin with an active statement");
        }
        if (check() && intersects(first_of(e->first).keys, first_of(e->second).keys)) {
          throw AmbiguousSpec(path + "/either",
                              "both branches begin with the same predicate signature");
        }
        list(e->first, table, path + "/either.first");
        list(e->second, table, path + "/either.or");
      } else if (const auto* b = s.as<Block>()) {
        if (check() && !b->count &&
            intersects(first_of(b->body).keys, first_of(stmts, i + 1).keys)) {
          throw AmbiguousSpec(path + "/repeat",
                              "loop entry and continuation share a predicate signature");
        }
        block(*b, table, path + "/repeat");
      }
    }
  }

 private:
  bool check() const { return policy_ == AmbiguityPolicy::Reject; }
  AmbiguityPolicy policy_;
};

void walk_blocks(const Block& b, int depth,
                 const std::function<void(const Block&, int)>& fn);

void walk_list(const BodyList& stmts, int depth,
               const std::function<void(const Block&, int)>& fn) {
  for (const auto& s : stmts) {
    if (const auto* e = s.as<EitherStmt>()) {
      walk_list(e->first, depth, fn);
      walk_list(e->second, depth, fn);
    } else if (const auto* b = s.as<Block>()) {
      walk_blocks(*b, depth + 1, fn);
    }
  }
}

void walk_blocks(const Block& b, int depth,
                 const std::function<void(const Block&, int)>& fn) {
  fn(b, depth);
  walk_list(b.body, depth, fn);
}

}  // namespace

void for_each_block(const Block& root, const std::function<void(const Block&, int depth)>& fn) {
  walk_blocks(root, 0, fn);
}

ValidatedSpec validate(const SpecAst& ast, AmbiguityPolicy policy) {
  if (ast.root.count != 1u) throw StructureError("root block must repeat exactly once");
  Validator v(policy);
  v.block(ast.root, ConstraintTable{}, "root");
  return ValidatedSpec{ast, std::move(v.tables)};
}

}  // namespace ktest
