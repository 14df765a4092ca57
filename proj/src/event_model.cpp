#include "ktest/event_model.hpp"

#include <atomic>
#include <sstream>

namespace ktest {

namespace {
std::atomic<std::uint64_t> next_kind_serial{1};
std::atomic<std::uint64_t> next_port_uid{1};
}  // namespace

std::string_view to_string(Direction d) { return d == Direction::In ? "in" : "out"; }
std::string_view to_string(Polarity p) { return p == Polarity::Positive ? "positive" : "negative"; }
std::string_view to_string(PortRole r) { return r == PortRole::Provided ? "provided" : "required"; }

std::ostream& operator<<(std::ostream& os, Direction d) { return os << to_string(d); }
std::ostream& operator<<(std::ostream& os, const EventSymbol& s) { return os << describe(s); }

EventKind EventKind::make(std::string name) {
  auto node = std::make_shared<Node>();
  node->name = std::move(name);
  node->serial = next_kind_serial++;
  return EventKind(std::move(node));
}

EventKind EventKind::make(std::string name, const EventKind& parent) {
  auto node = std::make_shared<Node>();
  node->name = std::move(name);
  node->parent = parent.node_;
  node->depth = parent.node_->depth + 1;
  node->serial = next_kind_serial++;
  return EventKind(std::move(node));
}

std::optional<EventKind> EventKind::parent() const {
  if (!node_->parent) return std::nullopt;
  return EventKind(node_->parent);
}

bool EventKind::is_assignable_to(const EventKind& other) const {
  for (const Node* n = node_.get(); n != nullptr; n = n->parent.get()) {
    if (n == other.node_.get()) return true;
  }
  return false;
}

Event make_event(const EventKind& kind, Payload payload) {
  return Event{kind, std::move(payload)};
}

std::string describe(const Event& e) {
  if (e.payload.is_null() || (e.payload.is_object() && e.payload.empty())) return e.kind.name();
  return e.kind.name() + e.payload.dump();
}

bool PortType::allows(const EventKind& kind, Polarity side) const {
  const auto& allowed = side == Polarity::Positive ? positive_allowed : negative_allowed;
  for (const auto& k : allowed) {
    if (kind.is_assignable_to(k)) return true;
  }
  return false;
}

PortTypePtr make_port_type(std::string id, std::vector<EventKind> positive,
                           std::vector<EventKind> negative) {
  return std::make_shared<const PortType>(
      PortType{std::move(id), std::move(positive), std::move(negative)});
}

PortPair make_port_pair(std::string id, PortTypePtr type, PortRole role, ComponentId declarer,
                        ComponentId outside_owner) {
  const std::uint64_t pair_uid = next_port_uid++;
  const Polarity inside_polarity =
      role == PortRole::Provided ? Polarity::Negative : Polarity::Positive;
  const Polarity outside_polarity =
      inside_polarity == Polarity::Negative ? Polarity::Positive : Polarity::Negative;
  auto inside = std::make_shared<const PortInfo>(PortInfo{
      id, type, inside_polarity, declarer, declarer, role, next_port_uid++, pair_uid});
  auto outside = std::make_shared<const PortInfo>(PortInfo{
      std::move(id), std::move(type), outside_polarity, outside_owner, declarer, role,
      next_port_uid++, pair_uid});
  return PortPair{PortRef(std::move(inside)), PortRef(std::move(outside)), role};
}

bool direction_allowed(const PortRef& port, const EventKind& kind, Direction dir) {
  // Incoming to a provider and outgoing from a requirer are requests, which
  // travel on the negative side.
  const bool negative = (dir == Direction::In) == (port.role() == PortRole::Provided);
  return port.type().allows(kind, negative ? Polarity::Negative : Polarity::Positive);
}

EventSymbol make_symbol(Event event, PortRef port, Direction direction) {
  if (!direction_allowed(port, event.kind, direction)) {
    std::ostringstream msg;
    msg << "port " << port.id() << " (" << to_string(port.role()) << ", type "
        << port.type().id << ") does not allow " << event.kind.name() << " "
        << to_string(direction);
    throw TypeDirectionViolation(msg.str());
  }
  return EventSymbol{std::move(event), std::move(port), direction};
}

std::string describe(const EventSymbol& s) {
  return describe(s.event) + "@" + s.port.id() + ":" + std::string(to_string(s.direction));
}

void ComparatorRegistry::register_comparator(const EventKind& kind, Comparator cmp) {
  for (auto& e : entries_) {
    if (e.kind == kind) {
      e.cmp = std::move(cmp);
      return;
    }
  }
  entries_.push_back(Entry{kind, std::move(cmp)});
}

const Comparator* ComparatorRegistry::resolve(const Event& expected,
                                              const Event& observed) const {
  const Entry* best = nullptr;
  for (const auto& e : entries_) {
    if (!observed.kind.is_assignable_to(e.kind) || !expected.kind.is_assignable_to(e.kind)) {
      continue;
    }
    if (best == nullptr || e.kind.depth() >= best->kind.depth()) best = &e;
  }
  return best != nullptr ? &best->cmp : nullptr;
}

bool ComparatorRegistry::equal(const Event& expected, const Event& observed) const {
  if (const Comparator* cmp = resolve(expected, observed)) return (*cmp)(expected, observed);
  return expected == observed;
}

ComparatorRegistry register_comparator(ComparatorRegistry registry, const EventKind& kind,
                                       Comparator cmp) {
  registry.register_comparator(kind, std::move(cmp));
  return registry;
}

const Event* Matcher::concrete_event() const {
  if (const auto* c = std::get_if<ConcreteMatch>(&variant)) return &c->event;
  return nullptr;
}

const KindPredicateMatch* Matcher::predicate_match() const {
  return std::get_if<KindPredicateMatch>(&variant);
}

Matcher match_event(Event event, PortRef port, Direction dir, std::string label) {
  return Matcher{ConcreteMatch{std::move(event)}, std::move(port), dir, std::move(label)};
}

Matcher match_kind(EventKind kind, EventPredicate pred, PortRef port, Direction dir,
                   std::string label) {
  return match_kind(std::move(kind), std::make_shared<const EventPredicate>(std::move(pred)),
                    std::move(port), dir, std::move(label));
}

Matcher match_kind(EventKind kind, std::shared_ptr<const EventPredicate> pred, PortRef port,
                   Direction dir, std::string label) {
  return Matcher{KindPredicateMatch{std::move(kind), std::move(pred)}, std::move(port), dir,
                 std::move(label)};
}

bool operator==(const Matcher& a, const Matcher& b) {
  if (!same_port(a.port, b.port) || a.direction != b.direction) return false;
  if (a.variant.index() != b.variant.index()) return false;
  if (const auto* ca = a.concrete_event()) return *ca == *b.concrete_event();
  const auto* pa = a.predicate_match();
  const auto* pb = b.predicate_match();
  return pa->kind == pb->kind && pa->predicate == pb->predicate;
}

bool same_constraint_target(const Matcher& a, const Matcher& b) {
  if (!same_port(a.port, b.port) || a.direction != b.direction) return false;
  if (a.variant.index() != b.variant.index()) return false;
  if (const auto* ca = a.concrete_event()) return *ca == *b.concrete_event();
  return a.predicate_match()->kind == b.predicate_match()->kind;
}

std::string describe(const Matcher& m) {
  if (!m.label.empty()) {
    return m.label + "@" + m.port.id() + ":" + std::string(to_string(m.direction));
  }
  std::string what;
  if (const auto* e = m.concrete_event()) {
    what = describe(*e);
  } else {
    what = m.predicate_match()->kind.name() + "?";
  }
  return what + "@" + m.port.id() + ":" + std::string(to_string(m.direction));
}

bool matches(const Matcher& matcher, const EventSymbol& observed,
             const ComparatorRegistry& registry, MatchErrors* errors) {
  if (!same_port(matcher.port, observed.port) || matcher.direction != observed.direction) {
    return false;
  }
  try {
    if (const auto* expected = matcher.concrete_event()) {
      return registry.equal(*expected, observed.event);
    }
    const auto* pm = matcher.predicate_match();
    if (!observed.event.kind.is_assignable_to(pm->kind)) return false;
    return (*pm->predicate)(observed.event);
  } catch (const std::exception& ex) {
    if (errors != nullptr) errors->push_back(describe(matcher) + ": " + ex.what());
  } catch (...) {
    if (errors != nullptr) errors->push_back(describe(matcher) + ": unknown exception");
  }
  return false;
}

}  // namespace ktest
