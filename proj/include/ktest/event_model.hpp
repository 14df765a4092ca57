#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

namespace ktest {

using Payload = nlohmann::json;
using ComponentId = std::uint64_t;

/// Direction of an event relative to the component under test.
enum class Direction { In, Out };

enum class Polarity { Positive, Negative };

/// How the declaring component uses a port pair.
enum class PortRole { Provided, Required };

std::string_view to_string(Direction d);
std::string_view to_string(Polarity p);
std::string_view to_string(PortRole r);

class TypeDirectionViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Nominal event type with optional single parent. Two kinds are the same
/// kind iff they were produced by the same make() call.
class EventKind {
 public:
  static EventKind make(std::string name);
  static EventKind make(std::string name, const EventKind& parent);

  const std::string& name() const { return node_->name; }
  std::optional<EventKind> parent() const;
  /// Number of ancestors; a root kind has depth 0.
  std::size_t depth() const { return node_->depth; }

  /// True if this kind equals `other` or `other` is one of its ancestors.
  bool is_assignable_to(const EventKind& other) const;

  friend bool operator==(const EventKind& a, const EventKind& b) {
    return a.node_ == b.node_;
  }
  friend bool operator<(const EventKind& a, const EventKind& b) {
    return a.node_->serial < b.node_->serial;
  }

 private:
  struct Node {
    std::string name;
    std::shared_ptr<const Node> parent;
    std::size_t depth = 0;
    std::uint64_t serial = 0;
  };
  explicit EventKind(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
  std::shared_ptr<const Node> node_;
};

struct Event {
  EventKind kind;
  Payload payload;

  friend bool operator==(const Event& a, const Event& b) {
    return a.kind == b.kind && a.payload == b.payload;
  }
};

Event make_event(const EventKind& kind, Payload payload = Payload::object());
std::string describe(const Event& e);

struct PortType {
  std::string id;
  std::vector<EventKind> positive_allowed;
  std::vector<EventKind> negative_allowed;

  /// Whether an event of `kind` may travel in the direction of `side`.
  bool allows(const EventKind& kind, Polarity side) const;
};
using PortTypePtr = std::shared_ptr<const PortType>;

PortTypePtr make_port_type(std::string id, std::vector<EventKind> positive,
                           std::vector<EventKind> negative);

/// Immutable description of one side of a port pair.
struct PortInfo {
  std::string id;
  PortTypePtr type;
  Polarity polarity;
  ComponentId owner;
  ComponentId declarer;
  PortRole role;
  std::uint64_t uid;
  std::uint64_t pair_uid;
};

/// Handle to one side of a port pair. Equality is identity of the side.
class PortRef {
 public:
  PortRef() = default;
  explicit PortRef(std::shared_ptr<const PortInfo> info) : info_(std::move(info)) {}

  const std::string& id() const { return info_->id; }
  const PortType& type() const { return *info_->type; }
  const PortTypePtr& type_ptr() const { return info_->type; }
  Polarity polarity() const { return info_->polarity; }
  ComponentId owner() const { return info_->owner; }
  ComponentId declarer() const { return info_->declarer; }
  PortRole role() const { return info_->role; }
  std::uint64_t uid() const { return info_->uid; }
  std::uint64_t pair_uid() const { return info_->pair_uid; }
  const PortInfo* get() const { return info_.get(); }
  explicit operator bool() const { return static_cast<bool>(info_); }

  friend bool operator==(const PortRef& a, const PortRef& b) { return a.info_ == b.info_; }

 private:
  std::shared_ptr<const PortInfo> info_;
};

/// Both sides of a port pair as seen by the declaring component: the inside
/// side delivers incoming events to it, the outside side carries its
/// outgoing events away.
struct PortPair {
  PortRef inside;
  PortRef outside;
  PortRole role;

  PortRef positive() const { return inside.polarity() == Polarity::Positive ? inside : outside; }
  PortRef negative() const { return inside.polarity() == Polarity::Negative ? inside : outside; }
};

/// Creates a port pair. For a provided port the inside side is negative; for
/// a required port it is positive. The outside side is owned by
/// `outside_owner` (the parent of the declarer, or the declarer itself).
PortPair make_port_pair(std::string id, PortTypePtr type, PortRole role,
                        ComponentId declarer, ComponentId outside_owner);

/// Symbols that refer to the same declared port, regardless of side.
inline bool same_port(const PortRef& a, const PortRef& b) { return a.pair_uid() == b.pair_uid(); }

/// One letter of an execution: (event, port, direction).
struct EventSymbol {
  Event event;
  PortRef port;
  Direction direction;

  friend bool operator==(const EventSymbol& a, const EventSymbol& b) {
    return a.event == b.event && same_port(a.port, b.port) && a.direction == b.direction;
  }
};

/// Whether the port's declaration admits `kind` travelling in `dir`
/// relative to the declaring component.
bool direction_allowed(const PortRef& port, const EventKind& kind, Direction dir);

EventSymbol make_symbol(Event event, PortRef port, Direction direction);
std::string describe(const EventSymbol& s);

using Comparator = std::function<bool(const Event&, const Event&)>;
using EventPredicate = std::function<bool(const Event&)>;

/// Per-kind equality overrides. Resolution picks the most specific
/// registered kind that both events are assignable to.
class ComparatorRegistry {
 public:
  void register_comparator(const EventKind& kind, Comparator cmp);
  /// nullptr when no registered kind applies.
  const Comparator* resolve(const Event& expected, const Event& observed) const;
  bool equal(const Event& expected, const Event& observed) const;
  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    EventKind kind;
    Comparator cmp;
  };
  std::vector<Entry> entries_;
};

ComparatorRegistry register_comparator(ComparatorRegistry registry, const EventKind& kind,
                                       Comparator cmp);

struct ConcreteMatch {
  Event event;
};

struct KindPredicateMatch {
  EventKind kind;
  std::shared_ptr<const EventPredicate> predicate;
};

/// A specified symbol: either a concrete event or a kind plus predicate,
/// bound to a port and direction. `label` is display-only and does not
/// take part in comparisons.
struct Matcher {
  std::variant<ConcreteMatch, KindPredicateMatch> variant;
  PortRef port;
  Direction direction;
  std::string label;

  bool is_predicate() const { return std::holds_alternative<KindPredicateMatch>(variant); }
  const Event* concrete_event() const;
  const KindPredicateMatch* predicate_match() const;
};

Matcher match_event(Event event, PortRef port, Direction dir, std::string label = {});
Matcher match_kind(EventKind kind, EventPredicate pred, PortRef port, Direction dir,
                   std::string label = {});
Matcher match_kind(EventKind kind, std::shared_ptr<const EventPredicate> pred, PortRef port,
                   Direction dir, std::string label = {});

/// Same variant, same event or kind, same predicate object, port and
/// direction.
bool operator==(const Matcher& a, const Matcher& b);

/// Constraint identity: like ==, except predicate matchers compare by kind
/// only.
bool same_constraint_target(const Matcher& a, const Matcher& b);

std::string describe(const Matcher& m);

/// Exceptions raised by user predicates or comparators during matching are
/// recorded here and count as a non-match.
using MatchErrors = std::vector<std::string>;

bool matches(const Matcher& matcher, const EventSymbol& observed,
             const ComparatorRegistry& registry, MatchErrors* errors = nullptr);

std::ostream& operator<<(std::ostream& os, Direction d);
std::ostream& operator<<(std::ostream& os, const EventSymbol& s);

}  // namespace ktest
