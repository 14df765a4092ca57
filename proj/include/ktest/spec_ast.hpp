#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "ktest/event_model.hpp"

namespace ktest {

class ComponentDefinition;

class StructureError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised by validate(); `path` names the offending construct, e.g.
/// "root/body[2]/either.or[0]".
class AmbiguousSpec : public std::runtime_error {
 public:
  AmbiguousSpec(std::string path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

enum class HeaderKind { Allow, Disallow, Drop, BlockExpect };
std::string_view to_string(HeaderKind k);

struct HeaderStmt {
  HeaderKind kind;
  std::vector<Matcher> matchers;
};

struct BodyStmt;
using BodyList = std::vector<BodyStmt>;

struct ExpectStmt {
  Matcher matcher;
};

struct TriggerStmt {
  Event event;
  PortRef port;
  std::string label;
};

using InspectFn = std::function<bool(const ComponentDefinition&)>;

struct InspectStmt {
  std::shared_ptr<const InspectFn> predicate;
  std::string name;
};

struct UnorderedStmt {
  std::vector<Matcher> matchers;
};

struct EitherStmt {
  BodyList first;
  BodyList second;
};

/// count == nullopt is a Kleene closure.
struct Block {
  std::optional<unsigned> count;
  std::vector<HeaderStmt> headers;
  BodyList body;
};

using Mapper = std::function<std::optional<Event>(const Event&)>;

struct MappedEntry {
  EventKind request_kind;
  PortRef request_port;
  PortRef response_port;
  std::shared_ptr<const Mapper> mapper;
};

struct ExpectMappedStmt {
  std::vector<MappedEntry> entries;
};

struct BodyStmt {
  std::variant<ExpectStmt, TriggerStmt, InspectStmt, UnorderedStmt, EitherStmt, Block,
               ExpectMappedStmt>
      node;

  template <class T>
  const T* as() const {
    return std::get_if<T>(&node);
  }
};

struct SpecAst {
  Block root{1, {}, {}};
  ComparatorRegistry comparators;
  std::optional<std::chrono::milliseconds> timeout;
};

bool operator==(const HeaderStmt& a, const HeaderStmt& b);
bool operator==(const BodyStmt& a, const BodyStmt& b);
bool operator==(const Block& a, const Block& b);
bool operator==(const MappedEntry& a, const MappedEntry& b);
/// Compares the statement tree and timeout; comparators are opaque.
bool operator==(const SpecAst& a, const SpecAst& b);

bool is_active(const BodyStmt& s);

/// Fluent construction of a SpecAst. Misuse throws StructureError at the
/// offending call.
class SpecBuilder {
 public:
  SpecBuilder();

  SpecBuilder& set_comparator(const EventKind& kind, Comparator cmp);
  SpecBuilder& set_timeout(std::chrono::milliseconds timeout);

  SpecBuilder& body();
  SpecBuilder& repeat(unsigned count);
  SpecBuilder& repeat();
  SpecBuilder& end();

  SpecBuilder& allow(Matcher m);
  SpecBuilder& allow(std::vector<Matcher> ms);
  SpecBuilder& disallow(Matcher m);
  SpecBuilder& disallow(std::vector<Matcher> ms);
  SpecBuilder& drop(Matcher m);
  SpecBuilder& drop(std::vector<Matcher> ms);
  SpecBuilder& block_expect(Matcher m);
  SpecBuilder& block_expect(std::vector<Matcher> ms);
  SpecBuilder& allow(const Event& e, const PortRef& p, Direction d);
  SpecBuilder& disallow(const Event& e, const PortRef& p, Direction d);
  SpecBuilder& drop(const Event& e, const PortRef& p, Direction d);
  SpecBuilder& block_expect(const Event& e, const PortRef& p, Direction d);

  /// Inside unordered(): adds to the unordered set; otherwise an EXPECT.
  SpecBuilder& expect(Matcher m);
  SpecBuilder& expect(const Event& e, const PortRef& p, Direction d);
  SpecBuilder& expect(const EventKind& kind, EventPredicate pred, const PortRef& p, Direction d);
  /// Only inside expect_with_mapper().
  SpecBuilder& expect(const EventKind& request_kind, const PortRef& request_port,
                      const PortRef& response_port, Mapper mapper);
  SpecBuilder& expect(MappedEntry entry);

  SpecBuilder& trigger(const Event& e, const PortRef& p, std::string label = {});
  SpecBuilder& inspect(InspectFn fn, std::string name = {});
  SpecBuilder& inspect(std::shared_ptr<const InspectFn> fn, std::string name = {});
  template <class Def>
  SpecBuilder& inspect(std::function<bool(const Def&)> fn, std::string name = {}) {
    return inspect(
        InspectFn([fn = std::move(fn)](const ComponentDefinition& d) {
          return fn(dynamic_cast<const Def&>(d));
        }),
        std::move(name));
  }

  SpecBuilder& unordered();
  SpecBuilder& either();
  SpecBuilder& or_();
  SpecBuilder& expect_with_mapper();

  /// True once build() may succeed: only the root block is open.
  bool complete() const;
  SpecAst build() const;

 private:
  enum class FrameKind { Block, Either, Unordered, Mapped };
  struct Frame {
    FrameKind kind;
    bool in_body = false;  // Block: past body(); Either: past or_()
    Block block;
    EitherStmt either;
    std::vector<Matcher> unordered;
    std::vector<MappedEntry> mapped;
  };

  Frame& top() { return stack_.back(); }
  BodyList& statements(const char* op);
  void add_statement(BodyStmt s, const char* op);
  SpecBuilder& header(HeaderKind kind, std::vector<Matcher> ms, const char* op);

  std::vector<Frame> stack_;
  ComparatorRegistry comparators_;
  std::optional<std::chrono::milliseconds> timeout_;
};

/// Effective allow/disallow/drop decisions for one block after inheriting
/// from enclosing blocks.
struct ConstraintTable {
  struct Entry {
    Matcher matcher;
    HeaderKind kind;
  };
  std::vector<Entry> entries;

  std::optional<HeaderKind> lookup(const Matcher& m) const;
};

enum class AmbiguityPolicy { Reject, Allow };

struct ValidatedSpec {
  SpecAst ast;
  /// Indexed by block id; blocks are numbered in pre-order, root = 0.
  std::vector<ConstraintTable> constraints;
};

ValidatedSpec validate(const SpecAst& ast, AmbiguityPolicy policy = AmbiguityPolicy::Reject);

/// Visits every block in pre-order (the numbering used for block ids).
void for_each_block(const Block& root, const std::function<void(const Block&, int depth)>& fn);

}  // namespace ktest
