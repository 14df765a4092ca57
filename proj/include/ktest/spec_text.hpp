#pragma once

#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ktest/spec_ast.hpp"

namespace ktest {

class ParseError : public std::runtime_error {
 public:
  ParseError(int line, int column, std::size_t offset, std::vector<std::string> expected,
             const std::string& what);
  int line() const { return line_; }
  int column() const { return column_; }
  /// Byte offset into the source.
  std::size_t offset() const { return offset_; }
  const std::vector<std::string>& expected() const { return expected_; }

 private:
  int line_;
  int column_;
  std::size_t offset_;
  std::vector<std::string> expected_;
};

class UnresolvedIdentifier : public ParseError {
 public:
  enum class Category { Event, Port, Inspection };
  UnresolvedIdentifier(Category category, std::string name, int line, int column,
                       std::size_t offset);
  Category category() const { return category_; }
  const std::string& name() const { return name_; }

 private:
  Category category_;
  std::string name_;
};

/// Bindings for identifiers appearing in spec text. Event identifiers name
/// either a concrete event or a kind plus predicate.
struct SymbolTable {
  struct PredicateBinding {
    EventKind kind;
    std::shared_ptr<const EventPredicate> predicate;
  };
  std::map<std::string, Event> events;
  std::map<std::string, PredicateBinding> predicates;
  std::map<std::string, PortRef> ports;
  std::map<std::string, std::shared_ptr<const InspectFn>> inspections;
};

struct SpecSource {
  std::string text;
  SymbolTable symbols;
};

bool is_keyword(std::string_view word);
bool is_identifier(std::string_view word);

/// A top-level "repeat 1" block is the root; any other top-level block is
/// nested inside an implicit root.
SpecAst parse(std::string_view text, const SymbolTable& symbols);
inline SpecAst parse(const SpecSource& src) { return parse(src.text, src.symbols); }

/// Text plus a symbol table that parses back to `ast`. Existing labels and
/// port ids are reused when they are valid and unambiguous.
/// Throws std::invalid_argument for constructs without a textual form.
SpecSource print(const SpecAst& ast);

}  // namespace ktest
