#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ktest/automaton.hpp"
#include "ktest/spec_text.hpp"

namespace ktest {

/// Malformed bindings or trace input. `line` is 1-based, 0 when unknown.
class InputError : public std::runtime_error {
 public:
  InputError(int line, const std::string& what)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// Offline stand-ins for kinds, ports and events named by a spec.
///
/// {"kinds":  {"Name": "Parent" | null},
///  "ports":  {"id": {"role": "provided"|"required",
///                    "positive": ["Kind", ...], "negative": ["Kind", ...]}},
///  "events": {"id": {"kind": "Kind", "payload": <json>}}}
///
/// "kinds" may be omitted (kinds are then taken from "events"); an omitted
/// allow list admits every known kind.
struct Bindings {
  std::map<std::string, EventKind> kinds;
  SymbolTable symbols;

  const EventKind& kind(const std::string& name) const;
};

Bindings load_bindings(const nlohmann::json& doc);

struct TraceRecord {
  std::int64_t seq;
  EventSymbol symbol;
  int line;
};

/// JSON lines: {"seq": n, "event": {"kind": k, "payload": p}, "port": id,
/// "direction": "in"|"out"}. Blank lines are skipped.
std::vector<TraceRecord> parse_trace(std::istream& in, const Bindings& bindings);

struct Verdict {
  struct Failure {
    std::optional<std::int64_t> position;
    std::string reason;  // unexpected | disallowed | incomplete
    std::vector<std::string> expected;
  };
  bool accepted = false;
  std::optional<Failure> failure;
};

Verdict check_trace(const AutomatonPtr& automaton, const std::vector<TraceRecord>& trace);
nlohmann::json to_json(const Verdict& v);

bool has_active_constructs(const SpecAst& ast);

}  // namespace ktest
