#include "ktest/trace.hpp"

#include <set>

namespace ktest {

const EventKind& Bindings::kind(const std::string& name) const {
  auto it = kinds.find(name);
  if (it == kinds.end()) throw InputError(0, "unknown event kind '" + name + "'");
  return it->second;
}

namespace {

void define_kind(const nlohmann::json& decls, const std::string& name, Bindings& b,
                 std::set<std::string>& visiting) {
  if (b.kinds.count(name)) return;
  if (!decls.contains(name)) throw InputError(0, "undeclared parent kind '" + name + "'");
  if (!visiting.insert(name).second) throw InputError(0, "cyclic kind hierarchy at '" + name + "'");
  const auto& parent = decls.at(name);
  if (parent.is_null()) {
    b.kinds.emplace(name, EventKind::make(name));
  } else if (parent.is_string()) {
    const std::string p = parent.get<std::string>();
    define_kind(decls, p, b, visiting);
    b.kinds.emplace(name, EventKind::make(name, b.kinds.at(p)));
  } else {
    throw InputError(0, "parent of kind '" + name + "' must be a string or null");
  }
  visiting.erase(name);
}

std::vector<EventKind> kind_list(const nlohmann::json& port, const char* key, const Bindings& b) {
  std::vector<EventKind> out;
  if (!port.contains(key)) {
    for (const auto& [n, k] : b.kinds) out.push_back(k);
    return out;
  }
  if (!port.at(key).is_array()) throw InputError(0, std::string(key) + " must be an array");
  for (const auto& n : port.at(key)) {
    if (!n.is_string()) throw InputError(0, std::string(key) + " entries must be strings");
    out.push_back(b.kind(n.get<std::string>()));
  }
  return out;
}

}  // namespace

Bindings load_bindings(const nlohmann::json& doc) {
  if (!doc.is_object()) throw InputError(0, "bindings must be a JSON object");
  Bindings b;
  const nlohmann::json events =
      doc.contains("events") ? doc.at("events") : nlohmann::json::object();
  if (!events.is_object()) throw InputError(0, "\"events\" must be an object");

  if (doc.contains("kinds")) {
    const auto& decls = doc.at("kinds");
    if (!decls.is_object()) throw InputError(0, "\"kinds\" must be an object");
    for (const auto& [name, _] : decls.items()) {
      std::set<std::string> visiting;
      define_kind(decls, name, b, visiting);
    }
  } else {
    for (const auto& [id, e] : events.items()) {
      if (!e.is_object() || !e.contains("kind") || !e.at("kind").is_string()) {
        throw InputError(0, "event '" + id + "' needs a string \"kind\"");
      }
      const std::string k = e.at("kind").get<std::string>();
      if (!b.kinds.count(k)) b.kinds.emplace(k, EventKind::make(k));
    }
  }

  if (doc.contains("ports")) {
    const auto& ports = doc.at("ports");
    if (!ports.is_object()) throw InputError(0, "\"ports\" must be an object");
    for (const auto& [id, p] : ports.items()) {
      if (!p.is_object()) throw InputError(0, "port '" + id + "' must be an object");
      const std::string role = p.value("role", std::string("provided"));
      if (role != "provided" && role != "required") {
        throw InputError(0, "port '" + id + "' role must be provided or required");
      }
      auto type = make_port_type(id, kind_list(p, "positive", b), kind_list(p, "negative", b));
      PortPair pair = make_port_pair(id, type,
                                     role == "provided" ? PortRole::Provided : PortRole::Required,
                                     0, 0);
      b.symbols.ports.emplace(id, pair.inside);
    }
  }

  for (const auto& [id, e] : events.items()) {
    if (!e.is_object() || !e.contains("kind") || !e.at("kind").is_string()) {
      throw InputError(0, "event '" + id + "' needs a string \"kind\"");
    }
    Payload payload = e.contains("payload") ? e.at("payload") : Payload::object();
    b.symbols.events.emplace(id, make_event(b.kind(e.at("kind").get<std::string>()), payload));
  }
  return b;
}

std::vector<TraceRecord> parse_trace(std::istream& in, const Bindings& bindings) {
  std::vector<TraceRecord> out;
  std::string text;
  int line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& ex) {
      throw InputError(line, std::string("invalid JSON: ") + ex.what());
    }
    try {
      if (!rec.is_object()) throw InputError(line, "record must be an object");
      if (!rec.contains("seq") || !rec.at("seq").is_number_integer()) {
        throw InputError(line, "\"seq\" must be an integer");
      }
      const auto seq = rec.at("seq").get<std::int64_t>();
      if (!out.empty() && seq <= out.back().seq) {
        throw InputError(line, "seq " + std::to_string(seq) + " does not increase (previous " +
                                   std::to_string(out.back().seq) + ")");
      }
      const auto& ev = rec.at("event");
      const EventKind& kind = bindings.kind(ev.at("kind").get<std::string>());
      Payload payload = ev.contains("payload") ? ev.at("payload") : Payload::object();
      const std::string port_id = rec.at("port").get<std::string>();
      auto port = bindings.symbols.ports.find(port_id);
      if (port == bindings.symbols.ports.end()) {
        throw InputError(line, "unknown port '" + port_id + "'");
      }
      const std::string dir = rec.at("direction").get<std::string>();
      if (dir != "in" && dir != "out") throw InputError(line, "direction must be in or out");
      out.push_back(TraceRecord{
          seq,
          make_symbol(make_event(kind, std::move(payload)), port->second,
                      dir == "in" ? Direction::In : Direction::Out),
          line});
    } catch (const InputError& ex) {
      if (ex.line() > 0) throw;
      throw InputError(line, ex.what());
    } catch (const nlohmann::json::exception& ex) {
      throw InputError(line, ex.what());
    } catch (const TypeDirectionViolation& ex) {
      throw InputError(line, ex.what());
    }
  }
  return out;
}

Verdict check_trace(const AutomatonPtr& automaton, const std::vector<TraceRecord>& trace) {
  Simulation sim(automaton);
  Verdict v;
  for (const auto& r : trace) {
    const auto expected = sim.expected();
    StepOutcome out = sim.step(r.symbol);
    if (out.failed()) {
      v.failure = Verdict::Failure{
          r.seq, out.decision == Decision::FailDisallowed ? "disallowed" : "unexpected", expected};
      return v;
    }
  }
  if (sim.is_accepting()) {
    v.accepted = true;
    return v;
  }
  std::optional<std::int64_t> last;
  if (!trace.empty()) last = trace.back().seq;
  v.failure = Verdict::Failure{last, "incomplete", sim.expected()};
  return v;
}

nlohmann::json to_json(const Verdict& v) {
  nlohmann::json j;
  j["accepted"] = v.accepted;
  if (v.failure) {
    nlohmann::json f;
    f["position"] = v.failure->position ? nlohmann::json(*v.failure->position) : nlohmann::json();
    f["reason"] = v.failure->reason;
    f["expected"] = v.failure->expected;
    j["failure"] = f;
  }
  return j;
}

namespace {
bool list_active(const BodyList& list) {
  for (const auto& s : list) {
    if (is_active(s) || s.as<ExpectMappedStmt>()) return true;
    if (const auto* e = s.as<EitherStmt>()) {
      if (list_active(e->first) || list_active(e->second)) return true;
    }
    if (const auto* b = s.as<Block>()) {
      if (list_active(b->body)) return true;
    }
  }
  return false;
}
}  // namespace

bool has_active_constructs(const SpecAst& ast) { return list_active(ast.root.body); }

}  // namespace ktest
