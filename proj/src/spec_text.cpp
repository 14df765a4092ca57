#include "ktest/spec_text.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <limits>
#include <set>
#include <sstream>

namespace ktest {

namespace {

constexpr std::array<std::string_view, 13> kKeywords = {
    "repeat",    "body", "end", "expect", "trigger",  "unordered",   "either",
    "or",        "allow", "disallow", "drop", "blockExpect", "inspect"};

std::string join(const std::vector<std::string>& xs) {
  std::string out;
  for (const auto& x : xs) {
    if (!out.empty()) out += ", ";
    out += x;
  }
  return out;
}

std::string category_name(UnresolvedIdentifier::Category c) {
  switch (c) {
    case UnresolvedIdentifier::Category::Event: return "event";
    case UnresolvedIdentifier::Category::Port: return "port";
    case UnresolvedIdentifier::Category::Inspection: return "inspection";
  }
  return "identifier";
}

}  // namespace

ParseError::ParseError(int line, int column, std::size_t offset,
                       std::vector<std::string> expected, const std::string& what)
    : std::runtime_error(std::to_string(line) + ":" + std::to_string(column) + ": " + what +
                         (expected.empty() ? "" : " (expected " + join(expected) + ")")),
      line_(line),
      column_(column),
      offset_(offset),
      expected_(std::move(expected)) {}

UnresolvedIdentifier::UnresolvedIdentifier(Category category, std::string name, int line,
                                           int column, std::size_t offset)
    : ParseError(line, column, offset, {},
                 "unresolved " + category_name(category) + " identifier '" + name + "'"),
      category_(category),
      name_(std::move(name)) {}

bool is_keyword(std::string_view word) {
  return std::find(kKeywords.begin(), kKeywords.end(), word) != kKeywords.end();
}

bool is_identifier(std::string_view word) {
  if (word.empty()) return false;
  if (!(std::isalpha(static_cast<unsigned char>(word[0])) || word[0] == '_')) return false;
  for (char c : word) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
  }
  return true;
}

namespace {

enum class Tok { Word, Int, At, Colon, Eof };

struct Token {
  Tok type;
  std::string text;
  int line;
  int col;
  std::size_t offset;
};

std::vector<Token> tokenize(std::string_view src) {
  std::vector<Token> out;
  int line = 1;
  int col = 1;
  std::size_t i = 0;
  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
      if (src[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
      ++i;
    }
  };
  while (i < src.size()) {
    const char c = src[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      advance(1);
      continue;
    }
    const int tl = line;
    const int tc = col;
    const std::size_t start = i;
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < src.size() &&
             (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_')) {
        ++j;
      }
      out.push_back({Tok::Word, std::string(src.substr(i, j - i)), tl, tc, start});
      advance(j - i);
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
      if (j < src.size() && (std::isalpha(static_cast<unsigned char>(src[j])) || src[j] == '_')) {
        throw ParseError(tl, tc, start, {"integer"}, "malformed number");
      }
      out.push_back({Tok::Int, std::string(src.substr(i, j - i)), tl, tc, start});
      advance(j - i);
    } else if (c == '@') {
      out.push_back({Tok::At, "@", tl, tc, start});
      advance(1);
    } else if (c == ':') {
      out.push_back({Tok::Colon, ":", tl, tc, start});
      advance(1);
    } else {
      throw ParseError(tl, tc, start, {}, std::string("unexpected character '") + c + "'");
    }
  }
  out.push_back({Tok::Eof, "", line, col, src.size()});
  return out;
}

const std::vector<std::string> kStmtStart = {"expect", "trigger", "inspect", "unordered",
                                             "either", "repeat"};
const std::vector<std::string> kHeaderStart = {"allow", "disallow", "drop", "blockExpect"};

class Parser {
 public:
  Parser(std::vector<Token> toks, const SymbolTable& syms) : toks_(std::move(toks)), syms_(syms) {}

  SpecAst spec() {
    if (!at_word("repeat")) fail({"repeat"});
    const Token& first = peek();
    Block b = block();
    if (peek().type != Tok::Eof) fail({"end of input"});
    SpecAst ast;
    (void)first;
    if (b.count == 1u) {
      ast.root = std::move(b);
    } else {
      ast.root.body.push_back(BodyStmt{std::move(b)});
    }
    return ast;
  }

 private:
  const Token& peek() const { return toks_[pos_]; }
  const Token& next() { return toks_[pos_++]; }
  bool at_word(std::string_view w) const { return peek().type == Tok::Word && peek().text == w; }
  bool at_identifier() const { return peek().type == Tok::Word && !is_keyword(peek().text); }

  [[noreturn]] void fail(std::vector<std::string> expected) const {
    const Token& t = peek();
    std::string found = t.type == Tok::Eof ? "end of input" : "'" + t.text + "'";
    throw ParseError(t.line, t.col, t.offset, std::move(expected), "unexpected " + found);
  }

  void expect_word(std::string_view w) {
    if (!at_word(w)) fail({std::string(w)});
    ++pos_;
  }

  const Token& identifier(const char* what) {
    if (!at_identifier()) fail({what});
    return next();
  }

  Block block() {
    expect_word("repeat");
    Block b;
    if (peek().type == Tok::Int) {
      const Token& t = peek();
      unsigned long long v = 0;
      bool overflow = t.text.size() > 9;
      if (!overflow) v = std::stoull(t.text);
      if (overflow || v == 0 || v > std::numeric_limits<unsigned>::max()) {
        throw ParseError(t.line, t.col, t.offset, {"positive integer"},
                         "repeat count must be a positive integer");
      }
      b.count = static_cast<unsigned>(v);
      ++pos_;
    }
    while (peek().type == Tok::Word &&
           std::find(kHeaderStart.begin(), kHeaderStart.end(), peek().text) !=
               kHeaderStart.end()) {
      b.headers.push_back(header());
    }
    if (!at_word("body")) {
      std::vector<std::string> exp = kHeaderStart;
      exp.push_back("body");
      if (!b.count && b.headers.empty()) exp.insert(exp.begin(), "integer");
      fail(exp);
    }
    ++pos_;
    while (!at_word("end")) {
      if (!starts_stmt()) {
        std::vector<std::string> exp = kStmtStart;
        exp.push_back("end");
        fail(exp);
      }
      stmt(b.body);
    }
    ++pos_;
    return b;
  }

  HeaderStmt header() {
    const std::string kw = next().text;
    HeaderStmt h;
    h.kind = kw == "allow"      ? HeaderKind::Allow
             : kw == "disallow" ? HeaderKind::Disallow
             : kw == "drop"     ? HeaderKind::Drop
                                : HeaderKind::BlockExpect;
    h.matchers.push_back(matcher());
    while (at_identifier()) h.matchers.push_back(matcher());
    return h;
  }

  bool starts_stmt() const {
    return peek().type == Tok::Word &&
           std::find(kStmtStart.begin(), kStmtStart.end(), peek().text) != kStmtStart.end();
  }

  void stmt(BodyList& out) {
    const std::string kw = peek().text;
    if (kw == "expect") {
      ++pos_;
      bool any = false;
      for (;;) {
        if (at_identifier()) {
          out.push_back(BodyStmt{ExpectStmt{matcher()}});
        } else if (at_word("unordered")) {
          out.push_back(unordered());
        } else {
          break;
        }
        any = true;
      }
      if (!any) fail({"symbol", "unordered"});
    } else if (kw == "trigger") {
      ++pos_;
      out.push_back(trigger());
      while (at_identifier()) out.push_back(trigger());
    } else if (kw == "inspect") {
      ++pos_;
      const Token& t = identifier("inspection name");
      auto it = syms_.inspections.find(t.text);
      if (it == syms_.inspections.end()) {
        throw UnresolvedIdentifier(UnresolvedIdentifier::Category::Inspection, t.text, t.line,
                                   t.col, t.offset);
      }
      out.push_back(BodyStmt{InspectStmt{it->second, t.text}});
    } else if (kw == "unordered") {
      out.push_back(unordered());
    } else if (kw == "either") {
      ++pos_;
      EitherStmt e;
      do {
        if (!starts_stmt()) fail(kStmtStart);
        stmt(e.first);
      } while (!at_word("or"));
      ++pos_;
      do {
        if (!starts_stmt()) fail(kStmtStart);
        stmt(e.second);
      } while (!at_word("end"));
      ++pos_;
      out.push_back(BodyStmt{std::move(e)});
    } else {
      out.push_back(BodyStmt{block()});
    }
  }

  BodyStmt unordered() {
    expect_word("unordered");
    UnorderedStmt u;
    u.matchers.push_back(matcher());
    while (at_identifier()) u.matchers.push_back(matcher());
    expect_word("end");
    return BodyStmt{std::move(u)};
  }

  struct RawSymbol {
    Token name;
    Token port_tok;
    PortRef port;
    Direction dir;
  };

  RawSymbol symbol() {
    RawSymbol r;
    r.name = identifier("symbol");
    if (peek().type != Tok::At) {
      const Token& t = r.name;
      throw ParseError(t.line, t.col, t.offset, {"'@'"},
                       "'" + t.text + "' is not followed by '@port:dir'");
    }
    ++pos_;
    r.port_tok = identifier("port");
    if (peek().type != Tok::Colon) fail({"':'"});
    ++pos_;
    if (at_word("in")) {
      r.dir = Direction::In;
    } else if (at_word("out")) {
      r.dir = Direction::Out;
    } else {
      fail({"in", "out"});
    }
    ++pos_;
    auto it = syms_.ports.find(r.port_tok.text);
    if (it == syms_.ports.end()) {
      throw UnresolvedIdentifier(UnresolvedIdentifier::Category::Port, r.port_tok.text,
                                 r.port_tok.line, r.port_tok.col, r.port_tok.offset);
    }
    r.port = it->second;
    return r;
  }

  [[noreturn]] static void unresolved_event(const Token& t) {
    throw UnresolvedIdentifier(UnresolvedIdentifier::Category::Event, t.text, t.line, t.col,
                               t.offset);
  }

  Matcher matcher() {
    RawSymbol r = symbol();
    if (auto it = syms_.events.find(r.name.text); it != syms_.events.end()) {
      return match_event(it->second, r.port, r.dir, r.name.text);
    }
    if (auto it = syms_.predicates.find(r.name.text); it != syms_.predicates.end()) {
      return match_kind(it->second.kind, it->second.predicate, r.port, r.dir, r.name.text);
    }
    unresolved_event(r.name);
  }

  BodyStmt trigger() {
    // The direction is parsed for uniformity; a trigger always sends through
    // the named port.
    RawSymbol r = symbol();
    auto it = syms_.events.find(r.name.text);
    if (it == syms_.events.end()) unresolved_event(r.name);
    return BodyStmt{TriggerStmt{it->second, r.port, r.name.text}};
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  const SymbolTable& syms_;
};

}  // namespace

SpecAst parse(std::string_view text, const SymbolTable& symbols) {
  Parser p(tokenize(text), symbols);
  return p.spec();
}

// ---------------------------------------------------------------- printer

namespace {

class Printer {
 public:
  SpecSource run(const SpecAst& ast) {
    reserve_names(ast.root);
    block(ast.root, 0);
    return SpecSource{out_.str(), std::move(syms_)};
  }

 private:
  void indent(int depth) {
    for (int i = 0; i < depth; ++i) out_ << "  ";
  }

  // Labels that are valid identifiers are claimed first so fresh names never
  // shadow them.
  void reserve_names(const Block& b) {
    for (const auto& h : b.headers) {
      for (const auto& m : h.matchers) reserve(m.label);
    }
    reserve_list(b.body);
  }

  void reserve_list(const BodyList& list) {
    for (const auto& s : list) {
      if (const auto* e = s.as<ExpectStmt>()) reserve(e->matcher.label);
      if (const auto* t = s.as<TriggerStmt>()) reserve(t->label);
      if (const auto* i = s.as<InspectStmt>()) reserve(i->name);
      if (const auto* u = s.as<UnorderedStmt>()) {
        for (const auto& m : u->matchers) reserve(m.label);
      }
      if (const auto* ei = s.as<EitherStmt>()) {
        reserve_list(ei->first);
        reserve_list(ei->second);
      }
      if (const auto* b = s.as<Block>()) reserve_names(*b);
    }
  }

  void reserve(const std::string& name) {
    if (is_identifier(name) && !is_keyword(name)) wanted_.insert(name);
  }

  bool taken(const std::string& n) const {
    return syms_.events.count(n) || syms_.predicates.count(n) || syms_.inspections.count(n);
  }

  std::string fresh(const char* prefix, const std::set<std::string>& avoid_extra) {
    for (;;) {
      std::string n = prefix + std::to_string(counter_++);
      if (!taken(n) && !wanted_.count(n) && !avoid_extra.count(n) && !is_keyword(n)) return n;
    }
  }

  bool usable(const std::string& label) const {
    return is_identifier(label) && !is_keyword(label) && label != "in" && label != "out";
  }

  std::string event_name(const Event& e, const std::string& label) {
    if (usable(label)) {
      auto it = syms_.events.find(label);
      if (it != syms_.events.end() && it->second == e) return label;
      if (!taken(label)) {
        syms_.events.emplace(label, e);
        return label;
      }
    }
    for (const auto& [n, ev] : syms_.events) {
      if (ev == e && !usable(label)) return n;
    }
    std::string n = fresh("e", {});
    syms_.events.emplace(n, e);
    return n;
  }

  std::string predicate_name(const KindPredicateMatch& pm, const std::string& label) {
    auto same = [&](const SymbolTable::PredicateBinding& b) {
      return b.kind == pm.kind && b.predicate == pm.predicate;
    };
    if (usable(label)) {
      auto it = syms_.predicates.find(label);
      if (it != syms_.predicates.end() && same(it->second)) return label;
      if (!taken(label)) {
        syms_.predicates.emplace(label, SymbolTable::PredicateBinding{pm.kind, pm.predicate});
        return label;
      }
    }
    std::string n = fresh("k", {});
    syms_.predicates.emplace(n, SymbolTable::PredicateBinding{pm.kind, pm.predicate});
    return n;
  }

  std::string port_name(const PortRef& p) {
    for (const auto& [n, ref] : syms_.ports) {
      if (same_port(ref, p)) return n;
    }
    std::string n = p.id();
    if (!usable(n) || syms_.ports.count(n)) {
      do {
        n = "p" + std::to_string(port_counter_++);
      } while (syms_.ports.count(n));
    }
    syms_.ports.emplace(n, p);
    return n;
  }

  std::string symbol(const Matcher& m) {
    std::string name;
    if (const auto* e = m.concrete_event()) {
      name = event_name(*e, m.label);
    } else {
      name = predicate_name(*m.predicate_match(), m.label);
    }
    return name + "@" + port_name(m.port) + ":" + std::string(to_string(m.direction));
  }

  void block(const Block& b, int depth) {
    indent(depth);
    out_ << "repeat";
    if (b.count) out_ << " " << *b.count;
    if (b.headers.empty() && b.body.empty()) {
      out_ << " body end\n";
      return;
    }
    out_ << "\n";
    for (const auto& h : b.headers) {
      indent(depth + 1);
      out_ << to_string(h.kind);
      for (const auto& m : h.matchers) out_ << " " << symbol(m);
      out_ << "\n";
    }
    indent(depth);
    out_ << "body\n";
    list(b.body, depth + 1);
    indent(depth);
    out_ << "end\n";
  }

  void list(const BodyList& stmts, int depth) {
    for (const auto& s : stmts) stmt(s, depth);
  }

  void stmt(const BodyStmt& s, int depth) {
    if (const auto* e = s.as<ExpectStmt>()) {
      indent(depth);
      out_ << "expect " << symbol(e->matcher) << "\n";
    } else if (const auto* t = s.as<TriggerStmt>()) {
      indent(depth);
      out_ << "trigger " << event_name(t->event, t->label) << "@" << port_name(t->port)
           << ":in\n";
    } else if (const auto* i = s.as<InspectStmt>()) {
      indent(depth);
      out_ << "inspect " << inspection_name(*i) << "\n";
    } else if (const auto* u = s.as<UnorderedStmt>()) {
      indent(depth);
      out_ << "unordered";
      for (const auto& m : u->matchers) out_ << " " << symbol(m);
      out_ << " end\n";
    } else if (const auto* ei = s.as<EitherStmt>()) {
      indent(depth);
      out_ << "either\n";
      list(ei->first, depth + 1);
      indent(depth);
      out_ << "or\n";
      list(ei->second, depth + 1);
      indent(depth);
      out_ << "end\n";
    } else if (const auto* b = s.as<Block>()) {
      block(*b, depth);
    } else {
      throw std::invalid_argument("mapper expectations have no textual form");
    }
  }

  std::string inspection_name(const InspectStmt& i) {
    if (usable(i.name)) {
      auto it = syms_.inspections.find(i.name);
      if (it != syms_.inspections.end() && it->second == i.predicate) return i.name;
      if (!taken(i.name)) {
        syms_.inspections.emplace(i.name, i.predicate);
        return i.name;
      }
    }
    std::string n = fresh("i", {});
    syms_.inspections.emplace(n, i.predicate);
    return n;
  }

  std::ostringstream out_;
  SymbolTable syms_;
  std::set<std::string> wanted_;
  int counter_ = 0;
  int port_counter_ = 0;
};

}  // namespace

SpecSource print(const SpecAst& ast) {
  if (ast.root.count != 1u) throw std::invalid_argument("root block must repeat exactly once");
  return Printer{}.run(ast);
}

}  // namespace ktest
