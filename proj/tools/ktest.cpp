// Offline front end: check a recorded trace against a textual spec, or
// print the compiled automaton as DOT.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ktest/automaton.hpp"
#include "ktest/spec_text.hpp"
#include "ktest/trace.hpp"

namespace {

constexpr int kAccepted = 0;
constexpr int kRejected = 1;
constexpr int kInputError = 2;
constexpr int kActive = 3;

struct Failure {
  int code;
  std::string message;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure{kInputError, "cannot read " + path};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ktest::Bindings read_bindings(const std::string& path) {
  try {
    return ktest::load_bindings(nlohmann::json::parse(slurp(path)));
  } catch (const nlohmann::json::exception& ex) {
    throw Failure{kInputError, path + ": " + ex.what()};
  } catch (const ktest::InputError& ex) {
    throw Failure{kInputError, path + ": " + ex.what()};
  }
}

ktest::SpecAst read_spec(const std::string& path, const ktest::Bindings& bindings) {
  try {
    return ktest::parse(slurp(path), bindings.symbols);
  } catch (const ktest::UnresolvedIdentifier& ex) {
    if (ex.category() == ktest::UnresolvedIdentifier::Category::Inspection) {
      throw Failure{kActive, path + ":" + ex.what() + " (inspect needs a live context)"};
    }
    throw Failure{kInputError, path + ":" + ex.what()};
  } catch (const ktest::ParseError& ex) {
    throw Failure{kInputError, path + ":" + ex.what()};
  }
}

int run_check(const std::string& spec_path, const std::string& bindings_path,
              const std::string& trace_path) {
  const ktest::Bindings bindings = read_bindings(bindings_path);
  const ktest::SpecAst ast = read_spec(spec_path, bindings);
  if (ktest::has_active_constructs(ast)) {
    throw Failure{kActive, spec_path + ": trigger and inspect need a live context"};
  }
  ktest::ValidatedSpec validated;
  try {
    validated = ktest::validate(ast);
  } catch (const ktest::AmbiguousSpec& ex) {
    throw Failure{kInputError, spec_path + ": " + ex.what()};
  }
  std::vector<ktest::TraceRecord> trace;
  {
    std::ifstream in(trace_path);
    if (!in) throw Failure{kInputError, "cannot read " + trace_path};
    try {
      trace = ktest::parse_trace(in, bindings);
    } catch (const ktest::InputError& ex) {
      throw Failure{kInputError, trace_path + ": " + ex.what()};
    }
  }
  const ktest::Verdict v = ktest::check_trace(ktest::compile(validated), trace);
  std::cout << ktest::to_json(v).dump() << "\n";
  return v.accepted ? kAccepted : kRejected;
}

int run_dot(const std::string& spec_path, const std::string& bindings_path) {
  const ktest::Bindings bindings = read_bindings(bindings_path);
  const ktest::SpecAst ast = read_spec(spec_path, bindings);
  ktest::ValidatedSpec validated;
  try {
    validated = ktest::validate(ast, ktest::AmbiguityPolicy::Allow);
  } catch (const std::exception& ex) {
    throw Failure{kInputError, spec_path + ": " + ex.what()};
  }
  std::cout << ktest::to_dot(*ktest::compile(validated));
  return kAccepted;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Check event traces against component test specifications"};
  app.require_subcommand(1);

  std::string spec;
  std::string bindings;
  std::string trace;

  auto* check = app.add_subcommand("check", "Check a JSON-lines trace against a spec");
  check->add_option("--spec", spec, "Spec text file")->required();
  check->add_option("--bindings", bindings, "Bindings JSON file")->required();
  check->add_option("--trace", trace, "Trace JSON-lines file")->required();

  auto* dot = app.add_subcommand("dot", "Print the compiled automaton as DOT");
  dot->add_option("--spec", spec, "Spec text file")->required();
  dot->add_option("--bindings", bindings, "Bindings JSON file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kInputError;
  }

  try {
    if (check->parsed()) return run_check(spec, bindings, trace);
    return run_dot(spec, bindings);
  } catch (const Failure& f) {
    std::cerr << "ktest: " << f.message << "\n";
    return f.code;
  }
}
