#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ktest/automaton.hpp"
#include "ktest/runtime.hpp"
#include "ktest/spec_ast.hpp"

namespace ktest {

class LifecycleError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class FailureKind {
  Unexpected,
  Disallowed,
  Timeout,
  InspectFailed,
  HandlerFault,
  PredicateError,
  AmbiguousChoice,
  ActionError,
};
std::string_view to_string(FailureKind k);

struct FailureReason {
  FailureKind kind;
  std::optional<EventSymbol> symbol;
  /// Number of symbols consumed before the failure.
  std::size_t position = 0;
  std::vector<std::string> expected;
  std::string message;
};
std::string describe(const FailureReason& r);

constexpr std::chrono::milliseconds kDefaultTimeout{400};
constexpr const char* kTimeoutEnvVar = "KOMPICSTEST_TIMEOUT_MS";

/// The timeout a fresh context starts with: the environment override when it
/// holds a positive integer, otherwise kDefaultTimeout.
std::chrono::milliseconds default_timeout();

struct ContextOptions {
  /// Executors for the CUT and peers; 1 gives a deterministic schedule.
  std::optional<std::size_t> executors;
};

/// Hosts one component under test behind an intercepting proxy and checks
/// its boundary behaviour against a specification.
class TestContext {
 public:
  struct Mirror {
    PortPair cut;
    PortPair mirror;
  };

  template <class Cut, class... Args>
  static std::unique_ptr<TestContext> create(Args&&... args) {
    return create_with<Cut>(ContextOptions{}, std::forward<Args>(args)...);
  }

  template <class Cut, class... Args>
  static std::unique_ptr<TestContext> create_with(ContextOptions options, Args&&... args) {
    std::unique_ptr<TestContext> ctx(new TestContext(options));
    ctx->cut_ = &ctx->runtime_->create<Cut>(ctx->proxy_, Scheduler{SchedulerMode::Pooled},
                                            std::forward<Args>(args)...);
    ctx->install_mirrors();
    return ctx;
  }

  ~TestContext();
  TestContext(const TestContext&) = delete;
  TestContext& operator=(const TestContext&) = delete;

  Component& cut() { return *cut_; }
  const Component& cut() const { return *cut_; }
  Component& proxy() { return *proxy_; }
  Runtime& runtime() { return *runtime_; }
  const std::vector<Mirror>& mirrors() const { return mirrors_; }
  const std::vector<Component*>& peers() const { return peers_; }

  template <class Def, class... Args>
  Component& create_peer(Args&&... args) {
    require_unchecked("create_peer");
    Component& c = runtime_->create<Def>(proxy_, Scheduler{SchedulerMode::Pooled},
                                         std::forward<Args>(args)...);
    peers_.push_back(&c);
    return c;
  }

  /// Connects two ports; a CUT port is replaced by its mirror so the CUT
  /// itself never joins a channel.
  void connect(const PortRef& a, const PortRef& b);

  /// The mirror side standing in for `cut_side`, if it is a CUT port.
  std::optional<PortRef> mirror_of(const PortRef& cut_side) const;

  SpecBuilder& spec() { return builder_; }
  SpecBuilder& body() { return builder_.body(); }

  void set_timeout(std::chrono::milliseconds timeout);
  /// The timeout check() will use for `ast`.
  std::chrono::milliseconds effective_timeout(const SpecAst& ast) const;
  std::chrono::milliseconds timeout() const { return timeout_; }

  /// Runs the spec assembled through spec().
  bool check();
  bool check(const SpecAst& ast);

  const std::optional<FailureReason>& failure() const { return failure_; }
  /// Symbols consumed by the automaton, in order.
  const std::vector<EventSymbol>& consumed() const { return consumed_; }
  bool checked() const { return checked_; }

 private:
  struct Intercepted {
    EventSymbol symbol;
    std::function<void()> forward;
  };

  explicit TestContext(ContextOptions options);
  void install_mirrors();
  void require_unchecked(const char* op) const;
  void enqueue(Intercepted item);
  std::optional<Intercepted> wait_next(std::chrono::steady_clock::time_point deadline);
  std::optional<EventSymbol> peek() const;
  bool has_fault() const;

  bool run(Simulation& sim, std::chrono::milliseconds timeout);
  bool fail(FailureKind kind, std::string message, std::optional<EventSymbol> symbol = {},
            std::vector<std::string> expected = {});
  void send(const Event& event, const PortRef& port);
  bool execute(const Action& action, std::chrono::milliseconds timeout);

  std::unique_ptr<Runtime> runtime_;
  Component* proxy_ = nullptr;
  Component* cut_ = nullptr;
  std::vector<Component*> peers_;
  std::vector<Mirror> mirrors_;
  SpecBuilder builder_;
  std::chrono::milliseconds timeout_;
  bool checked_ = false;
  std::optional<FailureReason> failure_;
  std::vector<EventSymbol> consumed_;

  mutable std::mutex queue_mutex_;
  std::condition_variable queue_cv_;
  std::deque<Intercepted> queue_;
  std::vector<HandlerFault> faults_;
};

}  // namespace ktest
