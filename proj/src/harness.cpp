#include "ktest/harness.hpp"

#include <cstdlib>
#include <string>

namespace ktest {

namespace {

class ProxyDefinition : public ComponentDefinition {
 public:
  using ComponentDefinition::ComponentDefinition;
};

}  // namespace

std::string_view to_string(FailureKind k) {
  switch (k) {
    case FailureKind::Unexpected: return "unexpected";
    case FailureKind::Disallowed: return "disallowed";
    case FailureKind::Timeout: return "timeout";
    case FailureKind::InspectFailed: return "inspect-failed";
    case FailureKind::HandlerFault: return "handler-fault";
    case FailureKind::PredicateError: return "predicate-error";
    case FailureKind::AmbiguousChoice: return "ambiguous-choice";
    case FailureKind::ActionError: return "action-error";
  }
  return "?";
}

std::string describe(const FailureReason& r) {
  std::string out = std::string(to_string(r.kind)) + " at position " + std::to_string(r.position);
  if (r.symbol) out += " on " + describe(*r.symbol);
  if (!r.message.empty()) out += ": " + r.message;
  if (!r.expected.empty()) {
    out += " (expected";
    for (const auto& e : r.expected) out += " " + e;
    out += ")";
  }
  return out;
}

std::chrono::milliseconds default_timeout() {
  if (const char* env = std::getenv(kTimeoutEnvVar)) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(env, &used);
      if (used == std::string(env).size() && v > 0) return std::chrono::milliseconds(v);
    } catch (const std::exception&) {
    }
  }
  return kDefaultTimeout;
}

TestContext::TestContext(ContextOptions options)
    : runtime_(std::make_unique<Runtime>(Runtime::Options{options.executors})),
      timeout_(default_timeout()) {
  proxy_ = &runtime_->create<ProxyDefinition>(nullptr, Scheduler{SchedulerMode::CallingFlow});
  runtime_->set_fault_sink([this](const HandlerFault& f) {
    {
      std::lock_guard lock(queue_mutex_);
      faults_.push_back(f);
    }
    queue_cv_.notify_all();
  });
}

TestContext::~TestContext() { runtime_->shutdown(); }

void TestContext::install_mirrors() {
  for (const PortPair& cut_pair : cut_->port_pairs()) {
    PortPair mirror = runtime_->declare(*proxy_, cut_pair.inside.type_ptr(), cut_pair.role);
    mirrors_.push_back(Mirror{cut_pair, mirror});
    const PortRef cut_port = cut_pair.inside;
    const PortRef cut_outside = cut_pair.outside;
    const PortRef mirror_inside = mirror.inside;

    // Outgoing: the CUT's events surface on its outside side.
    runtime_->subscribe(*proxy_, cut_outside, std::nullopt,
                        [this, cut_port, mirror_inside](const Event& e) {
                          Runtime* rt = runtime_.get();
                          enqueue(Intercepted{make_symbol(e, cut_port, Direction::Out),
                                              [rt, e, mirror_inside] { rt->trigger(e, mirror_inside); }});
                        });
    // Incoming: peers' events arrive through the mirror.
    runtime_->subscribe(*proxy_, mirror_inside, std::nullopt,
                        [this, cut_port, cut_outside](const Event& e) {
                          Runtime* rt = runtime_.get();
                          enqueue(Intercepted{make_symbol(e, cut_port, Direction::In),
                                              [rt, e, cut_outside] { rt->trigger(e, cut_outside); }});
                        });
  }
}

void TestContext::require_unchecked(const char* op) const {
  if (checked_) throw LifecycleError(std::string(op) + " after check()");
}

std::optional<PortRef> TestContext::mirror_of(const PortRef& cut_side) const {
  for (const auto& m : mirrors_) {
    if (!same_port(m.cut.inside, cut_side)) continue;
    return cut_side.polarity() == Polarity::Positive ? m.mirror.positive() : m.mirror.negative();
  }
  return std::nullopt;
}

void TestContext::connect(const PortRef& a, const PortRef& b) {
  require_unchecked("connect");
  runtime_->connect(mirror_of(a).value_or(a), mirror_of(b).value_or(b));
}

void TestContext::set_timeout(std::chrono::milliseconds timeout) {
  require_unchecked("set_timeout");
  if (timeout.count() <= 0) throw std::invalid_argument("timeout must be positive");
  timeout_ = timeout;
}

std::chrono::milliseconds TestContext::effective_timeout(const SpecAst& ast) const {
  return ast.timeout.value_or(timeout_);
}

void TestContext::enqueue(Intercepted item) {
  {
    std::lock_guard lock(queue_mutex_);
    queue_.push_back(std::move(item));
  }
  queue_cv_.notify_all();
}

std::optional<TestContext::Intercepted> TestContext::wait_next(
    std::chrono::steady_clock::time_point deadline) {
  std::unique_lock lock(queue_mutex_);
  queue_cv_.wait_until(lock, deadline, [&] { return !queue_.empty() || !faults_.empty(); });
  if (queue_.empty() || !faults_.empty()) return std::nullopt;
  Intercepted item = std::move(queue_.front());
  queue_.pop_front();
  return item;
}

std::optional<EventSymbol> TestContext::peek() const {
  std::lock_guard lock(queue_mutex_);
  if (queue_.empty()) return std::nullopt;
  return queue_.front().symbol;
}

bool TestContext::has_fault() const {
  std::lock_guard lock(queue_mutex_);
  return !faults_.empty();
}

bool TestContext::check() {
  require_unchecked("check");
  return check(builder_.build());
}

bool TestContext::check(const SpecAst& ast) {
  require_unchecked("check");
  checked_ = true;
  ValidatedSpec validated = validate(ast);
  Simulation sim(compile(validated));
  return run(sim, effective_timeout(ast));
}

bool TestContext::fail(FailureKind kind, std::string message, std::optional<EventSymbol> symbol,
                       std::vector<std::string> expected) {
  failure_ = FailureReason{kind, std::move(symbol), consumed_.size(), std::move(expected),
                           std::move(message)};
  return false;
}

void TestContext::send(const Event& event, const PortRef& port) {
  for (const auto& m : mirrors_) {
    if (same_port(m.cut.inside, port)) {
      // Straight into the CUT, past the interception handlers.
      runtime_->trigger(event, m.cut.outside);
      return;
    }
  }
  runtime_->trigger(event, port);
}

bool TestContext::execute(const Action& action, std::chrono::milliseconds timeout) {
  try {
    switch (action.kind) {
      case Action::Kind::Trigger:
      case Action::Kind::Respond:
        send(action.event, action.port);
        return true;
      case Action::Kind::Inspect: {
        if (!cut_->wait_idle(std::chrono::steady_clock::now() + timeout)) {
          return fail(FailureKind::Timeout, "component did not become idle before inspect");
        }
        const bool ok = runtime_->with_exclusive(
            *cut_, [&](const ComponentDefinition& d) { return (*action.inspect)(d); });
        if (!ok) {
          return fail(FailureKind::InspectFailed,
                      "inspection " + (action.label.empty() ? std::string("predicate")
                                                            : action.label) +
                          " returned false");
        }
        return true;
      }
    }
  } catch (const std::exception& ex) {
    return fail(FailureKind::ActionError, describe(action) + ": " + ex.what());
  }
  return true;
}

bool TestContext::run(Simulation& sim, std::chrono::milliseconds timeout) {
  for (;;) {
    if (has_fault()) {
      std::lock_guard lock(queue_mutex_);
      const HandlerFault& f = faults_.front();
      failure_ = FailureReason{FailureKind::HandlerFault, std::nullopt, consumed_.size(), {},
                               "component " + std::to_string(f.component) + " failed on " +
                                   f.event + ": " + f.message};
      return false;
    }

    if (sim.has_pending_actions()) {
      bool take = true;
      if (sim.has_passive_alternatives()) {
        // Only a queued event that the passive side can consume outranks the
        // actions.
        auto head = peek();
        take = !(head && sim.would_consume(*head));
      }
      if (take) {
        Action action;
        try {
          action = sim.take_action();
        } catch (const AmbiguousRuntimeChoice& ex) {
          return fail(FailureKind::AmbiguousChoice, ex.what());
        }
        if (!execute(action, timeout)) return false;
        continue;
      }
    }

    auto item = wait_next(std::chrono::steady_clock::now() + timeout);
    if (!item) {
      if (has_fault()) continue;
      if (sim.is_accepting()) return true;
      return fail(FailureKind::Timeout, "no event within " + std::to_string(timeout.count()) + " ms",
                  std::nullopt, sim.expected());
    }

    const auto expected = sim.expected();
    const std::size_t errors_before = sim.errors().size();
    StepOutcome out = sim.step(item->symbol);
    if (sim.errors().size() > errors_before) {
      return fail(FailureKind::PredicateError, sim.errors().back(), item->symbol, expected);
    }
    if (out.failed()) {
      return fail(out.decision == Decision::FailDisallowed ? FailureKind::Disallowed
                                                           : FailureKind::Unexpected,
                  std::string(to_string(out.decision)) + " event", item->symbol, expected);
    }
    consumed_.push_back(item->symbol);
    if (out.decision == Decision::ConsumeForward) {
      try {
        item->forward();
      } catch (const std::exception& ex) {
        return fail(FailureKind::ActionError, std::string("forwarding failed: ") + ex.what(),
                    item->symbol);
      }
    }
    for (const auto& a : out.actions) {
      if (!execute(a, timeout)) return false;
    }
  }
}

}  // namespace ktest
