#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ktest/event_model.hpp"

namespace ktest {

class InvalidDefinition : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IncompatiblePorts : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SchedulerMode {
  Pooled,       ///< handlers run on the runtime's executor pool
  CallingFlow,  ///< handlers run synchronously on the triggering thread
};

struct Scheduler {
  SchedulerMode mode = SchedulerMode::Pooled;
};

/// An exception that escaped a handler.
struct HandlerFault {
  ComponentId component;
  std::string event;
  std::string message;
};

using Handler = std::function<void(const Event&)>;

class Runtime;
class Component;

/// Passed to every ComponentDefinition constructor; binds the definition to
/// its runtime instance.
class ComponentContext {
 public:
  ComponentContext(Runtime& rt, Component& self) : runtime_(rt), self_(self) {}
  Runtime& runtime() const { return runtime_; }
  Component& self() const { return self_; }

 private:
  Runtime& runtime_;
  Component& self_;
};

/// Base class for component implementations. Derived constructors declare
/// ports and subscribe handlers; handlers may trigger events.
class ComponentDefinition {
 public:
  explicit ComponentDefinition(const ComponentContext& ctx) : ctx_(ctx) {}
  virtual ~ComponentDefinition() = default;
  ComponentDefinition(const ComponentDefinition&) = delete;
  ComponentDefinition& operator=(const ComponentDefinition&) = delete;

 protected:
  /// Declares a provided port and returns its inside (negative) side.
  PortRef provide(const PortTypePtr& type);
  /// Declares a required port and returns its inside (positive) side.
  PortRef require(const PortTypePtr& type);
  void subscribe(const PortRef& port, const EventKind& kind, Handler handler);
  void trigger(const Event& event, const PortRef& port);

  Component& self() const { return ctx_.self(); }
  Runtime& runtime() const { return ctx_.runtime(); }

 private:
  ComponentContext ctx_;
};

using DefinitionFactory =
    std::function<std::unique_ptr<ComponentDefinition>(const ComponentContext&)>;

/// A live component: its definition object, port pairs, event queue and
/// work count.
class Component {
 public:
  ComponentId id() const { return id_; }
  const std::string& name() const { return name_; }
  Component* parent() const { return parent_; }
  SchedulerMode mode() const { return mode_; }
  std::span<const PortPair> port_pairs() const { return pairs_; }

  const ComponentDefinition& definition() const { return *definition_; }
  ComponentDefinition& definition() { return *definition_; }
  template <class T>
  const T& definition_as() const {
    return dynamic_cast<const T&>(*definition_);
  }
  template <class T>
  T& definition_as() {
    return dynamic_cast<T&>(*definition_);
  }

  /// Port pair declared for `type`, if any.
  const PortPair* find_pair(const PortTypePtr& type) const;
  PortRef positive(const PortTypePtr& type) const;
  PortRef negative(const PortTypePtr& type) const;
  PortRef outside(const PortTypePtr& type) const;
  PortRef inside(const PortTypePtr& type) const;

  /// Events queued at this component plus events currently being handled.
  std::int64_t work_count() const { return work_.load(std::memory_order_acquire); }
  /// Blocks until work_count() reaches zero; false on timeout.
  bool wait_idle(std::chrono::steady_clock::time_point deadline) const;

  Component(const Component&) = delete;
  Component& operator=(const Component&) = delete;

 private:
  friend class Runtime;
  friend class ComponentDefinition;

  struct Delivery {
    PortRef port;
    Event event;
  };

  Component(Runtime& rt, ComponentId id, std::string name, Component* parent,
            SchedulerMode mode)
      : runtime_(rt), id_(id), name_(std::move(name)), parent_(parent), mode_(mode) {}

  Runtime& runtime_;
  ComponentId id_;
  std::string name_;
  Component* parent_;
  SchedulerMode mode_;
  std::vector<PortPair> pairs_;
  std::unique_ptr<ComponentDefinition> definition_;

  std::mutex queue_mutex_;
  std::deque<Delivery> queue_;
  bool scheduled_ = false;
  std::recursive_mutex exec_mutex_;
  std::atomic<std::int64_t> work_{0};
  mutable std::mutex idle_mutex_;
  mutable std::condition_variable idle_cv_;
};

/// Bidirectional pipe between two port sides of the same type and opposite
/// polarity.
struct Channel {
  PortRef end_a;
  PortRef end_b;

  const PortRef& other(const PortRef& end) const { return end == end_a ? end_b : end_a; }
};

class Runtime {
 public:
  struct Options {
    /// Executors for pooled components. nullopt = hardware concurrency.
    /// Zero means pooled components only run through execute_ready().
    std::optional<std::size_t> executors;
  };

  Runtime();
  explicit Runtime(Options options);
  ~Runtime();
  Runtime(const Runtime&) = delete;
  Runtime& operator=(const Runtime&) = delete;

  template <class Def, class... Args>
  Component& create(Component* parent, Scheduler scheduler, Args&&... args) {
    return create_with(
        parent, scheduler,
        [&](const ComponentContext& ctx) -> std::unique_ptr<ComponentDefinition> {
          return std::make_unique<Def>(ctx, std::forward<Args>(args)...);
        },
        typeid(Def).name());
  }

  Component& create_with(Component* parent, Scheduler scheduler, const DefinitionFactory& make,
                         std::string name);

  Channel connect(const PortRef& a, const PortRef& b);

  /// Sends `event` through `port` from the side it is triggered on; the event
  /// emerges at the paired side and is broadcast from there.
  void trigger(const Event& event, const PortRef& port);

  /// Subscribes a handler owned by `owner` on `port`. An empty kind accepts
  /// every event.
  void subscribe(Component& owner, const PortRef& port, std::optional<EventKind> kind,
                 Handler handler);

  /// Runs one queued event of `c`; false if its queue was empty.
  bool execute_ready(Component& c);

  /// Materializes a port pair on `c` outside of its constructor.
  PortPair declare(Component& c, const PortTypePtr& type, PortRole role);

  /// Calls `fn` on the definition of `c` while none of its handlers run.
  template <class F>
  decltype(auto) with_exclusive(Component& c, F&& fn) {
    std::unique_lock exec(c.exec_mutex_);
    return std::forward<F>(fn)(static_cast<const ComponentDefinition&>(*c.definition_));
  }

  void set_fault_sink(std::function<void(const HandlerFault&)> sink);
  std::vector<HandlerFault> faults() const;

  std::size_t executor_count() const { return workers_.size(); }

  /// Stops executors; queued pooled work is discarded.
  void shutdown();

 private:
  friend class ComponentDefinition;

  struct Subscription {
    ComponentId owner;
    std::optional<EventKind> kind;
    Handler handler;
  };

  struct Side {
    PortRef ref;
    PortRef twin;
    Component* owner = nullptr;
    std::vector<Subscription> subscriptions;
    std::vector<PortRef> peers;  // far ends of connected channels
  };

  void emerge(const Event& event, const PortRef& at, std::vector<std::uint64_t>& visited);
  void deliver(Component& c, const PortRef& port, const Event& event);
  void run_delivery(Component& c, const Component::Delivery& d);
  void schedule(Component& c);
  void worker_loop();
  void report(const HandlerFault& fault);
  void finish_one(Component& c);

  std::atomic<ComponentId> next_id_{1};
  std::vector<std::unique_ptr<Component>> components_;

  mutable std::shared_mutex topology_mutex_;
  std::unordered_map<std::uint64_t, Side> sides_;

  mutable std::mutex fault_mutex_;
  std::vector<HandlerFault> faults_;
  std::function<void(const HandlerFault&)> fault_sink_;

  std::mutex pool_mutex_;
  std::condition_variable pool_cv_;
  std::deque<Component*> ready_;
  bool stopping_ = false;
  std::vector<std::thread> workers_;
};

}  // namespace ktest
