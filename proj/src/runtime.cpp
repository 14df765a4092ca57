#include "ktest/runtime.hpp"

#include <algorithm>
#include <sstream>

namespace ktest {

namespace {

Polarity opposite(Polarity p) {
  return p == Polarity::Positive ? Polarity::Negative : Polarity::Positive;
}

}  // namespace

PortRef ComponentDefinition::provide(const PortTypePtr& type) {
  return runtime().declare(self(), type, PortRole::Provided).inside;
}

PortRef ComponentDefinition::require(const PortTypePtr& type) {
  return runtime().declare(self(), type, PortRole::Required).inside;
}

void ComponentDefinition::subscribe(const PortRef& port, const EventKind& kind, Handler handler) {
  runtime().subscribe(self(), port, kind, std::move(handler));
}

void ComponentDefinition::trigger(const Event& event, const PortRef& port) {
  runtime().trigger(event, port);
}

const PortPair* Component::find_pair(const PortTypePtr& type) const {
  for (const auto& p : pairs_) {
    if (p.inside.type_ptr() == type) return &p;
  }
  return nullptr;
}

namespace {
const PortPair& require_pair(const Component& c, const PortTypePtr& type) {
  const PortPair* p = c.find_pair(type);
  if (p == nullptr) {
    throw std::invalid_argument("component " + c.name() + " declares no port of type " +
                                type->id);
  }
  return *p;
}
}  // namespace

PortRef Component::positive(const PortTypePtr& type) const {
  return require_pair(*this, type).positive();
}
PortRef Component::negative(const PortTypePtr& type) const {
  return require_pair(*this, type).negative();
}
PortRef Component::outside(const PortTypePtr& type) const {
  return require_pair(*this, type).outside;
}
PortRef Component::inside(const PortTypePtr& type) const {
  return require_pair(*this, type).inside;
}

bool Component::wait_idle(std::chrono::steady_clock::time_point deadline) const {
  std::unique_lock lock(idle_mutex_);
  return idle_cv_.wait_until(lock, deadline, [&] { return work_count() == 0; });
}

Runtime::Runtime() : Runtime(Options{}) {}

Runtime::Runtime(Options options) {
  std::size_t n = options.executors.value_or(std::max(1u, std::thread::hardware_concurrency()));
  workers_.reserve(n);
  for (std::size_t i = 0; i < n; ++i) workers_.emplace_back([this] { worker_loop(); });
}

Runtime::~Runtime() { shutdown(); }

void Runtime::shutdown() {
  {
    std::lock_guard lock(pool_mutex_);
    if (stopping_) return;
    stopping_ = true;
  }
  pool_cv_.notify_all();
  for (auto& w : workers_) {
    if (w.joinable()) w.join();
  }
}

Component& Runtime::create_with(Component* parent, Scheduler scheduler,
                                const DefinitionFactory& make, std::string name) {
  const ComponentId id = next_id_++;
  std::unique_ptr<Component> owned(new Component(*this, id, std::move(name), parent,
                                                 scheduler.mode));
  Component& c = *owned;
  {
    std::unique_lock lock(topology_mutex_);
    components_.push_back(std::move(owned));
  }
  try {
    c.definition_ = make(ComponentContext(*this, c));
  } catch (...) {
    std::unique_lock lock(topology_mutex_);
    for (const auto& p : c.pairs_) {
      sides_.erase(p.inside.uid());
      sides_.erase(p.outside.uid());
    }
    std::erase_if(components_, [&](const auto& e) { return e.get() == &c; });
    throw;
  }
  return c;
}

PortPair Runtime::declare(Component& c, const PortTypePtr& type, PortRole role) {
  if (!type) throw InvalidDefinition("null port type");
  if (c.find_pair(type) != nullptr) {
    throw InvalidDefinition("component " + c.name() + " declares port type " + type->id +
                            " twice");
  }
  Component* outside_owner = c.parent_ != nullptr ? c.parent_ : &c;
  PortPair pair = make_port_pair(type->id, type, role, c.id(), outside_owner->id());
  c.pairs_.push_back(pair);
  std::unique_lock lock(topology_mutex_);
  sides_[pair.inside.uid()] = Side{pair.inside, pair.outside, &c, {}, {}};
  sides_[pair.outside.uid()] = Side{pair.outside, pair.inside, outside_owner, {}, {}};
  return pair;
}

void Runtime::subscribe(Component& owner, const PortRef& port, std::optional<EventKind> kind,
                        Handler handler) {
  std::unique_lock lock(topology_mutex_);
  auto it = sides_.find(port.uid());
  if (it == sides_.end() || !(it->second.ref == port)) {
    throw InvalidDefinition("unknown port " + port.id());
  }
  if (it->second.owner != &owner) {
    throw InvalidDefinition("component " + owner.name() + " does not own port side " +
                            port.id() + "/" + std::string(to_string(port.polarity())));
  }
  if (kind && !port.type().allows(*kind, port.polarity())) {
    throw InvalidDefinition("port " + port.id() + " does not deliver " + kind->name() + " on its " +
                            std::string(to_string(port.polarity())) + " side");
  }
  it->second.subscriptions.push_back(Subscription{owner.id(), std::move(kind), std::move(handler)});
}

Channel Runtime::connect(const PortRef& a, const PortRef& b) {
  if (!a || !b) throw IncompatiblePorts("null port");
  if (a.type_ptr() != b.type_ptr()) {
    throw IncompatiblePorts("port types differ: " + a.type().id + " vs " + b.type().id);
  }
  if (a.polarity() == b.polarity()) {
    throw IncompatiblePorts("both sides are " + std::string(to_string(a.polarity())));
  }
  std::unique_lock lock(topology_mutex_);
  auto ia = sides_.find(a.uid());
  auto ib = sides_.find(b.uid());
  if (ia == sides_.end() || ib == sides_.end()) throw IncompatiblePorts("unknown port side");
  ia->second.peers.push_back(b);
  ib->second.peers.push_back(a);
  return Channel{a, b};
}

void Runtime::trigger(const Event& event, const PortRef& port) {
  const Polarity travel = opposite(port.polarity());
  if (!port.type().allows(event.kind, travel)) {
    std::ostringstream msg;
    msg << "port " << port.id() << " does not carry " << event.kind.name() << " from its "
        << to_string(port.polarity()) << " side";
    throw TypeDirectionViolation(msg.str());
  }
  PortRef twin;
  {
    std::shared_lock lock(topology_mutex_);
    auto it = sides_.find(port.uid());
    if (it == sides_.end()) throw std::invalid_argument("unknown port " + port.id());
    twin = it->second.twin;
  }
  std::vector<std::uint64_t> visited;
  emerge(event, twin, visited);
}

void Runtime::emerge(const Event& event, const PortRef& at, std::vector<std::uint64_t>& visited) {
  if (std::find(visited.begin(), visited.end(), at.uid()) != visited.end()) return;
  visited.push_back(at.uid());

  Component* owner = nullptr;
  bool wanted = false;
  std::vector<PortRef> peers;
  std::vector<PortRef> next;
  {
    std::shared_lock lock(topology_mutex_);
    const Side& side = sides_.at(at.uid());
    owner = side.owner;
    for (const auto& s : side.subscriptions) {
      if (!s.kind || event.kind.is_assignable_to(*s.kind)) {
        wanted = true;
        break;
      }
    }
    for (const auto& p : side.peers) {
      next.push_back(sides_.at(p.uid()).twin);
      visited.push_back(p.uid());
    }
  }
  if (wanted) deliver(*owner, at, event);
  for (const auto& n : next) emerge(event, n, visited);
}

void Runtime::deliver(Component& c, const PortRef& port, const Event& event) {
  c.work_.fetch_add(1, std::memory_order_acq_rel);
  bool need_schedule = false;
  {
    std::lock_guard lock(c.queue_mutex_);
    c.queue_.push_back(Component::Delivery{port, event});
    if (!c.scheduled_) {
      c.scheduled_ = true;
      need_schedule = true;
    }
  }
  if (c.mode_ == SchedulerMode::CallingFlow) {
    // Drain inline; a nested delivery on this flow is picked up by the
    // outermost drain loop.
    std::unique_lock exec(c.exec_mutex_);
    while (execute_ready(c)) {
    }
    return;
  }
  if (need_schedule) schedule(c);
}

void Runtime::schedule(Component& c) {
  {
    std::lock_guard lock(pool_mutex_);
    if (workers_.empty()) return;
    ready_.push_back(&c);
  }
  pool_cv_.notify_one();
}

bool Runtime::execute_ready(Component& c) {
  std::unique_lock exec(c.exec_mutex_);
  std::optional<Component::Delivery> d;
  {
    std::lock_guard lock(c.queue_mutex_);
    if (c.queue_.empty()) {
      c.scheduled_ = false;
      return false;
    }
    d.emplace(std::move(c.queue_.front()));
    c.queue_.pop_front();
  }
  run_delivery(c, *d);
  return true;
}

void Runtime::run_delivery(Component& c, const Component::Delivery& d) {
  std::vector<Handler> handlers;
  {
    std::shared_lock lock(topology_mutex_);
    const Side& side = sides_.at(d.port.uid());
    for (const auto& s : side.subscriptions) {
      if (!s.kind || d.event.kind.is_assignable_to(*s.kind)) handlers.push_back(s.handler);
    }
  }
  for (const auto& h : handlers) {
    try {
      h(d.event);
    } catch (const std::exception& ex) {
      report(HandlerFault{c.id(), describe(d.event), ex.what()});
    } catch (...) {
      report(HandlerFault{c.id(), describe(d.event), "unknown exception"});
    }
  }
  finish_one(c);
}

void Runtime::finish_one(Component& c) {
  if (c.work_.fetch_sub(1, std::memory_order_acq_rel) == 1) {
    std::lock_guard lock(c.idle_mutex_);
    c.idle_cv_.notify_all();
  }
}

void Runtime::worker_loop() {
  for (;;) {
    Component* c = nullptr;
    {
      std::unique_lock lock(pool_mutex_);
      pool_cv_.wait(lock, [&] { return stopping_ || !ready_.empty(); });
      if (stopping_) return;
      c = ready_.front();
      ready_.pop_front();
    }
    // One event per turn keeps executors fair across components.
    execute_ready(*c);
    bool again = false;
    {
      std::lock_guard lock(c->queue_mutex_);
      if (c->queue_.empty()) {
        c->scheduled_ = false;
      } else {
        again = true;
      }
    }
    if (again) schedule(*c);
  }
}

void Runtime::report(const HandlerFault& fault) {
  std::function<void(const HandlerFault&)> sink;
  {
    std::lock_guard lock(fault_mutex_);
    faults_.push_back(fault);
    sink = fault_sink_;
  }
  if (sink) sink(fault);
}

void Runtime::set_fault_sink(std::function<void(const HandlerFault&)> sink) {
  std::lock_guard lock(fault_mutex_);
  fault_sink_ = std::move(sink);
}

std::vector<HandlerFault> Runtime::faults() const {
  std::lock_guard lock(fault_mutex_);
  return faults_;
}

}  // namespace ktest
