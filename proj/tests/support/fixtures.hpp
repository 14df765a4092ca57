#pragma once

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <vector>

#include "ktest/harness.hpp"
#include "ktest/runtime.hpp"

namespace ktest::testing {

// Ping-pong: a provided port carrying Ping requests and Pong responses.
struct PingPongTypes {
  EventKind ping = EventKind::make("Ping");
  EventKind pong = EventKind::make("Pong");
  PortTypePtr port = make_port_type("PingPongPort", {pong}, {ping});

  static const PingPongTypes& get() {
    static const PingPongTypes t;
    return t;
  }
};

class Ponger : public ComponentDefinition {
 public:
  explicit Ponger(const ComponentContext& ctx) : ComponentDefinition(ctx) {
    const auto& t = PingPongTypes::get();
    port_ = provide(t.port);
    subscribe(port_, t.ping, [this](const Event& e) {
      ++pings;
      trigger(make_event(PingPongTypes::get().pong, e.payload), port_);
    });
  }
  std::atomic<int> pings{0};

 private:
  PortRef port_;
};

// Counter: counts Inc events on a provided port.
struct CounterTypes {
  EventKind inc = EventKind::make("Inc");
  PortTypePtr port = make_port_type("CounterPort", {}, {inc});

  static const CounterTypes& get() {
    static const CounterTypes t;
    return t;
  }
};

class Counter : public ComponentDefinition {
 public:
  explicit Counter(const ComponentContext& ctx) : ComponentDefinition(ctx) {
    subscribe(provide(CounterTypes::get().port), CounterTypes::get().inc, [this](const Event&) {
      ++count;
    });
  }
  int count = 0;
};

// Emitter: on Go, publishes a scripted sequence of events e1..e9.
struct EmitterTypes {
  EventKind go = EventKind::make("Go");
  std::vector<EventKind> e;  // e[i] is "e<i>", index 0 unused
  PortTypePtr port;

  EmitterTypes() {
    e.push_back(EventKind::make("e0"));
    for (int i = 1; i <= 9; ++i) e.push_back(EventKind::make("e" + std::to_string(i)));
    std::vector<EventKind> out(e.begin() + 1, e.end());
    port = make_port_type("EmitterPort", out, {go});
  }
  Event event(int i) const { return make_event(e.at(i)); }

  static const EmitterTypes& get() {
    static const EmitterTypes t;
    return t;
  }
};

class Emitter : public ComponentDefinition {
 public:
  Emitter(const ComponentContext& ctx, std::vector<int> script)
      : ComponentDefinition(ctx), script_(std::move(script)) {
    port_ = provide(EmitterTypes::get().port);
    subscribe(port_, EmitterTypes::get().go, [this](const Event&) {
      for (int i : script_) trigger(EmitterTypes::get().event(i), port_);
    });
  }

 private:
  std::vector<int> script_;
  PortRef port_;
};

/// Peer on the required side of EmitterPort; counts receipts per index.
class Receiver : public ComponentDefinition {
 public:
  explicit Receiver(const ComponentContext& ctx) : ComponentDefinition(ctx) {
    const auto& t = EmitterTypes::get();
    const PortRef p = require(t.port);
    for (int i = 1; i <= 9; ++i) {
      subscribe(p, t.e[i], [this, i](const Event&) { received[i].fetch_add(1); });
    }
  }
  std::atomic<int> received[10] = {};
};

// Request-response: the CUT requires a service port and is driven through a
// provided control port.
struct ReqResTypes {
  EventKind start = EventKind::make("Start");
  EventKind request = EventKind::make("Request");
  EventKind response = EventKind::make("Response");
  PortTypePtr control = make_port_type("ControlPort", {}, {start});
  PortTypePtr service = make_port_type("ServicePort", {response}, {request});

  static const ReqResTypes& get() {
    static const ReqResTypes t;
    return t;
  }
};

class Requester : public ComponentDefinition {
 public:
  Requester(const ComponentContext& ctx, int n, unsigned seed) : ComponentDefinition(ctx) {
    const auto& t = ReqResTypes::get();
    service_ = require(t.service);
    std::mt19937 rng(seed);
    std::uniform_int_distribution<int> id(0, 1'000'000);
    while (static_cast<int>(ids.size()) < n) ids.insert(id(rng));
    order_.assign(ids.begin(), ids.end());
    std::shuffle(order_.begin(), order_.end(), rng);
    subscribe(provide(t.control), t.start, [this](const Event&) {
      for (int i : order_) {
        trigger(make_event(ReqResTypes::get().request, {{"id", i}}), service_);
      }
    });
    subscribe(service_, t.response, [this](const Event& e) {
      answered.insert(e.payload.at("id").get<int>());
    });
  }
  std::set<int> ids;
  std::multiset<int> answered;

 private:
  PortRef service_;
  std::vector<int> order_;
};

/// Handler blocks until released; used to observe work counts and the
/// exclusive-execution guarantee.
class Latch : public ComponentDefinition {
 public:
  explicit Latch(const ComponentContext& ctx) : ComponentDefinition(ctx) {
    subscribe(provide(CounterTypes::get().port), CounterTypes::get().inc, [this](const Event&) {
      std::unique_lock lock(m_);
      entered = true;
      cv_.notify_all();
      cv_.wait(lock, [this] { return released_; });
      ++handled;
    });
  }
  void release() {
    std::lock_guard lock(m_);
    released_ = true;
    cv_.notify_all();
  }
  bool wait_entered(std::chrono::milliseconds timeout) {
    std::unique_lock lock(m_);
    return cv_.wait_for(lock, timeout, [this] { return entered; });
  }
  bool entered = false;
  int handled = 0;

 private:
  std::mutex m_;
  std::condition_variable cv_;
  bool released_ = false;
};

/// Throws on every Inc.
class Faulty : public ComponentDefinition {
 public:
  explicit Faulty(const ComponentContext& ctx) : ComponentDefinition(ctx) {
    subscribe(provide(CounterTypes::get().port), CounterTypes::get().inc,
              [](const Event&) { throw std::runtime_error("boom"); });
  }
};

/// Has a ping-pong port but never emits.
class Silent : public ComponentDefinition {
 public:
  explicit Silent(const ComponentContext& ctx) : ComponentDefinition(ctx) {
    provide(PingPongTypes::get().port);
  }
};

}  // namespace ktest::testing
