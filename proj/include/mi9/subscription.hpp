#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "mi9/errors.hpp"
#include "mi9/event.hpp"

namespace mi9 {

// One monitoring-module subscription. Empty filter sets match every event.
// When both filters are present an event must satisfy both.
struct Subscription {
  std::string module_id;
  int priority = 0;
  std::set<std::string> verb_prefixes;
  std::set<EventCategory> categories;

  bool matches(const Event& e) const {
    if (!verb_prefixes.empty()) {
      bool any = false;
      for (const auto& p : verb_prefixes) {
        if (e.verb.size() >= p.size() && e.verb.compare(0, p.size(), p) == 0) {
          any = true;
          break;
        }
      }
      if (!any) return false;
    }
    if (!categories.empty() && !categories.count(e.category)) return false;
    return true;
  }
};

// Immutable after engine start. Dispatch order is (ascending priority, then
// lexical module_id) regardless of insertion order.
class SubscriptionRegistry {
 public:
  void add(Subscription s) {
    for (const auto& existing : entries_) {
      if (existing.module_id == s.module_id) {
        throw Error(Errc::PolicyError, "duplicate subscription module_id: " + s.module_id);
      }
    }
    entries_.push_back(std::move(s));
    std::sort(entries_.begin(), entries_.end(), [](const Subscription& a, const Subscription& b) {
      if (a.priority != b.priority) return a.priority < b.priority;
      return a.module_id < b.module_id;
    });
  }

  struct Delivery {
    const std::string* module_id;
    const Event* event;
  };

  // Every matching subscription receives exactly one delivery.
  std::vector<Delivery> dispatch(const Event& e) const {
    std::vector<Delivery> out;
    for (const auto& sub : entries_) {
      if (sub.matches(e)) out.push_back({&sub.module_id, &e});
    }
    return out;
  }

  const std::vector<Subscription>& entries() const { return entries_; }

 private:
  std::vector<Subscription> entries_;
};

}  // namespace mi9
