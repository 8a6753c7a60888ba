#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "mi9/event.hpp"

namespace mi9 {

struct ReleasedEvent {
  Event event;
  bool late = false;  // arrived after its release point had already passed
};

// Bounded-time sorting stage ahead of the monitors. An event is held until
// the high watermark (max observed timestamp) has advanced past
// timestamp + window, at which point it is released in (timestamp, event_id)
// order. Events displaced by less than the window therefore come out fully
// sorted. An event arriving after its slot has been released is passed
// through immediately and flagged late; downstream matching treats such
// events conservatively, trading possible missed detections for never
// fabricating one.
class ReorderBuffer {
 public:
  explicit ReorderBuffer(std::int64_t window_ms) : window_ms_(window_ms) {}

  std::vector<ReleasedEvent> push(Event e) {
    std::vector<ReleasedEvent> out;
    if (e.timestamp_ms > watermark_ms_) watermark_ms_ = e.timestamp_ms;

    std::pair<std::int64_t, std::string> key{e.timestamp_ms, e.event_id};
    if (released_any_ && key <= last_released_) {
      late_count_++;
      out.push_back({std::move(e), true});
      drain(out);
      return out;
    }
    pending_.emplace(std::move(key), std::move(e));
    drain(out);
    return out;
  }

  std::vector<ReleasedEvent> flush() {
    std::vector<ReleasedEvent> out;
    for (auto& [key, event] : pending_) {
      note_release(key);
      out.push_back({std::move(event), false});
    }
    pending_.clear();
    return out;
  }

  std::int64_t watermark_ms() const { return watermark_ms_; }
  std::int64_t window_ms() const { return window_ms_; }
  std::uint64_t late_count() const { return late_count_; }
  std::size_t pending_count() const { return pending_.size(); }

 private:
  void drain(std::vector<ReleasedEvent>& out) {
    while (!pending_.empty()) {
      auto it = pending_.begin();
      if (it->first.first + window_ms_ > watermark_ms_) break;
      note_release(it->first);
      out.push_back({std::move(it->second), false});
      pending_.erase(it);
    }
  }

  void note_release(const std::pair<std::int64_t, std::string>& key) {
    if (!released_any_ || last_released_ < key) {
      last_released_ = key;
      released_any_ = true;
    }
  }

  std::int64_t window_ms_;
  std::int64_t watermark_ms_ = 0;
  std::map<std::pair<std::int64_t, std::string>, Event> pending_;
  std::pair<std::int64_t, std::string> last_released_{-1, ""};
  bool released_any_ = false;
  std::uint64_t late_count_ = 0;
};

}  // namespace mi9
