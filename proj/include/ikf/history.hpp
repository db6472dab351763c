#pragma once

#include <cstddef>
#include <iterator>
#include <map>
#include <optional>
#include <utility>

#include "ikf/core.hpp"

namespace ikf {

enum class Lookup { Exact, FloorStrict, FloorInclusive, CeilStrict };

// Chronological store, at most one entry per tick. horizon 0 = unbounded,
// capacity 0 = unbounded. Eviction happens on insert only.
template <typename T>
class TimedHistory {
 public:
  using Map = std::map<Tick, T>;
  using const_iterator = typename Map::const_iterator;
  using iterator = typename Map::iterator;

  explicit TimedHistory(Tick horizon = 0, std::size_t capacity = 0) : horizon_(horizon), capacity_(capacity) {}

  void insert(Tick t, T v) {
    entries_.insert_or_assign(t, std::move(v));
    evict();
  }

  // Largest timestamp an insert at t would evict, if any.
  std::optional<Tick> would_evict(Tick t) const {
    if (entries_.empty()) return std::nullopt;
    const Tick newest = std::max(t, entries_.rbegin()->first);
    std::optional<Tick> last;
    std::size_t size = entries_.size() + (entries_.count(t) ? 0 : 1);
    for (const auto& [ts, v] : entries_) {
      const bool by_horizon = horizon_ > 0 && ts < newest - horizon_;
      const bool by_capacity = capacity_ > 0 && size > capacity_;
      if (!by_horizon && !by_capacity) break;
      last = ts;
      --size;
    }
    return last;
  }

  std::optional<Tick> key(Tick t, Lookup mode) const {
    const_iterator it;
    switch (mode) {
      case Lookup::Exact:
        it = entries_.find(t);
        break;
      case Lookup::FloorStrict:
        it = entries_.lower_bound(t);
        if (it == entries_.begin()) return std::nullopt;
        --it;
        break;
      case Lookup::FloorInclusive:
        it = entries_.upper_bound(t);
        if (it == entries_.begin()) return std::nullopt;
        --it;
        break;
      case Lookup::CeilStrict:
        it = entries_.upper_bound(t);
        break;
    }
    if (it == entries_.end()) return std::nullopt;
    return it->first;
  }

  std::optional<std::pair<Tick, T>> lookup(Tick t, Lookup mode) const {
    auto k = key(t, mode);
    if (!k) return std::nullopt;
    return std::make_pair(*k, entries_.at(*k));
  }

  const T* at(Tick t) const {
    auto it = entries_.find(t);
    return it == entries_.end() ? nullptr : &it->second;
  }
  T* at(Tick t) {
    auto it = entries_.find(t);
    return it == entries_.end() ? nullptr : &it->second;
  }

  void delete_after(Tick t) { entries_.erase(entries_.upper_bound(t), entries_.end()); }
  void erase(Tick t) { entries_.erase(t); }
  void clear() { entries_.clear(); }

  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  std::optional<Tick> oldest() const {
    if (entries_.empty()) return std::nullopt;
    return entries_.begin()->first;
  }
  std::optional<Tick> newest() const {
    if (entries_.empty()) return std::nullopt;
    return entries_.rbegin()->first;
  }
  const T& back() const { return entries_.rbegin()->second; }
  T& back() { return entries_.rbegin()->second; }

  // Newest timestamp ever evicted; entries at or before it may be missing.
  std::optional<Tick> evicted_through() const { return evicted_; }

  Tick horizon() const { return horizon_; }
  std::size_t capacity() const { return capacity_; }

  const_iterator begin() const { return entries_.begin(); }
  const_iterator end() const { return entries_.end(); }
  iterator begin() { return entries_.begin(); }
  iterator end() { return entries_.end(); }
  // entries with a < t <= b
  std::pair<const_iterator, const_iterator> range(Tick a, Tick b) const {
    return {entries_.upper_bound(a), entries_.upper_bound(b)};
  }

 private:
  void evict() {
    if (entries_.empty()) return;
    const Tick newest = entries_.rbegin()->first;
    while (!entries_.empty()) {
      const Tick ts = entries_.begin()->first;
      const bool by_horizon = horizon_ > 0 && ts < newest - horizon_;
      const bool by_capacity = capacity_ > 0 && entries_.size() > capacity_;
      if (!by_horizon && !by_capacity) break;
      evicted_ = evicted_ ? std::max(*evicted_, ts) : ts;
      entries_.erase(entries_.begin());
    }
  }

  Map entries_;
  Tick horizon_ = 0;
  std::size_t capacity_ = 0;
  std::optional<Tick> evicted_;
};

template <typename K, typename T>
class KeyedHistories {
 public:
  explicit KeyedHistories(Tick horizon = 0) : horizon_(horizon) {}

  TimedHistory<T>& ensure(const K& k) {
    auto it = map_.find(k);
    if (it == map_.end()) it = map_.emplace(k, TimedHistory<T>(horizon_)).first;
    return it->second;
  }
  TimedHistory<T>* get(const K& k) {
    auto it = map_.find(k);
    return it == map_.end() ? nullptr : &it->second;
  }
  const TimedHistory<T>* get(const K& k) const {
    auto it = map_.find(k);
    return it == map_.end() ? nullptr : &it->second;
  }
  bool contains(const K& k) const { return map_.count(k) > 0; }
  void erase(const K& k) { map_.erase(k); }
  auto erase(typename std::map<K, TimedHistory<T>>::iterator it) { return map_.erase(it); }

  void delete_after(Tick t) {
    for (auto it = map_.begin(); it != map_.end();) {
      it->second.delete_after(t);
      it = it->second.empty() ? map_.erase(it) : std::next(it);
    }
  }

  std::size_t size() const { return map_.size(); }
  auto begin() { return map_.begin(); }
  auto end() { return map_.end(); }
  auto begin() const { return map_.begin(); }
  auto end() const { return map_.end(); }

 private:
  std::map<K, TimedHistory<T>> map_;
  Tick horizon_ = 0;
};

}  // namespace ikf
