#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <stdexcept>
#include <vector>

#include "dmpo/mdp.hpp"
#include "dmpo/rng.hpp"

namespace dmpo {

struct BufferError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bounded FIFO of records. Every pushed record gets a monotone sequence
/// number; the oldest records are evicted first once capacity is reached.
template <typename Record>
class ReplayBuffer {
 public:
  using Validator = std::function<void(const Record&)>;

  explicit ReplayBuffer(std::size_t capacity, Validator validator = {})
      : capacity_(capacity), validator_(std::move(validator)) {
    if (capacity_ == 0) throw BufferError("replay buffer capacity must be positive");
  }

  void push(Record record) {
    if (validator_) validator_(record);
    entries_.push_back(std::move(record));
    ++next_seq_;
    if (entries_.size() > capacity_) entries_.pop_front();
  }

  void clear() { entries_.clear(); }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t capacity() const { return capacity_; }
  const Record& operator[](std::size_t i) const { return entries_[i]; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  /// Sequence number of the oldest retained record.
  std::uint64_t front_seq() const { return next_seq_ - entries_.size(); }
  std::uint64_t seq_of(std::size_t i) const { return front_seq() + i; }

  /// Uniform sampling with replacement.
  std::vector<Record> sample_minibatch(std::size_t batch_size, Rng& rng) const {
    std::vector<Record> out;
    out.reserve(batch_size);
    for (std::size_t idx : sample_indices(batch_size, rng)) out.push_back(entries_[idx]);
    return out;
  }

  std::vector<std::size_t> sample_indices(std::size_t batch_size, Rng& rng) const {
    if (entries_.empty()) throw BufferError("cannot sample from an empty buffer");
    std::vector<std::size_t> idx(batch_size);
    for (auto& k : idx) k = rng.index(entries_.size());
    return idx;
  }

 private:
  std::size_t capacity_;
  Validator validator_;
  std::deque<Record> entries_;
  std::uint64_t next_seq_ = 0;
};

/// Real-environment buffer. Tracks where episodes end so branch starts can be
/// drawn from the latest completed episode.
class EnvBuffer {
 public:
  EnvBuffer(std::size_t capacity, std::size_t num_agents, std::size_t state_dim, std::size_t action_dim);

  void push(Transition t);
  std::size_t size() const { return buffer_.size(); }
  bool empty() const { return buffer_.empty(); }
  const Transition& operator[](std::size_t i) const { return buffer_[i]; }
  auto begin() const { return buffer_.begin(); }
  auto end() const { return buffer_.end(); }
  std::uint64_t seq_of(std::size_t i) const { return buffer_.seq_of(i); }
  const ReplayBuffer<Transition>& records() const { return buffer_; }

  std::vector<Transition> sample_minibatch(std::size_t batch_size, Rng& rng) const {
    return buffer_.sample_minibatch(batch_size, rng);
  }

  /// Index range [first, last) of the most recent completed episode.
  /// Throws BufferError when no complete episode is retained.
  std::pair<std::size_t, std::size_t> latest_episode() const;

  /// `m` global states drawn uniformly from the s fields of the latest episode.
  std::vector<GlobalState> sample_branch_starts(std::size_t m, Rng& rng) const;

 private:
  ReplayBuffer<Transition> buffer_;
  std::deque<std::uint64_t> boundaries_;  // sequence numbers of records with d = true
  std::int64_t evicted_boundary_ = -1;    // last boundary that fell off the front
};

}  // namespace dmpo
