#include "dmpo/replay_buffer.hpp"

namespace dmpo {

EnvBuffer::EnvBuffer(std::size_t capacity, std::size_t num_agents, std::size_t state_dim,
                     std::size_t action_dim)
    : buffer_(capacity, [=](const Transition& t) { validate_transition(t, num_agents, state_dim, action_dim); }) {}

void EnvBuffer::push(Transition t) {
  bool done = t.d;
  std::uint64_t seq = buffer_.seq_of(buffer_.size());
  buffer_.push(std::move(t));
  if (done) boundaries_.push_back(seq);
  std::uint64_t front = buffer_.front_seq();
  while (!boundaries_.empty() && boundaries_.front() < front) {
    evicted_boundary_ = static_cast<std::int64_t>(boundaries_.front());
    boundaries_.pop_front();
  }
}

std::pair<std::size_t, std::size_t> EnvBuffer::latest_episode() const {
  if (boundaries_.empty()) throw BufferError("no complete episode recorded yet");
  std::uint64_t last = boundaries_.back();
  std::int64_t prev = boundaries_.size() >= 2 ? static_cast<std::int64_t>(boundaries_[boundaries_.size() - 2])
                                              : evicted_boundary_;
  auto start = static_cast<std::uint64_t>(prev + 1);
  std::uint64_t front = buffer_.front_seq();
  if (start < front) throw BufferError("most recent episode is partially evicted");
  return {static_cast<std::size_t>(start - front), static_cast<std::size_t>(last - front + 1)};
}

std::vector<GlobalState> EnvBuffer::sample_branch_starts(std::size_t m, Rng& rng) const {
  auto [first, last] = latest_episode();
  std::vector<GlobalState> starts;
  starts.reserve(m);
  for (std::size_t k = 0; k < m; ++k) starts.push_back(buffer_[first + rng.index(last - first)].s);
  return starts;
}

}  // namespace dmpo
