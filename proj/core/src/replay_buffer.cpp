#include "grader/replay_buffer.hpp"

#include "grader/error.hpp"

namespace grader {

ReplayBuffer::ReplayBuffer(MdpSpaces spaces, std::size_t capacity)
    : spaces_(std::move(spaces)), capacity_(capacity) {
  if (capacity_ == 0) throw ConfigError("replay buffer capacity must be positive");
}

void ReplayBuffer::push(TransitionSample sample) {
  validate_sample(spaces_, sample);
  samples_.push_back(std::move(sample));
  while (samples_.size() > capacity_) samples_.pop_front();
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch_size, Rng& rng) const {
  if (samples_.empty()) throw EmptyBufferError("cannot sample from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, samples_.size() - 1);
  std::vector<std::size_t> idx(batch_size);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

std::vector<TransitionSample> ReplayBuffer::sample_batch(std::size_t batch_size, std::uint64_t seed) const {
  Rng rng(seed);
  std::vector<TransitionSample> out;
  out.reserve(batch_size);
  for (auto i : sample_indices(batch_size, rng)) out.push_back(samples_[i]);
  return out;
}

}  // namespace grader
