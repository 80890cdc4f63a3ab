#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <string>
#include <vector>

#include "grader/mdp.hpp"
#include "grader/rng.hpp"

namespace grader {

// FIFO transition store shared by discovery and model learning. Samples keep
// their trajectory id so episodes can be reconstructed.
class ReplayBuffer {
 public:
  ReplayBuffer(MdpSpaces spaces, std::size_t capacity);

  const MdpSpaces& spaces() const { return spaces_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }

  // Appends after validating the sample; evicts the oldest when full.
  void push(TransitionSample sample);
  void clear() { samples_.clear(); }

  const TransitionSample& operator[](std::size_t i) const { return samples_[i]; }
  auto begin() const { return samples_.begin(); }
  auto end() const { return samples_.end(); }

  // Uniform with replacement. Throws EmptyBufferError on an empty buffer.
  std::vector<std::size_t> sample_indices(std::size_t batch_size, Rng& rng) const;
  std::vector<TransitionSample> sample_batch(std::size_t batch_size, std::uint64_t seed) const;

 private:
  MdpSpaces spaces_;
  std::size_t capacity_;
  std::deque<TransitionSample> samples_;
};

// Columnar snapshot: a JSON header line describing the factor spaces, then a
// CSV table with one column per factor (components space-separated), one row
// per transition.
void write_buffer_csv(std::ostream& out, const ReplayBuffer& buffer);
void save_buffer_csv(const std::string& path, const ReplayBuffer& buffer);
ReplayBuffer read_buffer_csv(std::istream& in, const std::string& name = "<stream>");
ReplayBuffer load_buffer_csv(const std::string& path);

}  // namespace grader
