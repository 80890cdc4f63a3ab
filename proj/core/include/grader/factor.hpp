#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace grader {

enum class FactorKind { discrete, continuous };

// One component space of a factored state or action space.
//
// A discrete factor holds `length` categorical components, each in
// [0, cardinality). Most factors have length 1; a Stack tower factor carries
// one categorical per slot. Encoding is one-hot per component; with
// `zero_first` set, category 0 encodes as the all-zero vector (an "empty" or
// "absent" marker) so the component takes cardinality-1 encoded dims.
//
// A continuous factor is a real vector with per-element box bounds.
struct FactorSpace {
  std::string name;
  FactorKind kind = FactorKind::discrete;
  int cardinality = 0;
  int length = 1;
  bool zero_first = false;
  std::vector<double> lo;
  std::vector<double> hi;

  static FactorSpace discrete(std::string name, int cardinality, int length = 1,
                              bool zero_first = false);
  static FactorSpace continuous(std::string name, std::vector<double> lo, std::vector<double> hi);

  bool is_discrete() const { return kind == FactorKind::discrete; }
  // Number of raw values (categorical components or real elements).
  int width() const;
  int encoded_dim() const;
  // Throws ConfigError when the space itself violates its invariants.
  void validate() const;

  friend bool operator==(const FactorSpace&, const FactorSpace&) = default;
};

void to_json(nlohmann::json& j, const FactorSpace& s);
void from_json(const nlohmann::json& j, FactorSpace& s);

// Ordered list of factor spaces with precomputed raw and encoded offsets.
class FactorLayout {
 public:
  FactorLayout() = default;
  explicit FactorLayout(std::vector<FactorSpace> spaces);

  int size() const { return static_cast<int>(spaces_.size()); }
  const FactorSpace& operator[](int i) const { return spaces_[i]; }
  const std::vector<FactorSpace>& spaces() const { return spaces_; }

  int width() const { return width_; }
  int offset(int i) const { return offsets_[i]; }
  int encoded_dim() const { return encoded_dim_; }
  int encoded_offset(int i) const { return encoded_offsets_[i]; }
  int index_of(const std::string& name) const;
  bool all_discrete() const;

  std::span<const double> view(std::span<const double> values, int i) const {
    return values.subspan(offsets_[i], spaces_[i].width());
  }

  // Throws DomainError naming the first factor out of its domain.
  void validate(std::span<const double> values) const;
  bool contains(std::span<const double> values) const;

  // Writes the encoded value of factor i (encoded_dim of that factor) to out.
  void encode_factor(std::span<const double> values, int i, std::span<double> out) const;
  std::vector<double> encode(std::span<const double> values) const;

  friend bool operator==(const FactorLayout& a, const FactorLayout& b) {
    return a.spaces_ == b.spaces_;
  }

 private:
  std::vector<FactorSpace> spaces_;
  std::vector<int> offsets_;
  std::vector<int> encoded_offsets_;
  int width_ = 0;
  int encoded_dim_ = 0;
};

void to_json(nlohmann::json& j, const FactorLayout& l);
void from_json(const nlohmann::json& j, FactorLayout& l);

// Continuous elements map to [-1, 1] by their box bounds; used for both
// model inputs and the fixed-sigma likelihood.
double normalize(double x, double lo, double hi);
double denormalize(double z, double lo, double hi);

// Integer key for the value of a discrete factor (mixed radix over its
// components). Used to tabulate contingency tables.
std::int64_t category_key(const FactorSpace& space, std::span<const double> value);

template <class Tag>
struct FactorVector {
  std::vector<double> values;

  FactorVector() = default;
  explicit FactorVector(std::vector<double> v) : values(std::move(v)) {}

  std::size_t width() const { return values.size(); }
  std::span<const double> span() const { return values; }
  friend bool operator==(const FactorVector&, const FactorVector&) = default;
};

struct StateTag {};
struct ActionTag {};
using FactoredState = FactorVector<StateTag>;
using FactoredAction = FactorVector<ActionTag>;

}  // namespace grader
