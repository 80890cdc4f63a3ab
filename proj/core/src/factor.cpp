#include "grader/factor.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "grader/error.hpp"

namespace grader {

FactorSpace FactorSpace::discrete(std::string name, int cardinality, int length, bool zero_first) {
  FactorSpace s;
  s.name = std::move(name);
  s.kind = FactorKind::discrete;
  s.cardinality = cardinality;
  s.length = length;
  s.zero_first = zero_first;
  s.validate();
  return s;
}

FactorSpace FactorSpace::continuous(std::string name, std::vector<double> lo, std::vector<double> hi) {
  FactorSpace s;
  s.name = std::move(name);
  s.kind = FactorKind::continuous;
  s.lo = std::move(lo);
  s.hi = std::move(hi);
  s.validate();
  return s;
}

int FactorSpace::width() const {
  return is_discrete() ? length : static_cast<int>(lo.size());
}

int FactorSpace::encoded_dim() const {
  if (!is_discrete()) return static_cast<int>(lo.size());
  return length * (zero_first ? cardinality - 1 : cardinality);
}

void FactorSpace::validate() const {
  if (name.empty()) throw ConfigError("factor space with empty name");
  if (is_discrete()) {
    if (cardinality < 2) throw ConfigError("factor '" + name + "': discrete cardinality must be >= 2");
    if (length < 1) throw ConfigError("factor '" + name + "': length must be >= 1");
  } else {
    if (lo.empty() || lo.size() != hi.size())
      throw ConfigError("factor '" + name + "': continuous bounds must be nonempty and equal length");
    for (std::size_t k = 0; k < lo.size(); ++k) {
      if (!(lo[k] < hi[k])) throw ConfigError("factor '" + name + "': requires lo < hi elementwise");
    }
  }
}

void to_json(nlohmann::json& j, const FactorSpace& s) {
  j = nlohmann::json{{"name", s.name}};
  if (s.is_discrete()) {
    j["kind"] = "discrete";
    j["cardinality"] = s.cardinality;
    j["length"] = s.length;
    j["zero_first"] = s.zero_first;
  } else {
    j["kind"] = "continuous";
    j["lo"] = s.lo;
    j["hi"] = s.hi;
  }
  j["encoded_dim"] = s.encoded_dim();
}

void from_json(const nlohmann::json& j, FactorSpace& s) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "discrete") {
    s = FactorSpace::discrete(j.at("name").get<std::string>(), j.at("cardinality").get<int>(),
                              j.value("length", 1), j.value("zero_first", false));
  } else if (kind == "continuous") {
    s = FactorSpace::continuous(j.at("name").get<std::string>(), j.at("lo").get<std::vector<double>>(),
                                j.at("hi").get<std::vector<double>>());
  } else {
    throw ConfigError("unknown factor kind '" + kind + "'");
  }
}

FactorLayout::FactorLayout(std::vector<FactorSpace> spaces) : spaces_(std::move(spaces)) {
  std::set<std::string> names;
  for (const auto& s : spaces_) {
    s.validate();
    if (!names.insert(s.name).second) throw ConfigError("duplicate factor name '" + s.name + "'");
    offsets_.push_back(width_);
    encoded_offsets_.push_back(encoded_dim_);
    width_ += s.width();
    encoded_dim_ += s.encoded_dim();
  }
}

int FactorLayout::index_of(const std::string& name) const {
  for (int i = 0; i < size(); ++i) {
    if (spaces_[i].name == name) return i;
  }
  throw ConfigError("no factor named '" + name + "'");
}

bool FactorLayout::all_discrete() const {
  return std::all_of(spaces_.begin(), spaces_.end(), [](const FactorSpace& s) { return s.is_discrete(); });
}

namespace {

bool value_in_domain(const FactorSpace& s, std::span<const double> v) {
  for (int k = 0; k < s.width(); ++k) {
    const double x = v[k];
    if (!std::isfinite(x)) return false;
    if (s.is_discrete()) {
      if (x != std::floor(x) || x < 0 || x >= s.cardinality) return false;
    } else if (x < s.lo[k] || x > s.hi[k]) {
      return false;
    }
  }
  return true;
}

}  // namespace

void FactorLayout::validate(std::span<const double> values) const {
  if (static_cast<int>(values.size()) != width_) {
    throw DimensionError("factor vector width " + std::to_string(values.size()) + " != layout width " +
                         std::to_string(width_));
  }
  for (int i = 0; i < size(); ++i) {
    if (!value_in_domain(spaces_[i], view(values, i))) {
      throw DomainError("value of factor '" + spaces_[i].name + "' outside its domain");
    }
  }
}

bool FactorLayout::contains(std::span<const double> values) const {
  if (static_cast<int>(values.size()) != width_) return false;
  for (int i = 0; i < size(); ++i) {
    if (!value_in_domain(spaces_[i], view(values, i))) return false;
  }
  return true;
}

void FactorLayout::encode_factor(std::span<const double> values, int i, std::span<double> out) const {
  const auto& s = spaces_[i];
  const auto v = view(values, i);
  if (s.is_discrete()) {
    const int per = s.zero_first ? s.cardinality - 1 : s.cardinality;
    std::fill(out.begin(), out.begin() + s.encoded_dim(), 0.0);
    for (int k = 0; k < s.length; ++k) {
      int c = static_cast<int>(v[k]);
      if (s.zero_first) {
        if (c == 0) continue;
        c -= 1;
      }
      out[k * per + c] = 1.0;
    }
  } else {
    for (int k = 0; k < s.width(); ++k) out[k] = normalize(v[k], s.lo[k], s.hi[k]);
  }
}

std::vector<double> FactorLayout::encode(std::span<const double> values) const {
  std::vector<double> out(encoded_dim_);
  for (int i = 0; i < size(); ++i) {
    encode_factor(values, i, std::span<double>(out).subspan(encoded_offsets_[i], spaces_[i].encoded_dim()));
  }
  return out;
}

void to_json(nlohmann::json& j, const FactorLayout& l) { j = l.spaces(); }

void from_json(const nlohmann::json& j, FactorLayout& l) {
  l = FactorLayout(j.get<std::vector<FactorSpace>>());
}

double normalize(double x, double lo, double hi) { return 2.0 * (x - lo) / (hi - lo) - 1.0; }

double denormalize(double z, double lo, double hi) { return lo + (z + 1.0) * 0.5 * (hi - lo); }

std::int64_t category_key(const FactorSpace& space, std::span<const double> value) {
  std::int64_t key = 0;
  for (int k = 0; k < space.length; ++k) {
    key = key * space.cardinality + static_cast<std::int64_t>(value[k]);
  }
  return key;
}

}  // namespace grader
