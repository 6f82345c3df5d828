#include "ov3r/reservoir.hpp"

#include <algorithm>
#include <cmath>

#include "ov3r/errors.hpp"

namespace ov3r {

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("cosine_similarity: lengths differ");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

Reservoir::Reservoir(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ContractError("reservoir capacity must be positive");
}

void Reservoir::update(ReservoirEntry entry, std::mt19937_64& rng) {
  for (const double v : entry.key) {
    if (!std::isfinite(v)) throw NumericError("reservoir: non-finite retrieval key");
  }
  for (auto& e : entries_) {
    if (e.keyframe == entry.keyframe) {
      e = std::move(entry);
      return;
    }
  }
  ++seen_;
  if (entries_.size() < capacity_) {
    entries_.push_back(std::move(entry));
    return;
  }
  std::uniform_int_distribution<std::uint64_t> slot(0, seen_ - 1);
  const auto j = slot(rng);
  if (j < capacity_) entries_[static_cast<std::size_t>(j)] = std::move(entry);
}

std::vector<std::uint32_t> Reservoir::retrieve(std::span<const double> query, std::size_t k) const {
  if (entries_.empty()) throw ContractError("retrieve_correlated: reservoir is empty");
  std::vector<std::pair<double, std::uint32_t>> scored;
  scored.reserve(entries_.size());
  for (const auto& e : entries_) scored.emplace_back(cosine_similarity(query, e.key), e.keyframe);
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::uint32_t> out;
  for (std::size_t i = 0; i < std::min(k, scored.size()); ++i) out.push_back(scored[i].second);
  return out;
}

bool Reservoir::contains(std::uint32_t keyframe) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.keyframe == keyframe; });
}

}  // namespace ov3r
