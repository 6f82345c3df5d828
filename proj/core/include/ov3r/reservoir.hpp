#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "ov3r/geometry.hpp"

namespace ov3r {

struct ReservoirEntry {
  std::uint32_t keyframe = 0;
  Vec3 centroid = Vec3::Zero();  // world-frame summary of the keyframe's points
  std::size_t point_count = 0;
  std::vector<double> key;       // retrieval key (mean-pooled features)
};

/// Bounded keyframe store filled by uniform reservoir sampling.
class Reservoir {
 public:
  explicit Reservoir(std::size_t capacity = 64);

  /// Inserts while below capacity; afterwards the n-th distinct keyframe
  /// replaces a uniformly chosen slot with probability capacity / n. An id
  /// already present is replaced in place and does not count as new.
  void update(ReservoirEntry entry, std::mt19937_64& rng);

  /// Up to k keyframe ids ranked by cosine similarity of their keys to
  /// `query`, descending, ties broken by lower id. Throws ContractError when
  /// the reservoir is empty.
  std::vector<std::uint32_t> retrieve(std::span<const double> query, std::size_t k) const;

  bool contains(std::uint32_t keyframe) const;
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  std::uint64_t seen() const noexcept { return seen_; }
  const std::vector<ReservoirEntry>& entries() const noexcept { return entries_; }

 private:
  std::size_t capacity_;
  std::uint64_t seen_ = 0;
  std::vector<ReservoirEntry> entries_;
};

double cosine_similarity(std::span<const double> a, std::span<const double> b);

}  // namespace ov3r
