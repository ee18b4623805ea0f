// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "microlink/errors.hpp"

namespace microlink {

// Allelic partition r: r[s] is the number of clusters of size s (s >= 1).
// Stored densely up to the largest occupied size.
class AllelicVector {
 public:
  AllelicVector() = default;

  // counts[k] is r_{k+1}.
  explicit AllelicVector(std::vector<int> counts) : counts_(std::move(counts)) {
    for (int c : counts_) MICROLINK_REQUIRE(c >= 0, "negative allelic count");
    trim();
  }

  static AllelicVector from_sizes(std::span<const int> sizes) {
    AllelicVector r;
    for (int s : sizes) r.add(s, 1);
    return r;
  }

  int operator[](std::size_t size) const {
    return (size >= 1 && size <= counts_.size()) ? counts_[size - 1] : 0;
  }

  void add(std::size_t size, int delta) {
    MICROLINK_REQUIRE(size >= 1, "cluster size must be positive");
    if (size > counts_.size()) counts_.resize(size, 0);
    counts_[size - 1] += delta;
    MICROLINK_REQUIRE(counts_[size - 1] >= 0, "allelic count went negative");
    trim();
  }

  // Largest occupied size (0 for the empty partition).
  std::size_t max_size() const { return counts_.size(); }

  // Sum_i i * r_i.
  std::size_t records() const {
    std::size_t total = 0;
    for (std::size_t k = 0; k < counts_.size(); ++k)
      total += (k + 1) * static_cast<std::size_t>(counts_[k]);
    return total;
  }

  // Sum_i r_i.
  std::size_t clusters() const {
    std::size_t total = 0;
    for (int c : counts_) total += static_cast<std::size_t>(c);
    return total;
  }

  // r_1..r_length, zero padded.
  std::vector<int> dense(std::size_t length) const {
    std::vector<int> out(length, 0);
    for (std::size_t k = 0; k < std::min(length, counts_.size()); ++k)
      out[k] = counts_[k];
    return out;
  }

  bool operator==(const AllelicVector& other) const = default;

 private:
  void trim() {
    while (!counts_.empty() && counts_.back() == 0) counts_.pop_back();
  }

  std::vector<int> counts_;
};

// Canonical linkage structure: cluster labels are 0..N-1 in order of first
// appearance (the 1-based form used on disk is label + 1).
class LinkageState {
 public:
  LinkageState() = default;

  // Canonicalizes arbitrary integer identities (e.g. ground-truth ids).
  template <typename Int>
  static LinkageState from_labels(std::span<const Int> raw) {
    LinkageState out;
    out.labels_.resize(raw.size());
    std::unordered_map<long long, int> seen;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      auto [it, inserted] =
          seen.emplace(static_cast<long long>(raw[i]), static_cast<int>(seen.size()));
      out.labels_[i] = it->second;
    }
    out.rebuild();
    return out;
  }

  static LinkageState from_labels(const std::vector<int>& raw) {
    return from_labels(std::span<const int>(raw));
  }

  static LinkageState singletons(std::size_t records) {
    std::vector<int> raw(records);
    for (std::size_t i = 0; i < records; ++i) raw[i] = static_cast<int>(i);
    return from_labels(raw);
  }

  std::size_t records() const { return labels_.size(); }
  std::size_t clusters() const { return sizes_.size(); }
  int label(std::size_t i) const { return labels_[i]; }
  std::span<const int> labels() const { return labels_; }
  std::span<const int> sizes() const { return sizes_; }
  const AllelicVector& allelic() const { return allelic_; }

  std::vector<int> one_based() const {
    std::vector<int> out(labels_.begin(), labels_.end());
    for (int& v : out) ++v;
    return out;
  }

  std::size_t max_cluster_size() const {
    return sizes_.empty() ? 0 : static_cast<std::size_t>(
                                    *std::max_element(sizes_.begin(), sizes_.end()));
  }

  bool together(std::size_t i, std::size_t j) const { return labels_[i] == labels_[j]; }

  // Induced set partitions are equal (labels may differ only by renaming).
  bool same_partition(const LinkageState& other) const {
    return labels_ == other.labels_;  // both canonical
  }

  bool operator==(const LinkageState& other) const { return labels_ == other.labels_; }

 private:
  void rebuild() {
    int n = 0;
    for (int l : labels_) n = std::max(n, l + 1);
    sizes_.assign(static_cast<std::size_t>(n), 0);
    for (int l : labels_) ++sizes_[static_cast<std::size_t>(l)];
    allelic_ = AllelicVector::from_sizes(sizes_);
  }

  std::vector<int> labels_;
  std::vector<int> sizes_;
  AllelicVector allelic_;
};

// Mutable partition used inside the sampler. Labels stay compact
// (0..N-1, every label used) after every operation but are only put in
// first-appearance order by canonicalize().
class Partition {
 public:
  Partition() = default;

  explicit Partition(const LinkageState& xi) { reset(xi); }

  void reset(const LinkageState& xi) {
    const std::size_t n_records = xi.records();
    labels_.assign(xi.labels().begin(), xi.labels().end());
    members_.assign(xi.clusters(), {});
    slot_.assign(n_records, 0);
    for (std::size_t i = 0; i < n_records; ++i) {
      auto& m = members_[static_cast<std::size_t>(labels_[i])];
      slot_[i] = static_cast<int>(m.size());
      m.push_back(static_cast<int>(i));
    }
    allelic_.assign(n_records + 2, 0);
    for (const auto& m : members_) ++allelic_[m.size()];
  }

  std::size_t records() const { return labels_.size(); }
  std::size_t clusters() const { return members_.size(); }
  int label(std::size_t i) const { return labels_[i]; }
  std::span<const int> labels() const { return labels_; }
  int size(std::size_t c) const { return static_cast<int>(members_[c].size()); }
  std::span<const int> members(std::size_t c) const { return members_[c]; }

  // Dense allelic counts indexed by size (index 0 unused).
  std::span<const int> allelic_counts() const { return allelic_; }

  // Appends an empty cluster and returns its label.
  int create_cluster() {
    members_.emplace_back();
    ++allelic_[0];
    return static_cast<int>(members_.size() - 1);
  }

  struct Removal {
    bool removed = false;
    int vacated = -1;  // label that became empty
    int moved = -1;    // label whose contents now live at `vacated` (-1 if none)
  };

  // Moves record i into cluster `dest`. If the source cluster empties it is
  // deleted by moving the last cluster into its slot; the caller must mirror
  // that relabeling (moved -> vacated) in any per-cluster arrays.
  Removal move(std::size_t i, int dest) {
    const int src = labels_[i];
    if (src == dest) return {};
    detach(i);
    attach(i, dest);
    if (!members_[static_cast<std::size_t>(src)].empty()) return {};
    return erase_cluster(src);
  }

  // Reorders labels into first-appearance order. Returns new_of_old.
  std::vector<int> canonicalize() {
    const std::size_t n = members_.size();
    std::vector<int> new_of_old(n, -1);
    int next = 0;
    for (int l : labels_) {
      if (new_of_old[static_cast<std::size_t>(l)] < 0)
        new_of_old[static_cast<std::size_t>(l)] = next++;
    }
    std::vector<std::vector<int>> reordered(n);
    for (std::size_t c = 0; c < n; ++c)
      reordered[static_cast<std::size_t>(new_of_old[c])] = std::move(members_[c]);
    members_ = std::move(reordered);
    for (int& l : labels_) l = new_of_old[static_cast<std::size_t>(l)];
    return new_of_old;
  }

  LinkageState snapshot() const { return LinkageState::from_labels(labels_); }

  // Full consistency check; throws ContractViolation.
  void check() const {
    std::vector<int> sizes(members_.size(), 0);
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      const int l = labels_[i];
      MICROLINK_REQUIRE(l >= 0 && static_cast<std::size_t>(l) < members_.size(),
                        "label out of range");
      ++sizes[static_cast<std::size_t>(l)];
      MICROLINK_REQUIRE(members_[static_cast<std::size_t>(l)][static_cast<std::size_t>(slot_[i])] ==
                            static_cast<int>(i),
                        "member slot mismatch");
    }
    std::vector<int> allelic(labels_.size() + 2, 0);
    for (std::size_t c = 0; c < members_.size(); ++c) {
      MICROLINK_REQUIRE(sizes[c] > 0, "empty cluster");
      MICROLINK_REQUIRE(static_cast<std::size_t>(sizes[c]) == members_[c].size(),
                        "cluster size mismatch");
      ++allelic[members_[c].size()];
    }
    MICROLINK_REQUIRE(allelic == allelic_, "allelic counts out of sync");
  }

 private:
  void detach(std::size_t i) {
    auto& m = members_[static_cast<std::size_t>(labels_[i])];
    --allelic_[m.size()];
    const int pos = slot_[i];
    const int last = m.back();
    m[static_cast<std::size_t>(pos)] = last;
    slot_[static_cast<std::size_t>(last)] = pos;
    m.pop_back();
    ++allelic_[m.size()];
  }

  void attach(std::size_t i, int dest) {
    auto& m = members_[static_cast<std::size_t>(dest)];
    --allelic_[m.size()];
    labels_[i] = dest;
    slot_[i] = static_cast<int>(m.size());
    m.push_back(static_cast<int>(i));
    ++allelic_[m.size()];
  }

  Removal erase_cluster(int c) {
    --allelic_[0];
    Removal out{true, c, -1};
    const int last = static_cast<int>(members_.size()) - 1;
    if (c != last) {
      members_[static_cast<std::size_t>(c)] = std::move(members_.back());
      for (int i : members_[static_cast<std::size_t>(c)]) labels_[static_cast<std::size_t>(i)] = c;
      out.moved = last;
    }
    members_.pop_back();
    return out;
  }

  std::vector<int> labels_;
  std::vector<std::vector<int>> members_;
  std::vector<int> slot_;
  std::vector<int> allelic_;  // allelic_[0] tracks empty clusters in flight
};

}  // namespace microlink
