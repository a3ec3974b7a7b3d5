#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tsk/corpus.hpp"
#include "tsk/error.hpp"
#include "tsk/kernel_matrix.hpp"
#include "tsk/parallel.hpp"

namespace tsk {

enum class KernelKind { Spectrum, Presence, Intersection };

inline std::string_view to_string(KernelKind k) {
  switch (k) {
    case KernelKind::Spectrum: return "spectrum";
    case KernelKind::Presence: return "presence";
    case KernelKind::Intersection: return "intersection";
  }
  return "spectrum";
}

inline KernelKind kernel_kind_from_string(std::string_view s) {
  if (s == "spectrum") return KernelKind::Spectrum;
  if (s == "presence") return KernelKind::Presence;
  if (s == "intersection") return KernelKind::Intersection;
  throw ConfigError("unknown kernel kind '" + std::string(s) + "'");
}

/// How documents are cut into n-grams. Defaults to raw byte n-grams.
struct ProfileOptions {
  /// Count n-grams of Unicode scalars (UTF-8 decoded) instead of bytes.
  bool unicode = false;
  /// Fold ASCII letters to lower case before counting.
  bool lowercase = false;
};

/// A base string kernel over n-gram lengths [p_min, p_max]. The kernel over
/// a range is the sum of the per-length kernels.
struct KernelSpec {
  KernelKind kind = KernelKind::Intersection;
  int p_min = 5;
  int p_max = 8;
  ProfileOptions options{};

  void validate() const {
    if (p_min < 1 || p_max < p_min)
      throw ConfigError("n-gram range must satisfy 1 <= pmin <= pmax, got [" +
                        std::to_string(p_min) + ", " + std::to_string(p_max) + "]");
  }
};

/// Multiset of the contiguous n-grams of one document, for every length in
/// [p_min, p_max]. Keys are the n-gram bytes; in byte mode the key length is
/// the n-gram length, so grams of different lengths never collide.
class NGramProfile {
public:
  using Counts = std::unordered_map<std::string, std::uint32_t>;

  NGramProfile(int p_min, int p_max) : p_min_(p_min), p_max_(p_max) {}

  int p_min() const noexcept { return p_min_; }
  int p_max() const noexcept { return p_max_; }
  const Counts& counts() const noexcept { return counts_; }
  std::size_t distinct() const noexcept { return counts_.size(); }
  bool empty() const noexcept { return counts_.empty(); }

  std::uint32_t count(std::string_view gram) const {
    auto it = counts_.find(std::string(gram));
    return it == counts_.end() ? 0 : it->second;
  }

  /// Sum of all counts (total n-gram occurrences across lengths).
  std::uint64_t total() const noexcept {
    std::uint64_t t = 0;
    for (const auto& [g, c] : counts_) t += c;
    return t;
  }

  void add(std::string gram) { ++counts_[std::move(gram)]; }

private:
  int p_min_;
  int p_max_;
  Counts counts_;
};

namespace detail {

/// Byte offsets of the units n-grams are made of: every byte, or the start
/// of every UTF-8 sequence. The last entry is text.size().
inline std::vector<std::size_t> unit_offsets(std::string_view text, bool unicode) {
  std::vector<std::size_t> offsets;
  offsets.reserve(text.size() + 1);
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto byte = static_cast<unsigned char>(text[i]);
    if (!unicode || (byte & 0xC0u) != 0x80u) offsets.push_back(i);
  }
  offsets.push_back(text.size());
  return offsets;
}

inline std::string fold_case(std::string_view text) {
  std::string out(text);
  for (auto& ch : out)
    if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
  return out;
}

/// Calls fn(length, gram) for every n-gram occurrence of the text.
template <class Fn>
void for_each_ngram(std::string_view text, int p_min, int p_max, const ProfileOptions& opt,
                    Fn&& fn) {
  std::string folded;
  if (opt.lowercase) {
    folded = fold_case(text);
    text = folded;
  }
  const auto offsets = unit_offsets(text, opt.unicode);
  const std::size_t units = offsets.size() - 1;
  for (int p = p_min; p <= p_max; ++p) {
    const auto len = static_cast<std::size_t>(p);
    if (units < len) break;
    for (std::size_t s = 0; s + len <= units; ++s)
      fn(p, text.substr(offsets[s], offsets[s + len] - offsets[s]));
  }
}

}  // namespace detail

inline NGramProfile profile(std::string_view text, int p_min, int p_max,
                            const ProfileOptions& opt = {}) {
  if (p_min < 1 || p_max < p_min)
    throw ValidationError("n-gram range must satisfy 1 <= pmin <= pmax");
  NGramProfile prof(p_min, p_max);
  detail::for_each_ngram(text, p_min, p_max, opt,
                         [&](int, std::string_view g) { prof.add(std::string(g)); });
  return prof;
}

inline NGramProfile profile(const Document& doc, const KernelSpec& spec) {
  return profile(doc.text, spec.p_min, spec.p_max, spec.options);
}

/// Kernel between two profiles built over the same n-gram range. Iterates
/// the smaller profile and looks grams up in the larger one.
inline double kernel_value(const NGramProfile& a, const NGramProfile& b, KernelKind kind) {
  if (a.p_min() != b.p_min() || a.p_max() != b.p_max())
    throw ValidationError("kernel_value: profiles built over different n-gram ranges");
  const auto& small = a.distinct() <= b.distinct() ? a.counts() : b.counts();
  const auto& large = a.distinct() <= b.distinct() ? b.counts() : a.counts();
  std::uint64_t acc = 0;
  for (const auto& [gram, ca] : small) {
    auto it = large.find(gram);
    if (it == large.end()) continue;
    const std::uint64_t cb = it->second;
    switch (kind) {
      case KernelKind::Spectrum: acc += ca * cb; break;
      case KernelKind::Presence: acc += 1; break;
      case KernelKind::Intersection: acc += std::min<std::uint64_t>(ca, cb); break;
    }
  }
  return static_cast<double>(acc);
}

namespace detail {

/// Profile laid out for fast pairwise evaluation: per n-gram length, a list
/// of (key, count) sorted by key. Keys are either the gram bytes packed into
/// an integer (byte grams up to 8 bytes) or ids from a shared dictionary.
struct PackedProfile {
  std::vector<std::vector<std::pair<std::uint64_t, std::uint32_t>>> by_length;
};

inline std::uint64_t pack_bytes(std::string_view g) {
  std::uint64_t key = 0;
  for (std::size_t i = 0; i < g.size(); ++i)
    key |= static_cast<std::uint64_t>(static_cast<unsigned char>(g[i])) << (8 * i);
  return key;
}

inline void sort_and_merge(std::vector<std::pair<std::uint64_t, std::uint32_t>>& v) {
  std::sort(v.begin(), v.end());
  std::size_t w = 0;
  for (std::size_t r = 0; r < v.size(); ++r) {
    if (w > 0 && v[w - 1].first == v[r].first) {
      v[w - 1].second += v[r].second;
    } else {
      v[w++] = v[r];
    }
  }
  v.resize(w);
}

inline std::uint64_t pair_value(const PackedProfile& a, const PackedProfile& b, KernelKind kind) {
  std::uint64_t acc = 0;
  for (std::size_t l = 0; l < a.by_length.size(); ++l) {
    const auto& x = a.by_length[l];
    const auto& y = b.by_length[l];
    std::size_t i = 0, j = 0;
    while (i < x.size() && j < y.size()) {
      if (x[i].first < y[j].first) {
        ++i;
      } else if (y[j].first < x[i].first) {
        ++j;
      } else {
        const std::uint64_t ca = x[i].second, cb = y[j].second;
        switch (kind) {
          case KernelKind::Spectrum: acc += ca * cb; break;
          case KernelKind::Presence: acc += 1; break;
          case KernelKind::Intersection: acc += std::min(ca, cb); break;
        }
        ++i;
        ++j;
      }
    }
  }
  return acc;
}

inline std::vector<PackedProfile> pack_profiles(std::span<const std::string_view> texts,
                                                const KernelSpec& spec, std::size_t workers) {
  const auto lengths = static_cast<std::size_t>(spec.p_max - spec.p_min + 1);
  std::vector<PackedProfile> out(texts.size());
  for (auto& p : out) p.by_length.resize(lengths);

  const bool packable = !spec.options.unicode && spec.p_max <= 8;
  if (packable) {
    parallel_for(texts.size(), workers, [&](std::size_t d) {
      for_each_ngram(texts[d], spec.p_min, spec.p_max, spec.options,
                     [&](int p, std::string_view g) {
                       out[d].by_length[static_cast<std::size_t>(p - spec.p_min)].emplace_back(
                           pack_bytes(g), 1u);
                     });
      for (auto& v : out[d].by_length) sort_and_merge(v);
    });
    return out;
  }

  // Dictionary ids are assigned in document order, so the result is the
  // same for any worker count.
  std::vector<std::unordered_map<std::string, std::uint64_t>> dict(lengths);
  for (std::size_t d = 0; d < texts.size(); ++d) {
    for_each_ngram(texts[d], spec.p_min, spec.p_max, spec.options,
                   [&](int p, std::string_view g) {
                     const auto l = static_cast<std::size_t>(p - spec.p_min);
                     auto [it, inserted] = dict[l].try_emplace(std::string(g), dict[l].size());
                     out[d].by_length[l].emplace_back(it->second, 1u);
                   });
    for (auto& v : out[d].by_length) sort_and_merge(v);
  }
  return out;
}

}  // namespace detail

/// Full (m + n) x (m + n) Gram matrix over texts given in joint order.
/// Profiles are built once per document; row blocks are filled in parallel
/// and the output is identical for any worker count.
inline KernelMatrix gram_matrix(std::span<const std::string_view> texts, Split split,
                                const KernelSpec& spec, std::size_t workers = 0) {
  spec.validate();
  if (texts.size() != split.size())
    throw ValidationError("gram_matrix: " + std::to_string(texts.size()) +
                          " documents for a joint order of " + std::to_string(split.size()));
  const auto profiles = detail::pack_profiles(texts, spec, workers);
  const auto dim = static_cast<Eigen::Index>(texts.size());
  Eigen::MatrixXd values(dim, dim);
  parallel_for(texts.size(), workers, [&](std::size_t i) {
    for (std::size_t j = i; j < texts.size(); ++j) {
      const auto v = static_cast<double>(detail::pair_value(profiles[i], profiles[j], spec.kind));
      values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      values(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
    }
  });
  return KernelMatrix(std::move(values), split, Stage::Raw);
}

/// Gram matrix over the joint order of make_partition(train, test).
inline KernelMatrix gram_matrix(const Corpus& train, const Corpus& test, const KernelSpec& spec,
                                std::size_t workers = 0) {
  const auto texts = joint_texts(train, test);
  return gram_matrix(texts, Split{train.size(), test.size()}, spec, workers);
}

/// Gram matrix over a partition, looking each id up in `docs`.
inline KernelMatrix gram_matrix(const Partition& partition, const Corpus& docs,
                                const KernelSpec& spec, std::size_t workers = 0) {
  std::vector<std::string_view> texts;
  texts.reserve(partition.size());
  for (const auto& id : partition.order()) {
    const Document* d = docs.find(id);
    if (d == nullptr) throw ValidationError("no document for id '" + id + "'");
    texts.emplace_back(d->text);
  }
  return gram_matrix(texts, partition.split(), spec, workers);
}

}  // namespace tsk
