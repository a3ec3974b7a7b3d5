#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <tuple>
#include <string>
#include <string_view>
#include <vector>

#include "tsk/corpus.hpp"
#include "tsk/error.hpp"

namespace tsk {

/// Extracts the <review_text> bodies of a Multi-Domain Sentiment review file.
inline std::vector<std::string> parse_mds_reviews(std::string_view xml) {
  constexpr std::string_view open = "<review_text>";
  constexpr std::string_view close = "</review_text>";
  std::vector<std::string> out;
  std::size_t pos = 0;
  while ((pos = xml.find(open, pos)) != std::string_view::npos) {
    pos += open.size();
    const auto end = xml.find(close, pos);
    if (end == std::string_view::npos) throw FormatError("unterminated <review_text> element");
    std::string text(xml.substr(pos, end - pos));
    for (auto& ch : text)
      if (ch == '\n' || ch == '\r' || ch == '\t') ch = ' ';
    const auto first = text.find_first_not_of(' ');
    const auto last = text.find_last_not_of(' ');
    out.push_back(first == std::string::npos ? std::string()
                                             : text.substr(first, last - first + 1));
    pos = end + close.size();
  }
  return out;
}

/// Loads `positive.review` and `negative.review` from an MDS domain
/// directory. Ids are `<prefix>-pos-<k>` / `<prefix>-neg-<k>`.
inline Corpus load_mds_domain(const std::filesystem::path& dir, const std::string& prefix) {
  Corpus corpus;
  for (const auto& [file, label, tag] :
       {std::tuple{"positive.review", "positive", "pos"},
        std::tuple{"negative.review", "negative", "neg"}}) {
    const auto path = dir / file;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open '" + path.string() + "'");
    const std::string xml{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    const auto reviews = parse_mds_reviews(xml);
    for (std::size_t k = 0; k < reviews.size(); ++k)
      corpus.add({prefix + "-" + tag + "-" + std::to_string(k), reviews[k], std::string(label)});
  }
  return corpus;
}

/// Parameters of the synthetic two-domain corpus: two classes, each marked
/// by a few class-specific 5-grams shared by both domains, with disjoint
/// background vocabularies per domain. Each domain also has its own
/// class-leaning words, so part of the target signal is only visible in the
/// target data.
struct SyntheticConfig {
  std::size_t train = 500;
  std::size_t test = 500;
  std::uint64_t seed = 0;
  std::size_t markers_per_class = 3;
  std::size_t words_per_doc = 30;
  std::size_t shared_words = 150;      ///< general vocabulary used by both domains
  std::size_t background_words = 300;  ///< domain-specific vocabulary, per domain
  std::size_t class_words = 25;        ///< class-leaning words, per class and domain
  double shared_rate = 0.5;      ///< per-position probability of a shared word
  double marker_rate = 0.4;      ///< probability a document carries a marker
  double class_word_rate = 0.12; ///< per-position probability of a class-leaning word
};

struct SyntheticSplit {
  Corpus train;  ///< labeled source-domain documents
  Corpus test;   ///< target-domain documents with gold labels
};

namespace detail {

class SplitMix {
public:
  explicit SplitMix(std::uint64_t seed) : engine_(seed) {}

  std::size_t below(std::size_t bound) {
    return static_cast<std::size_t>(engine_() % static_cast<std::uint64_t>(bound));
  }

  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  std::string word(std::size_t min_len, std::size_t max_len, std::string_view letters) {
    const std::size_t len = min_len + below(max_len - min_len + 1);
    std::string w;
    for (std::size_t i = 0; i < len; ++i) w.push_back(letters[below(letters.size())]);
    return w;
  }

private:
  std::mt19937_64 engine_;
};

struct DomainVocabulary {
  std::vector<std::string> background;
  std::vector<std::string> leaning[2];
};

inline DomainVocabulary make_vocabulary(SplitMix& rng, const SyntheticConfig& c,
                                        std::string_view letters) {
  DomainVocabulary v;
  for (std::size_t i = 0; i < c.background_words; ++i) v.background.push_back(rng.word(3, 7, letters));
  for (auto& l : v.leaning)
    for (std::size_t i = 0; i < c.class_words; ++i) l.push_back(rng.word(4, 7, letters));
  return v;
}

inline std::string make_document(SplitMix& rng, const SyntheticConfig& c,
                                  const std::vector<std::string>& shared,
                                  const DomainVocabulary& v,
                                  const std::vector<std::string>& markers, std::size_t cls) {
  std::vector<std::string> words;
  for (std::size_t i = 0; i < c.words_per_doc; ++i) {
    const double u = rng.unit();
    if (u < c.class_word_rate)
      words.push_back(v.leaning[cls][rng.below(v.leaning[cls].size())]);
    else if (u < c.class_word_rate + c.shared_rate && !shared.empty())
      words.push_back(shared[rng.below(shared.size())]);
    else
      words.push_back(v.background[rng.below(v.background.size())]);
  }
  if (rng.unit() < c.marker_rate)
    words[rng.below(words.size())] = markers[rng.below(markers.size())];
  std::string text;
  for (const auto& w : words) {
    if (!text.empty()) text.push_back(' ');
    text += w;
  }
  return text;
}

}  // namespace detail

/// Generates a labeled source-domain training corpus and a target-domain
/// test corpus. Classes are "neg" and "pos", balanced by alternation.
inline SyntheticSplit make_synthetic_split(const SyntheticConfig& c) {
  detail::SplitMix rng(c.seed);
  // Markers use digits so they cannot arise from background words.
  std::vector<std::string> markers[2];
  for (auto& ms : markers)
    for (std::size_t i = 0; i < c.markers_per_class; ++i) ms.push_back(rng.word(5, 5, "0123456789"));
  std::vector<std::string> shared;
  for (std::size_t i = 0; i < c.shared_words; ++i) shared.push_back(rng.word(2, 6, "abcdefghijklmnopqrstuvwxyz"));
  const auto source = detail::make_vocabulary(rng, c, "abcdefghijklm");
  const auto target = detail::make_vocabulary(rng, c, "nopqrstuvwxyz");
  const char* names[2] = {"neg", "pos"};

  SyntheticSplit out;
  for (std::size_t i = 0; i < c.train; ++i) {
    const std::size_t cls = i % 2;
    out.train.add({"src" + std::to_string(i),
                   detail::make_document(rng, c, shared, source, markers[cls], cls), names[cls]});
  }
  for (std::size_t i = 0; i < c.test; ++i) {
    const std::size_t cls = i % 2;
    out.test.add({"tgt" + std::to_string(i),
                  detail::make_document(rng, c, shared, target, markers[cls], cls), names[cls]});
  }
  return out;
}

}  // namespace tsk
