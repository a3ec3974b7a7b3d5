#pragma once

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "tsk/error.hpp"

namespace tsk {

/// Label written in corpus files for samples whose label is unknown.
inline constexpr std::string_view kUnlabeledMarker = "?";

/// One text sample. The text is kept as raw bytes; nothing is normalized.
struct Document {
  std::string id;
  std::string text;
  std::optional<std::string> label;

  bool operator==(const Document&) const = default;
};

/// An ordered collection of documents with unique, non-empty ids.
class Corpus {
public:
  Corpus() = default;

  explicit Corpus(std::vector<Document> docs) {
    for (auto& d : docs) add(std::move(d));
  }

  /// Appends a document, rejecting empty or duplicate ids.
  void add(Document doc) {
    if (doc.id.empty()) throw ValidationError("document id must not be empty");
    if (!index_.emplace(doc.id, docs_.size()).second)
      throw ValidationError("duplicate document id '" + doc.id + "'");
    docs_.push_back(std::move(doc));
  }

  std::size_t size() const noexcept { return docs_.size(); }
  bool empty() const noexcept { return docs_.empty(); }

  const Document& operator[](std::size_t i) const { return docs_[i]; }
  const std::vector<Document>& documents() const noexcept { return docs_; }

  auto begin() const noexcept { return docs_.begin(); }
  auto end() const noexcept { return docs_.end(); }

  bool contains(const std::string& id) const { return index_.count(id) != 0; }

  const Document* find(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &docs_[it->second];
  }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    out.reserve(docs_.size());
    for (const auto& d : docs_) out.push_back(d.id);
    return out;
  }

  /// Labels in corpus order. Throws if any document is unlabeled.
  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    out.reserve(docs_.size());
    for (const auto& d : docs_) {
      if (!d.label)
        throw ValidationError("document '" + d.id + "' has no label");
      out.push_back(*d.label);
    }
    return out;
  }

  /// Same documents with labels removed.
  Corpus unlabeled() const {
    Corpus out;
    for (const auto& d : docs_) out.add({d.id, d.text, std::nullopt});
    return out;
  }

private:
  std::vector<Document> docs_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Parses `id<TAB>label<TAB>text` lines. The text is everything after the
/// second tab, so it may itself contain tabs. Blank lines are skipped.
inline Corpus parse_corpus(std::istream& in, const std::string& source = "<stream>") {
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos)
      throw FormatError(source + ":" + std::to_string(line_no) +
                        ": expected id<TAB>label<TAB>text");
    Document doc;
    doc.id = line.substr(0, t1);
    std::string label = line.substr(t1 + 1, t2 - t1 - 1);
    doc.text = line.substr(t2 + 1);
    if (doc.id.empty())
      throw FormatError(source + ":" + std::to_string(line_no) + ": empty id");
    if (label.empty())
      throw FormatError(source + ":" + std::to_string(line_no) + ": empty label");
    if (label != kUnlabeledMarker) doc.label = std::move(label);
    try {
      corpus.add(std::move(doc));
    } catch (const ValidationError& e) {
      throw ValidationError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return corpus;
}

inline Corpus load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open corpus file '" + path + "'");
  return parse_corpus(in, path);
}

inline void write_corpus(std::ostream& out, const Corpus& corpus) {
  for (const auto& d : corpus) {
    out << d.id << '\t' << (d.label ? *d.label : std::string(kUnlabeledMarker))
        << '\t' << d.text << '\n';
  }
}

inline void save_corpus(const std::string& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write corpus file '" + path + "'");
  write_corpus(out, corpus);
}

/// Sizes of the two blocks of a joint sample order: indices [0, m) are
/// training samples and [m, m + n) are test samples.
struct Split {
  std::size_t m = 0;
  std::size_t n = 0;

  std::size_t size() const noexcept { return m + n; }
  bool is_train(std::size_t i) const noexcept { return i < m; }
  bool operator==(const Split&) const = default;
};

/// Joint order Z = [train..., test...] with the ids of every position.
class Partition {
public:
  Partition() = default;

  std::size_t m() const noexcept { return split_.m; }
  std::size_t n() const noexcept { return split_.n; }
  std::size_t size() const noexcept { return split_.size(); }
  const Split& split() const noexcept { return split_; }
  const std::vector<std::string>& order() const noexcept { return order_; }

  const std::string& id(std::size_t i) const { return order_.at(i); }
  bool is_train(std::size_t i) const noexcept { return split_.is_train(i); }

  /// Joint index of the k-th test sample.
  std::size_t test_index(std::size_t k) const noexcept { return split_.m + k; }

  friend Partition make_partition(const Corpus& train, const Corpus& test);

private:
  Split split_;
  std::vector<std::string> order_;
};

inline Partition make_partition(const Corpus& train, const Corpus& test) {
  for (const auto& d : test)
    if (train.contains(d.id))
      throw ValidationError("id '" + d.id + "' appears in both train and test");
  Partition p;
  p.split_ = {train.size(), test.size()};
  p.order_.reserve(p.split_.size());
  for (const auto& d : train) p.order_.push_back(d.id);
  for (const auto& d : test) p.order_.push_back(d.id);
  return p;
}

/// Texts of train then test documents, i.e. the joint order of
/// make_partition(train, test).
inline std::vector<std::string_view> joint_texts(const Corpus& train, const Corpus& test) {
  std::vector<std::string_view> out;
  out.reserve(train.size() + test.size());
  for (const auto& d : train) out.emplace_back(d.text);
  for (const auto& d : test) out.emplace_back(d.text);
  return out;
}

/// Maps label strings to class indices (sorted order) and to one-vs-rest
/// ±1 targets. Two-class problems use a single target column where +1 means
/// the first class.
class LabelCodec {
public:
  LabelCodec() = default;

  explicit LabelCodec(std::vector<std::string> classes) : classes_(std::move(classes)) {
    std::sort(classes_.begin(), classes_.end());
    classes_.erase(std::unique(classes_.begin(), classes_.end()), classes_.end());
    if (classes_.empty()) throw ValidationError("label codec needs at least one class");
  }

  static LabelCodec from_labels(const std::vector<std::string>& labels) {
    return LabelCodec(labels);
  }

  const std::vector<std::string>& classes() const noexcept { return classes_; }
  std::size_t num_classes() const noexcept { return classes_.size(); }

  /// Number of target columns: 1 for one or two classes, else one per class.
  std::size_t num_targets() const noexcept {
    return classes_.size() <= 2 ? 1 : classes_.size();
  }

  bool is_binary() const noexcept { return classes_.size() == 2; }

  std::size_t index_of(const std::string& label) const {
    auto it = std::lower_bound(classes_.begin(), classes_.end(), label);
    if (it == classes_.end() || *it != label)
      throw ValidationError("unknown label '" + label + "'");
    return static_cast<std::size_t>(it - classes_.begin());
  }

  const std::string& label(std::size_t cls) const { return classes_.at(cls); }

  /// Target value of column `col` for a sample of class `cls`.
  double target(std::size_t cls, std::size_t col) const noexcept {
    if (num_targets() == 1) return cls == 0 ? 1.0 : -1.0;
    return cls == col ? 1.0 : -1.0;
  }

  bool operator==(const LabelCodec&) const = default;

private:
  std::vector<std::string> classes_;
};

}  // namespace tsk
