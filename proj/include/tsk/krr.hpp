#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "tsk/corpus.hpp"
#include "tsk/error.hpp"
#include "tsk/kernel_matrix.hpp"

namespace tsk {

inline constexpr double kDefaultLambda = 1e-5;

struct KrrConfig {
  double lambda = kDefaultLambda;

  void validate() const {
    if (!(lambda > 0.0) || !std::isfinite(lambda))
      throw ConfigError("KRR regularization lambda must be > 0");
  }
};

/// Dual Kernel Ridge Regression model: one coefficient vector per target
/// column, over a fixed set of training indices into a joint order.
struct KrrModel {
  std::vector<std::size_t> train_indices;
  /// |train_indices| x codec.num_targets()
  Eigen::MatrixXd alphas;
  LabelCodec codec;
  double lambda = kDefaultLambda;
};

/// Scores, decision and confidence for one evaluated sample.
struct Prediction {
  std::size_t index = 0;  ///< joint index of the sample
  std::vector<double> scores;
  std::size_t cls = 0;
  std::string label;
  double confidence = 0.0;

  bool operator==(const Prediction&) const = default;
};

using PredictionSet = std::vector<Prediction>;

/// Binary (single score): |score|. Otherwise the margin between the best and
/// second-best class score.
inline double score_confidence(std::span<const double> scores) {
  if (scores.empty()) throw ValidationError("score_confidence: no scores");
  if (scores.size() == 1) return std::abs(scores[0]);
  double top = -std::numeric_limits<double>::infinity();
  double second = top;
  for (double s : scores) {
    if (s > top) {
      second = top;
      top = s;
    } else if (s > second) {
      second = s;
    }
  }
  return top - second;
}

/// Class index for a score vector under `codec`. Single-score problems pick
/// the first class for score >= 0; ties in argmax go to the lower class.
inline std::size_t decide(std::span<const double> scores, const LabelCodec& codec) {
  if (scores.size() == 1) {
    if (codec.num_classes() == 1) return 0;
    return scores[0] >= 0.0 ? 0 : 1;
  }
  std::size_t best = 0;
  for (std::size_t c = 1; c < scores.size(); ++c)
    if (scores[c] > scores[best]) best = c;
  return best;
}

/// ±1 one-vs-rest targets for labels under a codec.
inline Eigen::MatrixXd encode_targets(std::span<const std::string> labels,
                                      const LabelCodec& codec) {
  const auto cols = static_cast<Eigen::Index>(codec.num_targets());
  Eigen::MatrixXd t(static_cast<Eigen::Index>(labels.size()), cols);
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const auto cls = codec.index_of(labels[r]);
    for (Eigen::Index c = 0; c < cols; ++c)
      t(static_cast<Eigen::Index>(r), c) = codec.target(cls, static_cast<std::size_t>(c));
  }
  return t;
}

namespace detail {

/// t - A x with long double accumulation.
inline Eigen::MatrixXd extended_residual(const Eigen::MatrixXd& a, const Eigen::MatrixXd& x,
                                         const Eigen::MatrixXd& t) {
  Eigen::MatrixXd r(t.rows(), t.cols());
  for (Eigen::Index c = 0; c < t.cols(); ++c)
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      long double acc = t(i, c);
      for (Eigen::Index k = 0; k < a.cols(); ++k) acc -= static_cast<long double>(a(i, k)) * x(k, c);
      r(i, c) = static_cast<double>(acc);
    }
  return r;
}

}  // namespace detail

/// Solves (K_tt + lambda I) alpha = t for every target column with one
/// pivoted LDL^T factorization. Diagonal systems solve exactly.
inline KrrModel fit(const KernelMatrix& k, std::span<const std::size_t> train_indices,
                    const Eigen::MatrixXd& targets, const LabelCodec& codec,
                    const KrrConfig& config = {}) {
  config.validate();
  if (train_indices.empty()) throw ValidationError("fit: empty training set");
  if (static_cast<std::size_t>(targets.rows()) != train_indices.size())
    throw ValidationError("fit: " + std::to_string(targets.rows()) + " target rows for " +
                          std::to_string(train_indices.size()) + " training samples");
  if (static_cast<std::size_t>(targets.cols()) != codec.num_targets())
    throw ValidationError("fit: target columns do not match the label codec");
  for (auto i : train_indices)
    if (i >= k.dim()) throw ValidationError("fit: train index " + std::to_string(i) + " out of range");

  const auto t = static_cast<Eigen::Index>(train_indices.size());
  Eigen::MatrixXd system(t, t);
  for (Eigen::Index c = 0; c < t; ++c)
    for (Eigen::Index r = 0; r < t; ++r)
      system(r, c) = k(train_indices[static_cast<std::size_t>(r)],
                       train_indices[static_cast<std::size_t>(c)]);
  system.diagonal().array() += config.lambda;

  Eigen::LDLT<Eigen::MatrixXd> ldlt(system);
  if (ldlt.info() != Eigen::Success)
    throw NumericalError("fit: factorization failed, reciprocal condition estimate " +
                         std::to_string(ldlt.rcond()));
  Eigen::MatrixXd alphas = ldlt.solve(targets);
  // Ill-conditioned systems (small lambda, low-rank K) get a couple of
  // refinement steps.
  const double t_norm = targets.norm();
  for (int step = 0; step < 3; ++step) {
    const Eigen::MatrixXd residual = detail::extended_residual(system, alphas, targets);
    if (!(residual.norm() > 1e-12 * t_norm)) break;
    alphas += ldlt.solve(residual);
  }
  if (!alphas.allFinite())
    throw NumericalError("fit: non-finite dual coefficients, reciprocal condition estimate " +
                         std::to_string(ldlt.rcond()));

  KrrModel model;
  model.train_indices.assign(train_indices.begin(), train_indices.end());
  model.alphas = std::move(alphas);
  model.codec = codec;
  model.lambda = config.lambda;
  return model;
}

/// Convenience overload: targets derived from string labels.
inline KrrModel fit(const KernelMatrix& k, std::span<const std::size_t> train_indices,
                    std::span<const std::string> labels, const KrrConfig& config = {}) {
  if (labels.size() != train_indices.size())
    throw ValidationError("fit: one label per training index required");
  auto codec = LabelCodec::from_labels({labels.begin(), labels.end()});
  return fit(k, train_indices, encode_targets(labels, codec), codec, config);
}

/// Scores K(eval, train) * alpha for each eval index.
inline PredictionSet predict(const KrrModel& model, const KernelMatrix& k,
                             std::span<const std::size_t> eval_indices) {
  for (auto i : model.train_indices)
    if (i >= k.dim()) throw ValidationError("predict: kernel does not cover the training indices");
  for (auto i : eval_indices)
    if (i >= k.dim())
      throw ValidationError("predict: eval index " + std::to_string(i) + " out of range");

  const auto e = static_cast<Eigen::Index>(eval_indices.size());
  const auto t = static_cast<Eigen::Index>(model.train_indices.size());
  Eigen::MatrixXd cross(e, t);
  for (Eigen::Index c = 0; c < t; ++c)
    for (Eigen::Index r = 0; r < e; ++r)
      cross(r, c) = k(eval_indices[static_cast<std::size_t>(r)],
                      model.train_indices[static_cast<std::size_t>(c)]);
  const Eigen::MatrixXd scores = cross * model.alphas;

  PredictionSet out;
  out.reserve(eval_indices.size());
  for (Eigen::Index r = 0; r < e; ++r) {
    Prediction p;
    p.index = eval_indices[static_cast<std::size_t>(r)];
    p.scores.resize(static_cast<std::size_t>(scores.cols()));
    for (Eigen::Index c = 0; c < scores.cols(); ++c)
      p.scores[static_cast<std::size_t>(c)] = scores(r, c);
    p.cls = decide(p.scores, model.codec);
    p.label = model.codec.label(p.cls);
    p.confidence = score_confidence(p.scores);
    out.push_back(std::move(p));
  }
  return out;
}

/// Indices [first, first + count).
inline std::vector<std::size_t> index_range(std::size_t first, std::size_t count) {
  std::vector<std::size_t> v(count);
  for (std::size_t i = 0; i < count; ++i) v[i] = first + i;
  return v;
}

/// Predicted labels in PredictionSet order.
inline std::vector<std::string> labels_of(const PredictionSet& predictions) {
  std::vector<std::string> out;
  out.reserve(predictions.size());
  for (const auto& p : predictions) out.push_back(p.label);
  return out;
}

// Model blob: "KRRM" magic, u32 version, f64 lambda, u64 train count, u64
// indices, u32 class count, (u32 length + bytes) per class, u32 target
// columns, then alphas column by column as f64. Little-endian throughout.

inline constexpr std::string_view kModelMagic = "KRRM";
inline constexpr std::uint32_t kModelVersion = 1;

namespace detail {

template <class T>
void put_le(std::string& buf, T v) {
  std::uint64_t bits;
  if constexpr (std::is_same_v<T, double>)
    bits = std::bit_cast<std::uint64_t>(v);
  else
    bits = static_cast<std::uint64_t>(v);
  for (std::size_t b = 0; b < sizeof(T); ++b)
    buf.push_back(static_cast<char>((bits >> (8 * b)) & 0xFFu));
}

class ByteReader {
public:
  ByteReader(std::string_view bytes, std::string source)
      : bytes_(bytes), source_(std::move(source)) {}

  template <class T>
  T get() {
    need(sizeof(T));
    std::uint64_t bits = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b)
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
    pos_ += sizeof(T);
    if constexpr (std::is_same_v<T, double>)
      return std::bit_cast<double>(bits);
    else
      return static_cast<T>(bits);
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const noexcept { return pos_ == bytes_.size(); }

private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError(source_ + ": truncated model file");
  }

  std::string_view bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_model(const KrrModel& model) {
  std::string buf(kModelMagic);
  detail::put_le<std::uint32_t>(buf, kModelVersion);
  detail::put_le<double>(buf, model.lambda);
  detail::put_le<std::uint64_t>(buf, model.train_indices.size());
  for (auto i : model.train_indices) detail::put_le<std::uint64_t>(buf, i);
  detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(model.codec.num_classes()));
  for (const auto& c : model.codec.classes()) {
    detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(c.size()));
    buf += c;
  }
  detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(model.alphas.cols()));
  for (Eigen::Index c = 0; c < model.alphas.cols(); ++c)
    for (Eigen::Index r = 0; r < model.alphas.rows(); ++r)
      detail::put_le<double>(buf, model.alphas(r, c));
  return buf;
}

inline KrrModel decode_model(std::string_view bytes, const std::string& source = "<model>") {
  if (bytes.substr(0, kModelMagic.size()) != kModelMagic)
    throw FormatError(source + ": not a KRR model file");
  detail::ByteReader in(bytes.substr(kModelMagic.size()), source);
  if (in.get<std::uint32_t>() != kModelVersion)
    throw FormatError(source + ": unsupported model version");
  KrrModel model;
  model.lambda = in.get<double>();
  const auto count = in.get<std::uint64_t>();
  if (count > bytes.size() / 8) throw FormatError(source + ": truncated model file");
  model.train_indices.resize(count);
  for (auto& i : model.train_indices) i = in.get<std::uint64_t>();
  const auto classes = in.get<std::uint32_t>();
  std::vector<std::string> names;
  for (std::uint32_t c = 0; c < classes; ++c) names.emplace_back(in.take(in.get<std::uint32_t>()));
  try {
    model.codec = LabelCodec(names);
  } catch (const ValidationError& e) {
    throw FormatError(source + ": " + e.what());
  }
  if (model.codec.num_classes() != classes) throw FormatError(source + ": duplicate class names");
  const auto cols = in.get<std::uint32_t>();
  if (cols != model.codec.num_targets())
    throw FormatError(source + ": target column count does not match classes");
  model.alphas.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(cols));
  for (Eigen::Index c = 0; c < model.alphas.cols(); ++c)
    for (Eigen::Index r = 0; r < model.alphas.rows(); ++r) model.alphas(r, c) = in.get<double>();
  if (!in.done()) throw FormatError(source + ": trailing bytes after model");
  return model;
}

inline void save_model(const std::string& path, const KrrModel& model) {
  const auto bytes = encode_model(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline KrrModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_model(bytes, path);
}

}  // namespace tsk
