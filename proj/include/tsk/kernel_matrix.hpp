#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>

#include "tsk/corpus.hpp"
#include "tsk/error.hpp"

namespace tsk {

/// Which transform produced a kernel matrix.
enum class Stage { Raw, Normalized, Rbf, Transductive, Sum };

inline std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Raw: return "raw";
    case Stage::Normalized: return "normalized";
    case Stage::Rbf: return "rbf";
    case Stage::Transductive: return "transductive";
    case Stage::Sum: return "sum";
  }
  return "raw";
}

inline Stage stage_from_string(std::string_view s) {
  if (s == "raw") return Stage::Raw;
  if (s == "normalized") return Stage::Normalized;
  if (s == "rbf") return Stage::Rbf;
  if (s == "transductive") return Stage::Transductive;
  if (s == "sum") return Stage::Sum;
  throw FormatError("unknown kernel stage '" + std::string(s) + "'");
}

/// Dense symmetric (m + n) x (m + n) similarity matrix over a joint
/// train/test order, tagged with the pipeline stage that produced it.
class KernelMatrix {
public:
  KernelMatrix() = default;

  KernelMatrix(Eigen::MatrixXd values, Split split, Stage stage)
      : values_(std::move(values)), split_(split), stage_(stage) {
    if (values_.rows() != values_.cols())
      throw ValidationError("kernel matrix must be square");
    if (static_cast<std::size_t>(values_.rows()) != split_.size())
      throw ValidationError("kernel matrix dimension " + std::to_string(values_.rows()) +
                            " does not match m + n = " + std::to_string(split_.size()));
  }

  const Eigen::MatrixXd& values() const noexcept { return values_; }
  const Split& split() const noexcept { return split_; }
  Stage stage() const noexcept { return stage_; }

  std::size_t dim() const noexcept { return static_cast<std::size_t>(values_.rows()); }
  std::size_t m() const noexcept { return split_.m; }
  std::size_t n() const noexcept { return split_.n; }

  double operator()(std::size_t i, std::size_t j) const {
    return values_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }

  double max_abs() const { return values_.size() == 0 ? 0.0 : values_.cwiseAbs().maxCoeff(); }

  /// True when |K_ij - K_ji| <= rel_tol * max|K| for every pair.
  bool is_symmetric(double rel_tol = 1e-12) const {
    const double bound = rel_tol * max_abs();
    for (Eigen::Index j = 0; j < values_.cols(); ++j)
      for (Eigen::Index i = 0; i < j; ++i)
        if (!(std::abs(values_(i, j) - values_(j, i)) <= bound)) return false;
    return true;
  }

  /// Submatrix over `indices` (in the given order), re-tagged with a new split.
  KernelMatrix select(std::span<const std::size_t> indices, Split split) const {
    const auto k = static_cast<Eigen::Index>(indices.size());
    Eigen::MatrixXd out(k, k);
    for (Eigen::Index c = 0; c < k; ++c) {
      const auto jc = static_cast<Eigen::Index>(indices[static_cast<std::size_t>(c)]);
      if (static_cast<std::size_t>(jc) >= dim())
        throw ValidationError("kernel index " + std::to_string(jc) + " out of range");
      for (Eigen::Index r = 0; r < k; ++r)
        out(r, c) = values_(static_cast<Eigen::Index>(indices[static_cast<std::size_t>(r)]), jc);
    }
    return KernelMatrix(std::move(out), split, stage_);
  }

  KernelMatrix with_stage(Stage stage) const & { return KernelMatrix(values_, split_, stage); }

private:
  Eigen::MatrixXd values_;
  Split split_;
  Stage stage_ = Stage::Raw;
};

}  // namespace tsk
