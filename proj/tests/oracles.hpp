#pragma once

// Brute-force reference implementations used only by tests. None of these
// call into the library code they check.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace tsk::oracle {

/// Occurrences of `needle` in `hay` by trying every start position.
inline std::uint64_t occurrences(const std::string& hay, const std::string& needle) {
  if (needle.empty() || needle.size() > hay.size()) return 0;
  std::uint64_t n = 0;
  for (std::size_t s = 0; s + needle.size() <= hay.size(); ++s) {
    bool match = true;
    for (std::size_t k = 0; k < needle.size(); ++k)
      if (hay[s + k] != needle[k]) {
        match = false;
        break;
      }
    n += match ? 1 : 0;
  }
  return n;
}

enum class Kind { Spectrum, Presence, Intersection };

/// Kernel over n-gram lengths [pmin, pmax] by enumerating every distinct
/// substring of either string and counting it in both.
inline std::uint64_t string_kernel(const std::string& x, const std::string& y, int pmin, int pmax,
                                   Kind kind) {
  std::uint64_t total = 0;
  for (int p = pmin; p <= pmax; ++p) {
    const auto len = static_cast<std::size_t>(p);
    std::set<std::string> grams;
    for (const auto* s : {&x, &y})
      for (std::size_t i = 0; i + len <= s->size(); ++i) grams.insert(s->substr(i, len));
    for (const auto& g : grams) {
      const auto a = occurrences(x, g), b = occurrences(y, g);
      switch (kind) {
        case Kind::Spectrum: total += a * b; break;
        case Kind::Presence: total += (a > 0 && b > 0) ? 1 : 0; break;
        case Kind::Intersection: total += std::min(a, b); break;
      }
    }
  }
  return total;
}

inline std::string random_string(std::mt19937_64& rng, std::size_t max_len, int alphabet) {
  std::uniform_int_distribution<std::size_t> len_dist(0, max_len);
  std::uniform_int_distribution<int> ch(0, alphabet - 1);
  std::string s(len_dist(rng), 'a');
  for (auto& c : s) c = static_cast<char>('a' + ch(rng));
  return s;
}

inline double min_eigenvalue(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// Triple-loop A * B^T.
inline Eigen::MatrixXd product_transpose(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      long double acc = 0;
      for (Eigen::Index k = 0; k < a.cols(); ++k) acc += static_cast<long double>(a(i, k)) * b(j, k);
      out(i, j) = static_cast<double>(acc);
    }
  return out;
}

/// Random symmetric positive semidefinite matrix B B^T with B of the given rank.
inline Eigen::MatrixXd random_psd(std::mt19937_64& rng, Eigen::Index dim, Eigen::Index rank) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd b(dim, rank);
  for (Eigen::Index i = 0; i < dim; ++i)
    for (Eigen::Index j = 0; j < rank; ++j) b(i, j) = g(rng);
  Eigen::MatrixXd m = b * b.transpose();
  return (m + m.transpose()) / 2.0;
}

/// Relative residual ||A x - t|| / ||t|| accumulated in long double.
inline double relative_residual(const Eigen::MatrixXd& a, const Eigen::MatrixXd& x, const Eigen::MatrixXd& t) {
  long double num = 0, den = 0;
  for (Eigen::Index c = 0; c < t.cols(); ++c)
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      long double acc = -static_cast<long double>(t(i, c));
      for (Eigen::Index k = 0; k < a.cols(); ++k) acc += static_cast<long double>(a(i, k)) * x(k, c);
      num += acc * acc;
      den += static_cast<long double>(t(i, c)) * t(i, c);
    }
  return static_cast<double>(std::sqrt(num / den));
}

}  // namespace tsk::oracle
