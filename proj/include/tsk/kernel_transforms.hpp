#pragma once

#include <Eigen/Dense>

#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <limits>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "tsk/corpus.hpp"
#include "tsk/error.hpp"
#include "tsk/kernel_matrix.hpp"
#include "tsk/parallel.hpp"

namespace tsk {

namespace detail {

inline void require_stage(const KernelMatrix& k, Stage expected, const char* op) {
  if (k.stage() != expected)
    throw ValidationError(std::string(op) + " expects a " + std::string(to_string(expected)) +
                          " kernel, got " + std::string(to_string(k.stage())));
}

inline Eigen::MatrixXd cosine_normalize(const Eigen::MatrixXd& raw) {
  const Eigen::Index d = raw.rows();
  for (Eigen::Index i = 0; i < d; ++i)
    if (raw(i, i) < 0.0 || std::isnan(raw(i, i)))
      throw ValidationError("normalize: negative diagonal entry at " + std::to_string(i));
  Eigen::MatrixXd out(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = 0; i < d; ++i) {
      if (i == j) {
        out(i, j) = 1.0;
      } else if (raw(i, i) == 0.0 || raw(j, j) == 0.0) {
        out(i, j) = 0.0;
      } else {
        out(i, j) = raw(i, j) / std::sqrt(raw(i, i) * raw(j, j));
      }
    }
  }
  return out;
}

}  // namespace detail

/// Cosine normalization K_ij / sqrt(K_ii K_jj). A sample with zero
/// self-similarity gets 1 on its diagonal and 0 everywhere else.
inline KernelMatrix normalize(const KernelMatrix& raw) {
  detail::require_stage(raw, Stage::Raw, "normalize");
  return KernelMatrix(detail::cosine_normalize(raw.values()), raw.split(), Stage::Normalized);
}

/// Normalizes a transductive matrix in place of the usual stage order. Off by
/// default in every pipeline; exposed for experiments.
inline KernelMatrix renormalize(const KernelMatrix& k) {
  if (k.stage() != Stage::Transductive && k.stage() != Stage::Sum)
    throw ValidationError("renormalize expects a transductive or sum kernel");
  return KernelMatrix(detail::cosine_normalize(k.values()), k.split(), k.stage());
}

inline constexpr double kDefaultSigma2 = 0.5;

/// RBF re-embedding exp(-(1 - K_ij) / (2 sigma^2)) of a normalized kernel.
/// At the default sigma^2 = 0.5 this is exp(K_ij - 1).
inline KernelMatrix rbf_transform(const KernelMatrix& normalized, double sigma2 = kDefaultSigma2) {
  detail::require_stage(normalized, Stage::Normalized, "rbf_transform");
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
    throw ConfigError("sigma2 must be a positive finite number");
  Eigen::MatrixXd out;
  if (sigma2 == kDefaultSigma2) {
    out = normalized.values().unaryExpr([](double v) { return std::exp(v - 1.0); });
  } else {
    out = normalized.values().unaryExpr([sigma2](double v) { return std::exp(-(1.0 - v) / (2.0 * sigma2)); });
  }
  return KernelMatrix(std::move(out), normalized.split(), Stage::Rbf);
}

/// Product A * A^T. Every entry is one ascending-k sum with a single
/// accumulator, so the result is identical for any worker count.
inline Eigen::MatrixXd gram_of_rows(const Eigen::MatrixXd& a, std::size_t workers = 0) {
  const Eigen::Index d = a.rows();
  const Eigen::Index k = a.cols();
  // Columns of `rows` are the rows of `a`, stored contiguously.
  const Eigen::MatrixXd rows = a.transpose();
  Eigen::MatrixXd out(d, d);
  constexpr Eigen::Index kTile = 4;
  const auto tiles = static_cast<std::size_t>((d + kTile - 1) / kTile);

  parallel_for(tiles, workers, [&](std::size_t t) {
    const Eigen::Index i0 = static_cast<Eigen::Index>(t) * kTile;
    const Eigen::Index ib = std::min(kTile, d - i0);
    for (Eigen::Index j0 = i0; j0 < d; j0 += kTile) {
      const Eigen::Index jb = std::min(kTile, d - j0);
      if (ib == kTile && jb == kTile) {
        double acc[kTile][kTile] = {};
        const double* ri[kTile];
        const double* rj[kTile];
        for (Eigen::Index u = 0; u < kTile; ++u) {
          ri[u] = rows.data() + (i0 + u) * k;
          rj[u] = rows.data() + (j0 + u) * k;
        }
        for (Eigen::Index c = 0; c < k; ++c)
          for (Eigen::Index u = 0; u < kTile; ++u)
            for (Eigen::Index v = 0; v < kTile; ++v) acc[u][v] += ri[u][c] * rj[v][c];
        for (Eigen::Index u = 0; u < kTile; ++u)
          for (Eigen::Index v = 0; v < kTile; ++v) {
            out(i0 + u, j0 + v) = acc[u][v];
            out(j0 + v, i0 + u) = acc[u][v];
          }
      } else {
        for (Eigen::Index u = 0; u < ib; ++u)
          for (Eigen::Index v = 0; v < jb; ++v) {
            const double* x = rows.data() + (i0 + u) * k;
            const double* y = rows.data() + (j0 + v) * k;
            double acc = 0.0;
            for (Eigen::Index c = 0; c < k; ++c) acc += x[c] * y[c];
            out(i0 + u, j0 + v) = acc;
            out(j0 + v, i0 + u) = acc;
          }
      }
    }
  });
  return out;
}

/// Linear kernel over the rows of the RBF matrix: each sample is described
/// by its similarities to every train and test sample, so the result depends
/// on the test set.
inline KernelMatrix transductive_kernel(const KernelMatrix& rbf, std::size_t workers = 0) {
  detail::require_stage(rbf, Stage::Rbf, "transductive_kernel");
  return KernelMatrix(gram_of_rows(rbf.values(), workers), rbf.split(), Stage::Transductive);
}

/// Elementwise sum of kernels that share size, split and stage.
inline KernelMatrix sum_kernels(std::span<const KernelMatrix> kernels) {
  if (kernels.empty()) throw ValidationError("sum_kernels: no kernels given");
  const auto& first = kernels.front();
  Eigen::MatrixXd acc = first.values();
  for (std::size_t i = 1; i < kernels.size(); ++i) {
    const auto& k = kernels[i];
    if (k.dim() != first.dim() || !(k.split() == first.split()))
      throw ValidationError("sum_kernels: kernel " + std::to_string(i) +
                            " has a different size or partition");
    if (k.stage() != first.stage())
      throw ValidationError("sum_kernels: kernel " + std::to_string(i) +
                            " is at stage " + std::string(to_string(k.stage())) + ", expected " +
                            std::string(to_string(first.stage())));
    acc += k.values();
  }
  return KernelMatrix(std::move(acc), first.split(), Stage::Sum);
}

/// Gaussian kernel exp(-gamma * |u - v|^2) over dense vectors, one row of
/// `features` per sample in joint order.
inline KernelMatrix rbf_dense_kernel(const Eigen::MatrixXd& features, Split split, double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigError("gamma must be positive");
  if (static_cast<std::size_t>(features.rows()) != split.size())
    throw ValidationError("rbf_dense_kernel: feature rows do not match m + n");
  const Eigen::Index d = features.rows();
  Eigen::MatrixXd out(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    out(j, j) = 1.0;
    for (Eigen::Index i = 0; i < j; ++i) {
      const double dist2 = (features.row(i) - features.row(j)).squaredNorm();
      out(i, j) = out(j, i) = std::exp(-gamma * dist2);
    }
  }
  return KernelMatrix(std::move(out), split, Stage::Raw);
}

inline KernelMatrix rbf_dense_kernel(std::span<const std::vector<double>> vectors, Split split,
                                     double gamma) {
  const std::size_t dim = vectors.empty() ? 0 : vectors.front().size();
  Eigen::MatrixXd features(static_cast<Eigen::Index>(vectors.size()),
                           static_cast<Eigen::Index>(dim));
  for (std::size_t r = 0; r < vectors.size(); ++r) {
    if (vectors[r].size() != dim)
      throw ValidationError("rbf_dense_kernel: vector " + std::to_string(r) + " has dimension " +
                            std::to_string(vectors[r].size()) + ", expected " +
                            std::to_string(dim));
    for (std::size_t c = 0; c < dim; ++c)
      features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = vectors[r][c];
  }
  return rbf_dense_kernel(features, split, gamma);
}

/// Reads `id<TAB>v1 v2 ...` lines (values separated by spaces or commas).
inline std::map<std::string, std::vector<double>> load_dense_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open feature file '" + path + "'");
  std::map<std::string, std::vector<double>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0)
      throw FormatError(path + ":" + std::to_string(line_no) + ": expected id<TAB>values");
    std::string values = line.substr(tab + 1);
    for (auto& ch : values)
      if (ch == ',') ch = ' ';
    std::istringstream ss(values);
    std::vector<double> vec;
    std::string tok;
    while (ss >> tok) {
      try {
        std::size_t used = 0;
        vec.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw FormatError(path + ":" + std::to_string(line_no) + ": bad number '" + tok + "'");
      }
    }
    if (!out.emplace(line.substr(0, tab), std::move(vec)).second)
      throw ValidationError(path + ":" + std::to_string(line_no) + ": duplicate id");
  }
  return out;
}

// KMAT: "KMAT1\n", "dim=<d> m=<m> n=<n> stage=<stage>\n", then d*d
// little-endian float64 values in row-major order.

inline constexpr std::string_view kKmatMagic = "KMAT1\n";

namespace detail {

inline void put_f64_le(std::string& buf, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) buf.push_back(static_cast<char>((bits >> (8 * b)) & 0xFFu));
}

inline double get_f64_le(const char* p) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b)
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[b])) << (8 * b);
  return std::bit_cast<double>(bits);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace detail

inline std::string encode_kmat(const KernelMatrix& k) {
  std::string buf(kKmatMagic);
  buf += "dim=" + std::to_string(k.dim()) + " m=" + std::to_string(k.m()) +
         " n=" + std::to_string(k.n()) + " stage=" + std::string(to_string(k.stage())) + "\n";
  buf.reserve(buf.size() + k.dim() * k.dim() * 8);
  const auto& v = k.values();
  for (Eigen::Index r = 0; r < v.rows(); ++r)
    for (Eigen::Index c = 0; c < v.cols(); ++c) detail::put_f64_le(buf, v(r, c));
  return buf;
}

inline KernelMatrix decode_kmat(std::string_view bytes, const std::string& source = "<kmat>") {
  if (bytes.substr(0, kKmatMagic.size()) != kKmatMagic)
    throw FormatError(source + ": missing KMAT1 magic");
  bytes.remove_prefix(kKmatMagic.size());
  const auto eol = bytes.find('\n');
  if (eol == std::string_view::npos) throw FormatError(source + ": truncated header");
  std::istringstream header{std::string(bytes.substr(0, eol))};
  bytes.remove_prefix(eol + 1);

  std::size_t dim = 0, m = 0, n = 0;
  std::string stage;
  bool have_dim = false, have_m = false, have_n = false, have_stage = false;
  std::string field;
  while (header >> field) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw FormatError(source + ": bad header field '" + field + "'");
    const std::string key = field.substr(0, eq), val = field.substr(eq + 1);
    auto parse_count = [&](std::size_t& out) {
      std::size_t used = 0;
      try {
        out = std::stoull(val, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != val.size())
        throw FormatError(source + ": bad value for '" + key + "'");
    };
    if (key == "dim" && !have_dim) {
      parse_count(dim);
      have_dim = true;
    } else if (key == "m" && !have_m) {
      parse_count(m);
      have_m = true;
    } else if (key == "n" && !have_n) {
      parse_count(n);
      have_n = true;
    } else if (key == "stage" && !have_stage) {
      stage = val;
      have_stage = true;
    } else {
      throw FormatError(source + ": unexpected header field '" + key + "'");
    }
  }
  if (!(have_dim && have_m && have_n && have_stage))
    throw FormatError(source + ": header must declare dim, m, n and stage");
  if (m + n != dim) throw FormatError(source + ": m + n does not equal dim");
  const Stage st = stage_from_string(stage);
  if (dim != 0 && dim > std::numeric_limits<std::size_t>::max() / dim / 8)
    throw FormatError(source + ": dimension too large");
  if (bytes.size() != dim * dim * 8)
    throw FormatError(source + ": payload has " + std::to_string(bytes.size()) +
                      " bytes, header declares " + std::to_string(dim * dim * 8));

  const auto d = static_cast<Eigen::Index>(dim);
  Eigen::MatrixXd values(d, d);
  const char* p = bytes.data();
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < d; ++c, p += 8) values(r, c) = detail::get_f64_le(p);
  KernelMatrix k(std::move(values), Split{m, n}, st);
  if (!k.is_symmetric()) throw FormatError(source + ": matrix is not symmetric");
  return k;
}

inline void save_matrix(const std::string& path, const KernelMatrix& k) {
  const auto bytes = encode_kmat(k);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ValidationError("failed writing '" + path + "'");
}

inline KernelMatrix load_precomputed(const std::string& path) {
  return decode_kmat(detail::read_file(path), path);
}

/// Debug export: one row per line, 17 significant digits.
inline void write_csv(std::ostream& out, const KernelMatrix& k) {
  out << std::setprecision(17);
  const auto& v = k.values();
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    for (Eigen::Index c = 0; c < v.cols(); ++c) {
      if (c) out << ',';
      out << v(r, c);
    }
    out << '\n';
  }
}

}  // namespace tsk
