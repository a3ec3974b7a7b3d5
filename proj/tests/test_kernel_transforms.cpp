#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "tsk/kernel_transforms.hpp"
#include "tsk/string_kernels.hpp"

using namespace tsk;
using Catch::Matchers::WithinAbs;

namespace {

const double kInvE = std::exp(-1.0);

KernelMatrix matrix(std::initializer_list<std::initializer_list<double>> rows, Stage stage,
                    Split split = {}) {
  const auto d = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd m(d, d);
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  if (split.size() == 0) split = {static_cast<std::size_t>(d), 0};
  return KernelMatrix(std::move(m), split, stage);
}

KernelMatrix random_string_gram(std::mt19937_64& rng, std::size_t docs, std::size_t m) {
  std::vector<std::string> texts;
  for (std::size_t d = 0; d < docs; ++d) texts.push_back(oracle::random_string(rng, 40, 4));
  std::vector<std::string_view> views(texts.begin(), texts.end());
  return gram_matrix(views, Split{m, docs - m}, {KernelKind::Intersection, 2, 4, {}}, 1);
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("tsk_test_" + name);
}

}  // namespace

TEST_CASE("normalize examples", "[transforms]") {
  const auto k = normalize(matrix({{4, 2}, {2, 1}}, Stage::Raw));
  CHECK(k.stage() == Stage::Normalized);
  CHECK(k.values() == Eigen::MatrixXd::Ones(2, 2));

  const auto z = normalize(matrix({{4, 0}, {0, 0}}, Stage::Raw));
  CHECK(z.values() == Eigen::MatrixXd::Identity(2, 2));

  CHECK_THROWS_AS(normalize(matrix({{-1, 0}, {0, 1}}, Stage::Raw)), ValidationError);
}

TEST_CASE("rbf transform examples", "[transforms]") {
  const auto k = rbf_transform(matrix({{1, 0}, {0, 1}}, Stage::Normalized));
  CHECK(k.stage() == Stage::Rbf);
  CHECK(k(0, 0) == 1.0);
  CHECK(k(1, 1) == 1.0);
  CHECK_THAT(k(0, 1), WithinAbs(0.367879441171442, 1e-15));
  CHECK_THAT(k(1, 0), WithinAbs(kInvE, 0.0));

  const auto wide = rbf_transform(matrix({{1, 0}, {0, 1}}, Stage::Normalized), 2.0);
  CHECK_THAT(wide(0, 1), WithinAbs(std::exp(-0.25), 1e-15));
  CHECK_THROWS_AS(rbf_transform(matrix({{1}}, Stage::Normalized), 0.0), ConfigError);
}

TEST_CASE("transductive kernel examples", "[transforms]") {
  const auto id = transductive_kernel(matrix({{1, 0}, {0, 1}}, Stage::Rbf));
  CHECK(id.stage() == Stage::Transductive);
  CHECK(id.values() == Eigen::MatrixXd::Identity(2, 2));

  const auto k = transductive_kernel(matrix({{1, kInvE}, {kInvE, 1}}, Stage::Rbf));
  const double e2 = std::exp(-2.0);
  CHECK_THAT(k(0, 0), WithinAbs(1 + e2, 1e-15));
  CHECK_THAT(k(1, 1), WithinAbs(1 + e2, 1e-15));
  CHECK_THAT(k(0, 1), WithinAbs(2 * kInvE, 1e-15));
  CHECK(k(0, 1) == k(1, 0));
}

TEST_CASE("stages are enforced, never coerced", "[transforms]") {
  const auto raw = matrix({{1}}, Stage::Raw);
  const auto norm = matrix({{1}}, Stage::Normalized);
  CHECK_THROWS_AS(normalize(norm), ValidationError);
  CHECK_THROWS_AS(rbf_transform(raw), ValidationError);
  CHECK_THROWS_AS(transductive_kernel(norm), ValidationError);
  CHECK_THROWS_AS(renormalize(raw), ValidationError);
}

TEST_CASE("pipeline invariants on random string kernels", "[transforms][property]") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t docs = 2 + rng() % 20;
    const auto raw = random_string_gram(rng, docs, docs / 2);
    const auto norm = normalize(raw);
    for (std::size_t i = 0; i < docs; ++i) {
      CHECK(norm(i, i) == 1.0);
      for (std::size_t j = 0; j < docs; ++j) {
        CHECK(norm(i, j) >= 0.0);
        CHECK(norm(i, j) <= 1.0);
      }
    }
    const auto rbf = rbf_transform(norm);
    const Eigen::MatrixXd general = (-(1.0 - norm.values().array()) / (2.0 * 0.5)).exp().matrix();
    CHECK((rbf.values() - general).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(rbf.values().minCoeff() >= kInvE);
    CHECK(rbf.values().maxCoeff() <= 1.0);

    const auto kt = transductive_kernel(rbf);
    const auto expected = oracle::product_transpose(rbf.values(), rbf.values());
    CHECK((kt.values() - expected).cwiseAbs().maxCoeff() <= 1e-12 * expected.cwiseAbs().maxCoeff());
    CHECK(kt.values() == kt.values().transpose());
    CHECK(oracle::min_eigenvalue(kt.values()) >= -1e-10);
  }
}

TEST_CASE("row product is identical for any worker count", "[transforms]") {
  std::mt19937_64 rng(2);
  const auto a = oracle::random_psd(rng, 37, 37);
  const auto serial = gram_of_rows(a, 1);
  for (std::size_t w : {2u, 4u, 7u}) CHECK(gram_of_rows(a, w) == serial);
}

TEST_CASE("transductive features depend on the test set", "[transforms][property]") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::string> texts;
    for (int d = 0; d < 12; ++d) texts.push_back(oracle::random_string(rng, 30, 3));
    auto pipeline = [](const std::vector<std::string>& t) {
      std::vector<std::string_view> v(t.begin(), t.end());
      const auto raw = gram_matrix(v, Split{8, 4}, {KernelKind::Presence, 2, 3, {}}, 1);
      return transductive_kernel(rbf_transform(normalize(raw)));
    };
    const auto before = pipeline(texts);
    auto changed = texts;
    changed[10] = "zzzzzzzzzzzzzzzzzzzzzz";
    const auto after = pipeline(changed);
    CHECK(before.values().topLeftCorner(8, 8) != after.values().topLeftCorner(8, 8));
  }
}

TEST_CASE("sum of kernels", "[transforms]") {
  const auto k = matrix({{2, 1}, {1, 2}}, Stage::Transductive);
  const std::vector<KernelMatrix> single{k};
  const auto s1 = sum_kernels(single);
  CHECK(s1.values() == k.values());
  CHECK(s1.stage() == Stage::Sum);

  const auto id = matrix({{1, 0}, {0, 1}}, Stage::Transductive);
  const std::vector<KernelMatrix> two{id, id};
  CHECK(sum_kernels(two).values() == 2.0 * Eigen::MatrixXd::Identity(2, 2));

  const std::vector<KernelMatrix> mixed{id, matrix({{1, 0}, {0, 1}}, Stage::Rbf)};
  CHECK_THROWS_AS(sum_kernels(mixed), ValidationError);
  const std::vector<KernelMatrix> resplit{id, matrix({{1, 0}, {0, 1}}, Stage::Transductive, {1, 1})};
  CHECK_THROWS_AS(sum_kernels(resplit), ValidationError);
  const std::vector<KernelMatrix> sized{id, matrix({{1}}, Stage::Transductive)};
  CHECK_THROWS_AS(sum_kernels(sized), ValidationError);
  CHECK_THROWS_AS(sum_kernels(std::vector<KernelMatrix>{}), ValidationError);

  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<KernelMatrix> parts;
    for (int p = 0; p < 3; ++p)
      parts.emplace_back(oracle::random_psd(rng, 10, 1 + static_cast<Eigen::Index>(rng() % 10)),
                         Split{10, 0}, Stage::Transductive);
    const auto s = sum_kernels(parts);
    CHECK(oracle::min_eigenvalue(s.values()) >= -1e-10 * s.max_abs());
  }
}

TEST_CASE("dense RBF kernel", "[transforms]") {
  const std::vector<std::vector<double>> same{{1.5, -2.0}, {1.5, -2.0}};
  CHECK(rbf_dense_kernel(same, Split{2, 0}, 0.7)(0, 1) == 1.0);

  const std::vector<std::vector<double>> line{{0.0}, {1.0}};
  CHECK_THAT(rbf_dense_kernel(line, Split{1, 1}, 1.0)(0, 1), WithinAbs(kInvE, 1e-16));

  const std::vector<std::vector<double>> three{{0, 0}, {1, 2}, {-3, 0.5}};
  const auto k = rbf_dense_kernel(three, Split{2, 1}, 0.3);
  CHECK(k.values() == k.values().transpose());
  CHECK(k.values().diagonal() == Eigen::VectorXd::Ones(3));
  CHECK(k.stage() == Stage::Raw);

  const std::vector<std::vector<double>> ragged{{0, 0}, {1}};
  CHECK_THROWS_AS(rbf_dense_kernel(ragged, Split{2, 0}, 1.0), ValidationError);
  CHECK_THROWS_AS(rbf_dense_kernel(three, Split{3, 0}, 0.0), ConfigError);
}

TEST_CASE("renormalize gives a unit diagonal and keeps the stage", "[transforms]") {
  const auto k = renormalize(matrix({{4, 2}, {2, 9}}, Stage::Transductive));
  CHECK(k.stage() == Stage::Transductive);
  CHECK(k(0, 0) == 1.0);
  CHECK_THAT(k(0, 1), WithinAbs(2.0 / 6.0, 1e-16));
}

TEST_CASE("KMAT round trip is bit exact", "[transforms][io]") {
  std::mt19937_64 rng(13);
  const auto m = oracle::random_psd(rng, 5, 3);
  const KernelMatrix k(m, Split{3, 2}, Stage::Rbf);
  const auto path = temp_path("roundtrip.kmat");
  save_matrix(path.string(), k);
  const auto back = load_precomputed(path.string());
  CHECK(back.values() == k.values());
  CHECK(back.split() == k.split());
  CHECK(back.stage() == Stage::Rbf);

  const auto bytes = encode_kmat(k);
  CHECK(bytes.rfind("KMAT1\ndim=5 m=3 n=2 stage=rbf\n", 0) == 0);
  CHECK(bytes.size() == std::string("KMAT1\ndim=5 m=3 n=2 stage=rbf\n").size() + 25 * 8);
  std::filesystem::remove(path);
}

TEST_CASE("KMAT decoding rejects corrupt input", "[transforms][io]") {
  const KernelMatrix k(Eigen::MatrixXd::Identity(3, 3), Split{2, 1}, Stage::Raw);
  const auto good = encode_kmat(k);
  CHECK_NOTHROW(decode_kmat(good));

  CHECK_THROWS_AS(decode_kmat(good.substr(0, good.size() - 1)), FormatError);
  CHECK_THROWS_AS(decode_kmat(good + "x"), FormatError);
  CHECK_THROWS_AS(decode_kmat("KMAT2" + good.substr(5)), FormatError);

  std::string wrong_dim = good;
  wrong_dim.replace(wrong_dim.find("dim=3"), 5, "dim=4");
  CHECK_THROWS_AS(decode_kmat(wrong_dim), FormatError);

  std::string bad_stage = good;
  bad_stage.replace(bad_stage.find("stage=raw"), 9, "stage=xyz");
  CHECK_THROWS_AS(decode_kmat(bad_stage), FormatError);

  Eigen::MatrixXd asym = Eigen::MatrixXd::Identity(3, 3);
  asym(0, 1) = 0.5;
  CHECK_THROWS_AS(decode_kmat(encode_kmat(KernelMatrix(asym, Split{3, 0}, Stage::Raw))), FormatError);
}

TEST_CASE("CSV export uses 17 significant digits", "[transforms][io]") {
  const KernelMatrix k(Eigen::MatrixXd::Constant(1, 1, 1.0 / 3.0), Split{1, 0}, Stage::Raw);
  std::ostringstream out;
  write_csv(out, k);
  CHECK(out.str() == "0.33333333333333331\n");
}

TEST_CASE("dense feature files", "[transforms][io]") {
  const auto path = temp_path("features.tsv");
  {
    std::ofstream f(path);
    f << "a\t1 2 3\nb\t4,5,6\n";
  }
  const auto feats = load_dense_features(path.string());
  REQUIRE(feats.size() == 2);
  CHECK(feats.at("b") == std::vector<double>{4, 5, 6});
  {
    std::ofstream f(path);
    f << "a\t1 x 3\n";
  }
  CHECK_THROWS_AS(load_dense_features(path.string()), FormatError);
  std::filesystem::remove(path);
}
