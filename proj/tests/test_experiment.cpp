#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "tsk/datasets.hpp"
#include "tsk/experiment.hpp"

using namespace tsk;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("tsk_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

/// Writes four small labeled domains named B, D, E, K.
void write_domains(const fs::path& dir, std::size_t per_domain = 24) {
  const char* names[] = {"B", "D", "E", "K"};
  for (int d = 0; d < 4; ++d) {
    SyntheticConfig c;
    c.seed = static_cast<std::uint64_t>(d);
    c.train = per_domain;
    c.test = 0;
    const auto split = make_synthetic_split(c);
    Corpus out;
    for (const auto& doc : split.train) out.add({std::string(names[d]) + doc.id, doc.text, doc.label});
    save_corpus((dir / (std::string(names[d]) + ".tsv")).string(), out);
  }
}

nlohmann::json domain_config(const std::string& mode) {
  nlohmann::json j;
  j["mode"] = mode;
  j["domains"] = nlohmann::json::array();
  for (const char* n : {"B", "D", "E", "K"})
    j["domains"].push_back({{"name", n}, {"path", std::string(n) + ".tsv"}});
  j["kernels"] = {{{"name", "K01"}, {"kind", "presence"}, {"pmin", 3}, {"pmax", 5}}};
  j["methods"] = {{{"name", "K01"}, {"kernels", {"K01"}}},
                  {{"name", "K01-T"}, {"kernels", {"K01"}}, {"transductive", true}},
                  {{"name", "K01-T+TKC"}, {"kernels", {"K01"}}, {"transductive", true}, {"tkc", true}}};
  j["baseline"] = {{"methods", {"K01"}}};
  j["r"] = 10;
  return j;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(TSK_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("multi-source mode has one column per held-out domain", "[experiment]") {
  TempDir dir("exp_multi");
  write_domains(dir.path);
  const auto config = parse_experiment_config(domain_config("multi_source"), dir.path);
  const auto report = run_experiment(config);
  REQUIRE(report.cells.size() == 4);
  CHECK(report.cells[0].label == "DEK->B");
  CHECK(report.cells[3].label == "BDE->K");
  CHECK(report.cells[0].train.size() == 72);
  CHECK(report.cells[0].test.size() == 24);
  CHECK(report.methods.size() == 3);
  CHECK(report.json["methods"].size() == 3);
  CHECK(report.json["methods"][2]["cells"][0].contains("pseudo_label_error_rate"));
  CHECK_FALSE(report.json["methods"][0]["cells"][0].contains("mcnemar"));
  CHECK(report.json["methods"][1]["cells"][0].contains("mcnemar"));
  CHECK(report.text.find("DEK->B") != std::string::npos);
  CHECK(report.text.find("K01-T+TKC") != std::string::npos);
}

TEST_CASE("single-source mode has twelve source-target columns", "[experiment]") {
  TempDir dir("exp_single");
  write_domains(dir.path, 12);
  auto j = domain_config("single_source");
  j["methods"] = {{{"name", "K01"}, {"kernels", {"K01"}}}};
  const auto report = run_experiment(parse_experiment_config(j, dir.path));
  REQUIRE(report.cells.size() == 12);
  CHECK(report.cells[0].label == "B->D");
  CHECK(report.cells[11].label == "K->E");
}

TEST_CASE("experiment runs are reproducible", "[experiment]") {
  TempDir dir("exp_repro");
  write_domains(dir.path, 16);
  const auto config = parse_experiment_config(domain_config("multi_source"), dir.path);
  CHECK(run_experiment(config).json.dump() == run_experiment(config).json.dump());
}

TEST_CASE("summed kernels, precomputed and dense-feature kernels in split mode", "[experiment]") {
  TempDir dir("exp_split");
  SyntheticConfig c;
  c.train = 20;
  c.test = 10;
  const auto split = make_synthetic_split(c);
  save_corpus((dir.path / "train.tsv").string(), split.train);
  save_corpus((dir.path / "test.tsv").string(), split.test);

  // An external kernel over train + test, saved in KMAT form.
  const auto raw = gram_matrix(split.train, split.test, {KernelKind::Intersection, 2, 3, {}}, 1);
  save_matrix((dir.path / "ext.kmat").string(), raw);
  {
    std::ofstream f(dir.path / "vec.tsv");
    int i = 0;
    for (const auto* corpus : {&split.train, &split.test})
      for (const auto& d : *corpus) f << d.id << '\t' << (i++ % 2) << ' ' << d.text.size() % 7 << '\n';
  }

  nlohmann::json j;
  j["mode"] = "split";
  j["train"] = "train.tsv";
  j["test"] = "test.tsv";
  j["kernels"] = {{{"name", "K01"}, {"kind", "presence"}, {"pmin", 3}, {"pmax", 4}},
                  {{"name", "ext"}, {"precomputed", "ext.kmat"}},
                  {{"name", "vec"}, {"features", "vec.tsv"}, {"gamma", 0.5}}};
  j["methods"] = {{{"name", "K01"}, {"kernels", {"K01"}}},
                  {{"name", "ext"}, {"kernels", {"ext"}}},
                  {{"name", "sum-T+TKC"}, {"kernels", {"K01", "ext", "vec"}}, {"transductive", true}, {"tkc", true}}};
  j["baseline"] = {{"methods", {"K01", "ext"}}, {"select", "best"}};
  j["r"] = 5;
  j["output"] = {{"json", "report.json"}, {"text", "report.txt"}, {"predictions", "preds"}};
  const auto report = run_experiment(parse_experiment_config(j, dir.path));
  REQUIRE(report.cells.size() == 1);
  const double k01 = report.outcomes[0][0].eval.accuracy, ext = report.outcomes[1][0].eval.accuracy;
  CHECK(report.baseline_per_cell[0] == (ext > k01 ? "ext" : "K01"));
  CHECK(fs::exists(dir.path / "report.json"));
  CHECK(fs::exists(dir.path / "report.txt"));
  CHECK(fs::exists(dir.path / "preds" / "sum-T+TKC__train_to_test.tsv"));
}

TEST_CASE("gold test labels do not influence predictions", "[experiment][taint]") {
  TempDir dir("exp_taint");
  SyntheticConfig c;
  c.train = 30;
  c.test = 20;
  const auto split = make_synthetic_split(c);
  save_corpus((dir.path / "train.tsv").string(), split.train);
  save_corpus((dir.path / "test.tsv").string(), split.test);
  Corpus flipped;
  for (const auto& d : split.test)
    flipped.add({d.id, d.text, std::string(*d.label == "pos" ? "neg" : "pos")});
  save_corpus((dir.path / "flipped.tsv").string(), flipped);

  nlohmann::json j;
  j["mode"] = "split";
  j["train"] = "train.tsv";
  j["test"] = "test.tsv";
  j["kernels"] = {{{"name", "K"}, {"kind", "intersection"}, {"pmin", 3}, {"pmax", 5}}};
  j["methods"] = {{{"name", "T+TKC"}, {"kernels", {"K"}}, {"transductive", true}, {"tkc", true}}};
  j["r"] = 8;
  const auto a = run_experiment(parse_experiment_config(j, dir.path));
  j["test"] = "flipped.tsv";
  const auto b = run_experiment(parse_experiment_config(j, dir.path));
  CHECK(a.outcomes[0][0].predictions == b.outcomes[0][0].predictions);
  CHECK(a.outcomes[0][0].eval.correct + b.outcomes[0][0].eval.correct == 20);
}

TEST_CASE("config errors surface before computation", "[experiment]") {
  TempDir dir("exp_errors");
  write_domains(dir.path, 4);
  auto j = domain_config("multi_source");
  j["domains"][1]["path"] = "missing.tsv";
  CHECK_THROWS_AS(parse_experiment_config(j, dir.path), ConfigError);

  j = domain_config("multi_source");
  j["kernels"][0]["kind"] = "gappy";
  CHECK_THROWS_AS(parse_experiment_config(j, dir.path), ConfigError);

  j = domain_config("multi_source");
  j["methods"][0]["kernels"] = {"nope"};
  CHECK_THROWS_AS(parse_experiment_config(j, dir.path), ConfigError);

  j = domain_config("multi_source");
  j["lambda"] = 0.0;
  CHECK_THROWS_AS(parse_experiment_config(j, dir.path), ConfigError);

  j = domain_config("cross_validation");
  CHECK_THROWS_AS(parse_experiment_config(j, dir.path), ConfigError);

  j = domain_config("multi_source");
  j["kernels"][0]["pmin"] = 0;
  CHECK_THROWS_AS(parse_experiment_config(j, dir.path), ConfigError);
}

TEST_CASE("MDS review files are parsed", "[experiment][io]") {
  TempDir dir("mds");
  {
    std::ofstream p(dir.path / "positive.review");
    p << "<review>\n<rating>\n5.0\n</rating>\n<review_text>\nGreat\tbook!\n</review_text>\n</review>\n";
    std::ofstream n(dir.path / "negative.review");
    n << "<review>\n<review_text>\nDull.\n</review_text>\n</review>\n"
         "<review>\n<review_text>\nAwful\n</review_text>\n</review>\n";
  }
  const auto c = load_mds_domain(dir.path, "books");
  REQUIRE(c.size() == 3);
  CHECK(c[0].id == "books-pos-0");
  CHECK(c[0].text == "Great book!");
  CHECK(c[0].label == std::optional<std::string>("positive"));
  CHECK(c[2].label == std::optional<std::string>("negative"));
  CHECK_THROWS_AS(parse_mds_reviews("<review_text>open"), FormatError);
}

TEST_CASE("CLI exit codes", "[cli]") {
  TempDir dir("cli_codes");
  const auto d = dir.path.string();
  CHECK(run_cli("synth --seed 1 --train-size 20 --test-size 10 --train " + d + "/tr.tsv --test " + d +
                "/te.tsv --gold " + d + "/gold.tsv") == 0);
  CHECK(run_cli("kernel --train " + d + "/tr.tsv --test " + d + "/te.tsv --kind presence --pmin 3 --pmax 4 --out " +
                d + "/k.kmat") == 0);
  CHECK(run_cli("transform --in " + d + "/k.kmat --op pipeline --out " + d + "/kt.kmat") == 0);
  CHECK(run_cli("tkc --kernel " + d + "/kt.kmat --train " + d + "/tr.tsv --test " + d + "/te.tsv --r 4 --out " + d +
                "/p.tsv --trace " + d + "/trace.json") == 0);
  CHECK(run_cli("evaluate --pred " + d + "/p.tsv --gold " + d + "/gold.tsv") == 0);

  // validation: overlapping ids
  CHECK(run_cli("kernel --train " + d + "/tr.tsv --test " + d + "/tr.tsv --out " + d + "/x.kmat") == 2);
  // validation: unknown flag value
  CHECK(run_cli("kernel --train " + d + "/tr.tsv --test " + d + "/te.tsv --kind gappy --out " + d + "/x.kmat") == 2);
  // validation: stage order
  CHECK(run_cli("transform --in " + d + "/k.kmat --op rbf --out " + d + "/x.kmat") == 2);
  // format: corrupt matrix
  {
    std::ofstream f(dir.path / "bad.kmat");
    f << "KMAT1\ndim=2 m=1 n=1 stage=raw\nshort";
  }
  CHECK(run_cli("transform --in " + d + "/bad.kmat --op normalize --out " + d + "/x.kmat") == 3);
  // format: malformed corpus line
  {
    std::ofstream f(dir.path / "bad.tsv");
    f << "only-one-field\n";
  }
  CHECK(run_cli("kernel --train " + d + "/bad.tsv --test " + d + "/te.tsv --out " + d + "/x.kmat") == 3);
}
