// Command-line front end for the transductive string kernel toolkit.

#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tsk/tsk.hpp"

namespace {

using namespace tsk;

struct PredictionRow {
  std::string id;
  std::string label;
  double confidence = 0.0;
};

std::vector<PredictionRow> load_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open predictions '" + path + "'");
  std::vector<PredictionRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos)
      throw FormatError(path + ":" + std::to_string(line_no) + ": expected id<TAB>label<TAB>confidence");
    PredictionRow row{line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1), 0.0};
    try {
      row.confidence = std::stod(line.substr(t2 + 1));
    } catch (const std::exception&) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": bad confidence");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Gold labels in the order of `rows`.
std::vector<std::string> gold_for(const std::vector<PredictionRow>& rows, const Corpus& gold) {
  if (rows.size() != gold.size())
    throw ValidationError("predictions cover " + std::to_string(rows.size()) +
                          " samples, gold file has " + std::to_string(gold.size()));
  std::vector<std::string> out;
  for (const auto& r : rows) {
    const Document* d = gold.find(r.id);
    if (d == nullptr) throw ValidationError("no gold label for '" + r.id + "'");
    if (!d->label) throw ValidationError("gold document '" + r.id + "' is unlabeled");
    out.push_back(*d->label);
  }
  return out;
}

std::vector<std::string> predicted_labels(const std::vector<PredictionRow>& rows) {
  std::vector<std::string> out;
  for (const auto& r : rows) out.push_back(r.label);
  return out;
}

void write_predictions(const std::string& path, const PredictionSet& ps,
                       const std::vector<std::string>& ids) {
  if (path == "-") {
    write_predictions_tsv(std::cout, ps, ids);
    return;
  }
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  write_predictions_tsv(out, ps, ids);
}

void write_matrix(const KernelMatrix& k, const std::string& out, const std::string& csv) {
  save_matrix(out, k);
  if (!csv.empty()) {
    std::ofstream f(csv);
    if (!f) throw ValidationError("cannot write '" + csv + "'");
    write_csv(f, k);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transductive string kernels for text classification"};
  app.require_subcommand(1);
  app.fallthrough();

  std::size_t workers = 0;
  std::uint64_t seed = 0;
  app.add_option("--workers", workers, "Worker threads (0 = all cores)");
  app.add_option("--seed", seed, "Random seed (synthetic data)");

  std::string kind = "intersection";
  int pmin = 5, pmax = 8;
  double sigma2 = kDefaultSigma2, lambda = kDefaultLambda;
  long long r = static_cast<long long>(kDefaultAdopted);
  bool lowercase = false, unicode = false;

  auto add_kernel_flags = [&](CLI::App* sub) {
    sub->add_option("--kind", kind, "spectrum | presence | intersection")
        ->check(CLI::IsMember({"spectrum", "presence", "intersection"}));
    sub->add_option("--pmin", pmin, "Shortest n-gram length");
    sub->add_option("--pmax", pmax, "Longest n-gram length");
    sub->add_flag("--lowercase", lowercase, "Fold ASCII letters to lower case");
    sub->add_flag("--unicode", unicode, "Count n-grams of Unicode scalars instead of bytes");
  };

  // kernel
  auto* kernel_cmd = app.add_subcommand("kernel", "Compute a raw Gram matrix over train + test");
  std::string train_path, test_path, out_path, csv_path, features_path;
  double gamma = 1.0;
  kernel_cmd->add_option("--train", train_path, "Training corpus (TSV)")->required();
  kernel_cmd->add_option("--test", test_path, "Test corpus (TSV)")->required();
  kernel_cmd->add_option("--features", features_path, "Dense feature file (RBF kernel instead)");
  kernel_cmd->add_option("--gamma", gamma, "RBF width for --features");
  kernel_cmd->add_option("--out", out_path, "Output KMAT file")->required();
  kernel_cmd->add_option("--csv", csv_path, "Also write a CSV copy");
  add_kernel_flags(kernel_cmd);

  // transform
  auto* transform_cmd = app.add_subcommand("transform", "Apply kernel transforms to KMAT files");
  std::vector<std::string> inputs;
  std::string op = "pipeline";
  transform_cmd->add_option("--in", inputs, "Input KMAT file(s); several for 'sum'")->required();
  transform_cmd
      ->add_option("--op", op, "normalize | rbf | transductive | sum | renormalize | pipeline")
      ->check(CLI::IsMember({"normalize", "rbf", "transductive", "sum", "renormalize", "pipeline"}));
  transform_cmd->add_option("--sigma2", sigma2, "RBF sigma^2");
  transform_cmd->add_option("--out", out_path, "Output KMAT file")->required();
  transform_cmd->add_option("--csv", csv_path, "Also write a CSV copy");

  // train
  auto* train_cmd = app.add_subcommand("train", "Fit Kernel Ridge Regression on the train block");
  std::string kernel_path, model_path;
  train_cmd->add_option("--kernel", kernel_path, "KMAT file")->required();
  train_cmd->add_option("--train", train_path, "Training corpus (labels)")->required();
  train_cmd->add_option("--lambda", lambda, "Ridge regularization");
  train_cmd->add_option("--out", model_path, "Output model file")->required();

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "Predict the test block with a trained model");
  predict_cmd->add_option("--kernel", kernel_path, "KMAT file")->required();
  predict_cmd->add_option("--model", model_path, "Model file")->required();
  predict_cmd->add_option("--test", test_path, "Test corpus (ids; labels ignored)")->required();
  predict_cmd->add_option("--out", out_path, "Predictions TSV ('-' for stdout)")->default_val("-");

  // tkc
  auto* tkc_cmd = app.add_subcommand("tkc", "Two-iteration transductive kernel classifier");
  std::string trace_path;
  tkc_cmd->add_option("--kernel", kernel_path, "KMAT file")->required();
  tkc_cmd->add_option("--train", train_path, "Training corpus (labels)")->required();
  tkc_cmd->add_option("--test", test_path, "Test corpus (ids; labels ignored)")->required();
  tkc_cmd->add_option("--r", r, "Test samples adopted in the second iteration");
  tkc_cmd->add_option("--lambda", lambda, "Ridge regularization");
  tkc_cmd->add_option("--out", out_path, "Predictions TSV ('-' for stdout)")->default_val("-");
  tkc_cmd->add_option("--trace", trace_path, "JSON trace of both iterations");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Accuracy of a predictions file");
  std::string pred_path, pred_b_path, gold_path, json_path;
  eval_cmd->add_option("--pred", pred_path, "Predictions TSV")->required();
  eval_cmd->add_option("--gold", gold_path, "Gold corpus (TSV)")->required();
  eval_cmd->add_option("--json", json_path, "Write result as JSON");

  // mcnemar
  auto* mcnemar_cmd = app.add_subcommand("mcnemar", "Paired McNemar test between two predictions");
  double alpha = kDefaultSignificance;
  mcnemar_cmd->add_option("--pred-a", pred_path, "Predictions of system A")->required();
  mcnemar_cmd->add_option("--pred-b", pred_b_path, "Predictions of system B")->required();
  mcnemar_cmd->add_option("--gold", gold_path, "Gold corpus (TSV)")->required();
  mcnemar_cmd->add_option("--alpha", alpha, "Significance level");

  // experiment
  auto* exp_cmd = app.add_subcommand("experiment", "Run a cross-domain experiment from a config");
  std::string config_path, text_path;
  exp_cmd->add_option("--config", config_path, "Experiment config (JSON)")->required();
  exp_cmd->add_option("--json", json_path, "Override the JSON report path");
  exp_cmd->add_option("--text", text_path, "Override the text report path");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic two-domain corpus");
  std::size_t n_train = 500, n_test = 500;
  std::string gold_out;
  synth_cmd->add_option("--train-size", n_train, "Source-domain documents");
  synth_cmd->add_option("--test-size", n_test, "Target-domain documents");
  synth_cmd->add_option("--train", train_path, "Output training corpus")->required();
  synth_cmd->add_option("--test", test_path, "Output unlabeled test corpus")->required();
  synth_cmd->add_option("--gold", gold_out, "Output test corpus with gold labels")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::Validation);
  }

  try {
    if (*kernel_cmd) {
      const auto train = load_corpus(train_path);
      const auto test = load_corpus(test_path);
      const auto partition = make_partition(train, test);
      KernelMatrix k;
      if (!features_path.empty()) {
        const auto features = load_dense_features(features_path);
        std::vector<std::vector<double>> rows;
        for (const auto& id : partition.order()) {
          auto it = features.find(id);
          if (it == features.end()) throw ValidationError("no feature vector for '" + id + "'");
          rows.push_back(it->second);
        }
        k = rbf_dense_kernel(rows, partition.split(), gamma);
      } else {
        KernelSpec spec{kernel_kind_from_string(kind), pmin, pmax, {unicode, lowercase}};
        k = gram_matrix(train, test, spec, workers);
      }
      write_matrix(k, out_path, csv_path);
    } else if (*transform_cmd) {
      std::vector<KernelMatrix> ks;
      for (const auto& p : inputs) ks.push_back(load_precomputed(p));
      if (op != "sum" && ks.size() != 1)
        throw ConfigError("--op " + op + " takes exactly one --in");
      KernelMatrix out;
      if (op == "normalize") {
        out = normalize(ks[0]);
      } else if (op == "rbf") {
        out = rbf_transform(ks[0], sigma2);
      } else if (op == "transductive") {
        out = transductive_kernel(ks[0], workers);
      } else if (op == "renormalize") {
        out = renormalize(ks[0]);
      } else if (op == "sum") {
        out = sum_kernels(ks);
      } else {
        out = transductive_kernel(rbf_transform(normalize(ks[0]), sigma2), workers);
      }
      write_matrix(out, out_path, csv_path);
    } else if (*train_cmd) {
      const auto k = load_precomputed(kernel_path);
      const auto train = load_corpus(train_path);
      if (train.size() != k.m())
        throw ValidationError("training corpus has " + std::to_string(train.size()) +
                              " documents, kernel train block has " + std::to_string(k.m()));
      const auto labels = train.labels();
      save_model(model_path, fit(k, index_range(0, k.m()), labels, KrrConfig{lambda}));
    } else if (*predict_cmd) {
      const auto k = load_precomputed(kernel_path);
      const auto model = load_model(model_path);
      const auto test = load_corpus(test_path).unlabeled();
      if (test.size() != k.n())
        throw ValidationError("test corpus has " + std::to_string(test.size()) +
                              " documents, kernel test block has " + std::to_string(k.n()));
      std::vector<std::string> ids(k.m());
      for (const auto& id : test.ids()) ids.push_back(id);
      write_predictions(out_path, predict(model, k, index_range(k.m(), k.n())), ids);
    } else if (*tkc_cmd) {
      const auto k = load_precomputed(kernel_path);
      const auto train = load_corpus(train_path);
      const auto test = load_corpus(test_path).unlabeled();
      const auto partition = make_partition(train, test);
      if (partition.size() != k.dim() || train.size() != k.m())
        throw ValidationError("corpora do not match the kernel's train/test blocks");
      TkcConfig config;
      config.r = r;
      config.krr.lambda = lambda;
      const auto labels = train.labels();
      const auto result = tkc_run(k, labels, config);
      for (const auto& w : result.trace.warnings) std::cerr << "warning: " << w << '\n';
      write_predictions(out_path, result.predictions, partition.order());
      if (!trace_path.empty()) {
        std::ofstream f(trace_path);
        if (!f) throw ValidationError("cannot write '" + trace_path + "'");
        f << trace_to_json(result.trace, partition.order(), k.m()).dump(2) << '\n';
      }
    } else if (*eval_cmd) {
      const auto rows = load_predictions(pred_path);
      const auto gold = gold_for(rows, load_corpus(gold_path));
      const auto predicted = predicted_labels(rows);
      const auto result = accuracy(predicted, gold);
      std::cout << "accuracy " << std::setprecision(6) << result.accuracy << " (" << result.correct
                << "/" << result.total << ")\n";
      if (!json_path.empty()) {
        std::ofstream f(json_path);
        f << nlohmann::json{{"accuracy", result.accuracy},
                            {"correct", result.correct},
                            {"total", result.total}}
                 .dump(2)
          << '\n';
      }
    } else if (*mcnemar_cmd) {
      const auto a = load_predictions(pred_path);
      const auto b = load_predictions(pred_b_path);
      const auto gold_corpus = load_corpus(gold_path);
      const auto gold = gold_for(a, gold_corpus);
      for (std::size_t i = 0; i < a.size(); ++i)
        if (i >= b.size() || a[i].id != b[i].id)
          throw ValidationError("prediction files list different samples or orders");
      if (b.size() != a.size()) throw ValidationError("prediction files differ in length");
      const auto ra = accuracy(predicted_labels(a), gold);
      const auto rb = accuracy(predicted_labels(b), gold);
      const auto m = mcnemar(ra, rb, alpha);
      std::cout << "b=" << m.b << " c=" << m.c << " statistic=" << std::setprecision(6)
                << m.statistic << " critical=" << m.critical_value
                << (m.significant ? " significant" : " not significant") << '\n';
    } else if (*exp_cmd) {
      auto config = load_experiment_config(config_path);
      if (!json_path.empty()) config.json_out = json_path;
      if (!text_path.empty()) config.text_out = text_path;
      if (app.count("--seed") != 0) config.seed = seed;
      if (workers != 0) config.workers = workers;
      std::cout << run_experiment(config).text;
    } else if (*synth_cmd) {
      SyntheticConfig config;
      config.train = n_train;
      config.test = n_test;
      config.seed = seed;
      const auto split = make_synthetic_split(config);
      save_corpus(train_path, split.train);
      save_corpus(test_path, split.test.unlabeled());
      save_corpus(gold_out, split.test);
    }
  } catch (const tsk::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
