#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tsk/corpus.hpp"
#include "tsk/datasets.hpp"
#include "tsk/error.hpp"
#include "tsk/evaluation.hpp"
#include "tsk/kernel_matrix.hpp"
#include "tsk/kernel_transforms.hpp"
#include "tsk/krr.hpp"
#include "tsk/string_kernels.hpp"
#include "tsk/transductive.hpp"

namespace tsk {

// Experiment configuration (JSON). Relative paths resolve against the
// directory of the config file.
//
//   {
//     "mode": "multi_source" | "single_source" | "split",
//     "domains": [{"name": "B", "path": "books.tsv", "format": "tsv" | "mds"}],
//     "train": "train.tsv", "test": "test.tsv",          // split mode only
//     "kernels": [
//       {"name": "K01",  "kind": "presence", "pmin": 5, "pmax": 8,
//        "lowercase": false, "unicode": false},
//       {"name": "LRD",  "precomputed": "lrd.kmat"},
//       {"name": "ivec", "features": "ivec.tsv", "gamma": 0.5}
//     ],
//     "methods": [
//       {"name": "K01", "kernels": ["K01"], "transductive": false, "tkc": false}
//     ],
//     "baseline": {"methods": ["K01"], "select": "best" | "first"},
//     "lambda": 1e-5, "r": 1000, "sigma2": 0.5, "renormalize": false,
//     "significance": 0.01, "seed": 0, "workers": 0,
//     "output": {"json": "report.json", "text": "report.txt", "predictions": "dir"}
//   }
//
// A precomputed KMAT covers every document of the experiment in config order
// (domains concatenated, or train then test) and must be raw or normalized.
// Feature files map document ids to dense vectors.

enum class ExperimentMode { MultiSource, SingleSource, Split };

struct DomainSource {
  std::string name;
  std::filesystem::path path;
  std::string format = "tsv";
};

struct KernelSource {
  std::string name;
  std::optional<KernelSpec> string_kernel;
  std::optional<std::filesystem::path> precomputed;
  std::optional<std::filesystem::path> features;
  double gamma = 1.0;
};

struct MethodSpec {
  std::string name;
  std::vector<std::string> kernels;
  bool transductive = false;
  bool tkc = false;
};

struct ExperimentConfig {
  ExperimentMode mode = ExperimentMode::Split;
  std::vector<DomainSource> domains;
  std::filesystem::path train_path;
  std::filesystem::path test_path;
  std::vector<KernelSource> kernels;
  std::vector<MethodSpec> methods;
  std::vector<std::string> baselines;
  bool best_baseline = true;
  double lambda = kDefaultLambda;
  long long r = static_cast<long long>(kDefaultAdopted);
  double sigma2 = kDefaultSigma2;
  bool renormalize = false;
  double significance = kDefaultSignificance;
  std::uint64_t seed = 0;
  std::size_t workers = 0;
  std::optional<std::filesystem::path> json_out;
  std::optional<std::filesystem::path> text_out;
  std::optional<std::filesystem::path> predictions_dir;
};

namespace detail {

template <class T>
T json_get(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

inline std::string json_string(const nlohmann::json& j, const char* key, const char* where) {
  if (!j.contains(key) || !j.at(key).is_string())
    throw ConfigError(std::string(where) + ": missing string field '" + key + "'");
  return j.at(key).get<std::string>();
}

}  // namespace detail

/// Parses and validates a config. Checks that every referenced file exists
/// so that errors surface before any computation.
inline ExperimentConfig parse_experiment_config(const nlohmann::json& j,
                                                const std::filesystem::path& base_dir = ".") {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  auto require_file = [](const std::filesystem::path& p) {
    if (!std::filesystem::exists(p)) throw ConfigError("missing file '" + p.string() + "'");
  };

  ExperimentConfig c;
  const auto mode = detail::json_get<std::string>(j, "mode", "split");
  if (mode == "multi_source") {
    c.mode = ExperimentMode::MultiSource;
  } else if (mode == "single_source") {
    c.mode = ExperimentMode::SingleSource;
  } else if (mode == "split") {
    c.mode = ExperimentMode::Split;
  } else {
    throw ConfigError("unknown mode '" + mode + "'");
  }

  if (c.mode == ExperimentMode::Split) {
    c.train_path = resolve(detail::json_string(j, "train", "split mode"));
    c.test_path = resolve(detail::json_string(j, "test", "split mode"));
    require_file(c.train_path);
    require_file(c.test_path);
  } else {
    if (!j.contains("domains") || !j.at("domains").is_array())
      throw ConfigError("domain modes need a 'domains' list");
    for (const auto& d : j.at("domains")) {
      DomainSource src;
      src.name = detail::json_string(d, "name", "domain");
      src.path = resolve(detail::json_string(d, "path", "domain"));
      src.format = detail::json_get<std::string>(d, "format", "tsv");
      if (src.format != "tsv" && src.format != "mds")
        throw ConfigError("domain '" + src.name + "': unknown format '" + src.format + "'");
      require_file(src.path);
      for (const auto& other : c.domains)
        if (other.name == src.name) throw ConfigError("duplicate domain '" + src.name + "'");
      c.domains.push_back(std::move(src));
    }
    if (c.domains.size() < 2) throw ConfigError("domain modes need at least two domains");
  }

  if (!j.contains("kernels") || !j.at("kernels").is_array() || j.at("kernels").empty())
    throw ConfigError("config needs a non-empty 'kernels' list");
  for (const auto& kj : j.at("kernels")) {
    KernelSource k;
    k.name = detail::json_string(kj, "name", "kernel");
    if (kj.contains("precomputed")) {
      k.precomputed = resolve(detail::json_string(kj, "precomputed", "kernel"));
      require_file(*k.precomputed);
    } else if (kj.contains("features")) {
      k.features = resolve(detail::json_string(kj, "features", "kernel"));
      require_file(*k.features);
      k.gamma = detail::json_get<double>(kj, "gamma", 1.0);
      if (!(k.gamma > 0.0)) throw ConfigError("kernel '" + k.name + "': gamma must be > 0");
    } else {
      KernelSpec spec;
      spec.kind = kernel_kind_from_string(detail::json_string(kj, "kind", "kernel"));
      spec.p_min = detail::json_get<int>(kj, "pmin", 5);
      spec.p_max = detail::json_get<int>(kj, "pmax", 8);
      spec.options.lowercase = detail::json_get<bool>(kj, "lowercase", false);
      spec.options.unicode = detail::json_get<bool>(kj, "unicode", false);
      spec.validate();
      k.string_kernel = spec;
    }
    for (const auto& other : c.kernels)
      if (other.name == k.name) throw ConfigError("duplicate kernel '" + k.name + "'");
    c.kernels.push_back(std::move(k));
  }

  if (!j.contains("methods") || !j.at("methods").is_array() || j.at("methods").empty())
    throw ConfigError("config needs a non-empty 'methods' list");
  for (const auto& mj : j.at("methods")) {
    MethodSpec m;
    m.name = detail::json_string(mj, "name", "method");
    m.kernels = detail::json_get<std::vector<std::string>>(mj, "kernels", {});
    if (m.kernels.empty()) throw ConfigError("method '" + m.name + "' lists no kernels");
    for (const auto& kn : m.kernels) {
      const bool known = std::any_of(c.kernels.begin(), c.kernels.end(),
                                     [&](const KernelSource& k) { return k.name == kn; });
      if (!known) throw ConfigError("method '" + m.name + "' uses unknown kernel '" + kn + "'");
    }
    m.transductive = detail::json_get<bool>(mj, "transductive", false);
    m.tkc = detail::json_get<bool>(mj, "tkc", false);
    for (const auto& other : c.methods)
      if (other.name == m.name) throw ConfigError("duplicate method '" + m.name + "'");
    c.methods.push_back(std::move(m));
  }

  if (j.contains("baseline")) {
    const auto& b = j.at("baseline");
    c.baselines = detail::json_get<std::vector<std::string>>(b, "methods", {});
    const auto select = detail::json_get<std::string>(b, "select", "best");
    if (select != "best" && select != "first")
      throw ConfigError("baseline select must be 'best' or 'first'");
    c.best_baseline = select == "best";
  } else {
    c.baselines = {c.methods.front().name};
  }
  for (const auto& b : c.baselines) {
    const bool known = std::any_of(c.methods.begin(), c.methods.end(),
                                   [&](const MethodSpec& m) { return m.name == b; });
    if (!known) throw ConfigError("unknown baseline method '" + b + "'");
  }

  c.lambda = detail::json_get<double>(j, "lambda", kDefaultLambda);
  KrrConfig{c.lambda}.validate();
  c.r = detail::json_get<long long>(j, "r", static_cast<long long>(kDefaultAdopted));
  if (c.r < 0) throw ConfigError("r must be >= 0");
  c.sigma2 = detail::json_get<double>(j, "sigma2", kDefaultSigma2);
  if (!(c.sigma2 > 0.0)) throw ConfigError("sigma2 must be > 0");
  c.renormalize = detail::json_get<bool>(j, "renormalize", false);
  c.significance = detail::json_get<double>(j, "significance", kDefaultSignificance);
  chi_square_critical(c.significance);
  c.seed = detail::json_get<std::uint64_t>(j, "seed", 0);
  c.workers = detail::json_get<std::size_t>(j, "workers", 0);

  if (j.contains("output")) {
    const auto& o = j.at("output");
    if (o.contains("json")) c.json_out = resolve(detail::json_string(o, "json", "output"));
    if (o.contains("text")) c.text_out = resolve(detail::json_string(o, "text", "output"));
    if (o.contains("predictions"))
      c.predictions_dir = resolve(detail::json_string(o, "predictions", "output"));
  }
  return c;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "': " + e.what());
  }
  return parse_experiment_config(j, path.parent_path().empty() ? "." : path.parent_path());
}

/// One (sources -> target) evaluation cell. Indices point into the
/// experiment's document universe.
struct ExperimentCell {
  std::string label;
  std::vector<std::string> sources;
  std::string target;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

struct CellOutcome {
  EvalResult eval;
  std::optional<McNemarResult> vs_baseline;
  bool significant = false;
  std::optional<double> pseudo_label_error_rate;
  PredictionSet predictions;
};

struct ExperimentReport {
  std::vector<ExperimentCell> cells;
  std::vector<std::string> methods;
  std::vector<std::string> baseline_per_cell;
  /// outcomes[method][cell]
  std::vector<std::vector<CellOutcome>> outcomes;
  nlohmann::json json;
  std::string text;
};

namespace detail {

/// Opens a report file, creating missing parent directories.
inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot write '" + path.string() + "'");
  return f;
}

/// All documents of an experiment with cell definitions over them.
struct Universe {
  Corpus docs;  ///< gold labels included; only the evaluator reads test labels
  std::vector<ExperimentCell> cells;
};

inline Universe build_universe(const ExperimentConfig& c) {
  Universe u;
  if (c.mode == ExperimentMode::Split) {
    const auto train = load_corpus(c.train_path.string());
    const auto test = load_corpus(c.test_path.string());
    make_partition(train, test);
    ExperimentCell cell{"train->test", {"train"}, "test", {}, {}};
    for (const auto& d : train) {
      cell.train.push_back(u.docs.size());
      u.docs.add(d);
    }
    for (const auto& d : test) {
      cell.test.push_back(u.docs.size());
      u.docs.add(d);
    }
    u.cells.push_back(std::move(cell));
    return u;
  }

  std::vector<std::vector<std::size_t>> members(c.domains.size());
  for (std::size_t d = 0; d < c.domains.size(); ++d) {
    const auto& src = c.domains[d];
    const Corpus corpus = src.format == "mds" ? load_mds_domain(src.path, src.name)
                                              : load_corpus(src.path.string());
    for (const auto& doc : corpus) {
      members[d].push_back(u.docs.size());
      try {
        u.docs.add(doc);
      } catch (const ValidationError&) {
        throw ValidationError("document id '" + doc.id + "' appears in more than one domain");
      }
    }
  }

  const std::size_t nd = c.domains.size();
  if (c.mode == ExperimentMode::MultiSource) {
    for (std::size_t t = 0; t < nd; ++t) {
      ExperimentCell cell;
      cell.target = c.domains[t].name;
      std::string prefix;
      for (std::size_t s = 0; s < nd; ++s) {
        if (s == t) continue;
        cell.sources.push_back(c.domains[s].name);
        prefix += c.domains[s].name;
        cell.train.insert(cell.train.end(), members[s].begin(), members[s].end());
      }
      cell.label = prefix + "->" + cell.target;
      cell.test = members[t];
      u.cells.push_back(std::move(cell));
    }
  } else {
    for (std::size_t s = 0; s < nd; ++s)
      for (std::size_t t = 0; t < nd; ++t) {
        if (s == t) continue;
        ExperimentCell cell;
        cell.sources = {c.domains[s].name};
        cell.target = c.domains[t].name;
        cell.label = c.domains[s].name + "->" + c.domains[t].name;
        cell.train = members[s];
        cell.test = members[t];
        u.cells.push_back(std::move(cell));
      }
  }
  return u;
}

/// Normalized kernel over the whole universe. Normalization is entrywise in
/// (K_ij, K_ii, K_jj), so restricting it to a cell afterwards gives the same
/// values as normalizing the cell's own matrix.
inline KernelMatrix universe_kernel(const KernelSource& k, const Corpus& docs,
                                    std::size_t workers) {
  const Split all{docs.size(), 0};
  if (k.string_kernel) {
    std::vector<std::string_view> texts;
    for (const auto& d : docs) texts.emplace_back(d.text);
    return normalize(gram_matrix(texts, all, *k.string_kernel, workers));
  }
  if (k.precomputed) {
    auto loaded = load_precomputed(k.precomputed->string());
    if (loaded.dim() != docs.size())
      throw ValidationError("precomputed kernel '" + k.name + "' has dimension " +
                            std::to_string(loaded.dim()) + ", experiment has " +
                            std::to_string(docs.size()) + " documents");
    KernelMatrix whole(loaded.values(), all, loaded.stage());
    if (whole.stage() == Stage::Raw) return normalize(whole);
    if (whole.stage() == Stage::Normalized) return whole;
    throw ValidationError("precomputed kernel '" + k.name + "' must be raw or normalized");
  }
  const auto features = load_dense_features(k.features->string());
  std::vector<std::vector<double>> rows;
  rows.reserve(docs.size());
  for (const auto& d : docs) {
    auto it = features.find(d.id);
    if (it == features.end())
      throw ValidationError("feature file for '" + k.name + "' has no vector for '" + d.id + "'");
    rows.push_back(it->second);
  }
  return normalize(rbf_dense_kernel(rows, all, k.gamma));
}

inline std::string percent(double accuracy) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(1) << accuracy * 100.0;
  return s.str();
}

}  // namespace detail

/// Aligned text rendering of a report: one row per method, one column per
/// cell, '*' marking significance against the column's baseline.
inline std::string render_report_text(const ExperimentReport& r) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"Method"};
  for (const auto& c : r.cells) header.push_back(c.label);
  rows.push_back(header);
  for (std::size_t m = 0; m < r.methods.size(); ++m) {
    std::vector<std::string> row{r.methods[m]};
    for (std::size_t c = 0; c < r.cells.size(); ++c) {
      const auto& o = r.outcomes[m][c];
      row.push_back(detail::percent(o.eval.accuracy) + (o.significant ? "*" : ""));
    }
    rows.push_back(row);
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : rows)
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  std::ostringstream out;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    for (std::size_t i = 0; i < rows[k].size(); ++i) {
      if (i == 0) {
        out << std::left << std::setw(static_cast<int>(width[i])) << rows[k][i];
      } else {
        out << "  " << std::right << std::setw(static_cast<int>(width[i])) << rows[k][i];
      }
    }
    out << '\n';
    if (k == 0) out << std::string(out.str().size() - 1, '-') << '\n';
  }
  return out.str();
}

inline void write_predictions_tsv(std::ostream& out, const PredictionSet& ps,
                                  std::span<const std::string> ids) {
  out << std::setprecision(17);
  for (const auto& p : ps) out << ids[p.index] << '\t' << p.label << '\t' << p.confidence << '\n';
}

/// Runs every (cell, method) combination and assembles the report.
inline ExperimentReport run_experiment(const ExperimentConfig& config) {
  const auto universe = detail::build_universe(config);
  const auto& docs = universe.docs;

  std::map<std::string, KernelMatrix> base;
  for (const auto& method : config.methods)
    for (const auto& kn : method.kernels) {
      if (base.count(kn)) continue;
      const auto& src = *std::find_if(config.kernels.begin(), config.kernels.end(),
                                      [&](const KernelSource& k) { return k.name == kn; });
      base.emplace(kn, detail::universe_kernel(src, docs, config.workers));
    }

  ExperimentReport report;
  report.cells = universe.cells;
  for (const auto& m : config.methods) report.methods.push_back(m.name);
  report.outcomes.assign(config.methods.size(), std::vector<CellOutcome>(universe.cells.size()));

  TkcConfig tkc;
  tkc.r = config.r;
  tkc.krr.lambda = config.lambda;

  for (std::size_t ci = 0; ci < universe.cells.size(); ++ci) {
    const auto& cell = universe.cells[ci];
    std::vector<std::size_t> joint = cell.train;
    joint.insert(joint.end(), cell.test.begin(), cell.test.end());
    const Split split{cell.train.size(), cell.test.size()};

    std::vector<std::string> ids, train_labels, gold;
    for (auto i : joint) ids.push_back(docs[i].id);
    for (auto i : cell.train) {
      if (!docs[i].label)
        throw ValidationError("training document '" + docs[i].id + "' is unlabeled");
      train_labels.push_back(*docs[i].label);
    }
    for (auto i : cell.test) {
      if (!docs[i].label)
        throw ValidationError("evaluation needs a gold label for '" + docs[i].id + "'");
      gold.push_back(*docs[i].label);
    }

    std::map<std::pair<std::string, bool>, KernelMatrix> cache;
    auto cell_kernel = [&](const std::string& name, bool transductive) -> const KernelMatrix& {
      const auto key = std::make_pair(name, transductive);
      auto it = cache.find(key);
      if (it != cache.end()) return it->second;
      KernelMatrix k = base.at(name).select(joint, split);
      if (transductive) {
        k = transductive_kernel(rbf_transform(k, config.sigma2), config.workers);
        if (config.renormalize) k = renormalize(k);
      }
      return cache.emplace(key, std::move(k)).first->second;
    };

    for (std::size_t mi = 0; mi < config.methods.size(); ++mi) {
      const auto& method = config.methods[mi];
      KernelMatrix k;
      if (method.kernels.size() == 1) {
        k = cell_kernel(method.kernels.front(), method.transductive);
      } else {
        std::vector<KernelMatrix> parts;
        for (const auto& kn : method.kernels) parts.push_back(cell_kernel(kn, method.transductive));
        k = sum_kernels(parts);
      }

      auto& out = report.outcomes[mi][ci];
      if (method.tkc) {
        auto run = tkc_run(k, train_labels, tkc);
        out.pseudo_label_error_rate = pseudo_label_error_rate(run.trace, split.m, gold);
        out.predictions = std::move(run.predictions);
      } else {
        const auto model = fit(k, index_range(0, split.m), train_labels, tkc.krr);
        out.predictions = predict(model, k, index_range(split.m, split.n));
      }
      out.eval = accuracy(out.predictions, gold);

      if (config.predictions_dir) {
        std::filesystem::create_directories(*config.predictions_dir);
        std::string stem = cell.label;
        stem.replace(stem.find("->"), 2, "_to_");
        auto f = detail::open_output(*config.predictions_dir / (method.name + "__" + stem + ".tsv"));
        write_predictions_tsv(f, out.predictions, ids);
      }
    }

    // Baseline for this column: the best-scoring listed baseline (first wins
    // ties), or the first one listed.
    std::size_t baseline = 0;
    bool found = false;
    for (const auto& bname : config.baselines) {
      const auto bi = static_cast<std::size_t>(
          std::find(report.methods.begin(), report.methods.end(), bname) - report.methods.begin());
      if (!found || (config.best_baseline && report.outcomes[bi][ci].eval.accuracy >
                                                 report.outcomes[baseline][ci].eval.accuracy)) {
        baseline = bi;
        found = true;
      }
    }
    report.baseline_per_cell.push_back(report.methods[baseline]);
    for (std::size_t mi = 0; mi < config.methods.size(); ++mi) {
      if (std::find(config.baselines.begin(), config.baselines.end(), report.methods[mi]) !=
          config.baselines.end())
        continue;
      auto& out = report.outcomes[mi][ci];
      const auto& ref = report.outcomes[baseline][ci];
      out.vs_baseline = mcnemar(out.eval, ref.eval, config.significance);
      out.significant = out.vs_baseline->significant && out.eval.correct > ref.eval.correct;
    }
  }

  auto& j = report.json;
  j["mode"] = config.mode == ExperimentMode::MultiSource    ? "multi_source"
              : config.mode == ExperimentMode::SingleSource ? "single_source"
                                                            : "split";
  j["seed"] = config.seed;
  j["lambda"] = config.lambda;
  j["r"] = config.r;
  j["sigma2"] = config.sigma2;
  j["renormalize"] = config.renormalize;
  j["significance"] = config.significance;
  j["columns"] = nlohmann::json::array();
  for (std::size_t ci = 0; ci < report.cells.size(); ++ci) {
    const auto& cell = report.cells[ci];
    j["columns"].push_back({{"label", cell.label},
                            {"sources", cell.sources},
                            {"target", cell.target},
                            {"train_size", cell.train.size()},
                            {"test_size", cell.test.size()},
                            {"baseline", report.baseline_per_cell[ci]}});
  }
  j["methods"] = nlohmann::json::array();
  for (std::size_t mi = 0; mi < report.methods.size(); ++mi) {
    nlohmann::json mj{{"name", report.methods[mi]}, {"cells", nlohmann::json::array()}};
    for (const auto& o : report.outcomes[mi]) {
      nlohmann::json cj{{"accuracy", o.eval.accuracy},
                        {"correct", o.eval.correct},
                        {"total", o.eval.total},
                        {"significant", o.significant}};
      if (o.vs_baseline)
        cj["mcnemar"] = {{"b", o.vs_baseline->b},
                         {"c", o.vs_baseline->c},
                         {"statistic", o.vs_baseline->statistic}};
      if (o.pseudo_label_error_rate) cj["pseudo_label_error_rate"] = *o.pseudo_label_error_rate;
      mj["cells"].push_back(std::move(cj));
    }
    j["methods"].push_back(std::move(mj));
  }
  report.text = render_report_text(report);

  if (config.json_out) {
    auto f = detail::open_output(*config.json_out);
    f << j.dump(2) << '\n';
  }
  if (config.text_out) {
    auto f = detail::open_output(*config.text_out);
    f << report.text;
  }
  return report;
}

}  // namespace tsk
