#include "dcc/experiment.hpp"

#include <fcntl.h>
#include <openssl/evp.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

#include <json.hpp>

#include "dcc/error.hpp"
#include "dcc/io.hpp"
#include "dcc/rng.hpp"

namespace dcc {

namespace {

using nlohmann::json;

json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const char* where) {
  if (!obj.is_object()) throw ConfigError(std::string(where) + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError(std::string(where) + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read_opt(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("key '") + key + "': " + e.what());
  }
}

json train_config_json(const TrainConfig& c) {
  return json{{"num_clusters", c.num_clusters},
              {"hidden", c.hidden},
              {"init_gain", c.init_gain},
              {"lr_theta", c.lr_theta},
              {"lr_bprime", c.lr_bprime},
              {"batch_pairs", c.batch_pairs},
              {"epochs", c.epochs},
              {"lambda", c.lambda},
              {"clamp", c.clamp},
              {"ridge", c.ridge},
              {"seed", c.seed},
              {"learn_b", c.learn_b},
              {"vol_on_full_matrix", c.vol_on_full_matrix},
              {"lambda_grid", c.lambda_grid},
              {"early_stop", c.early_stop},
              {"patience", c.patience}};
}

TrainConfig train_config_from(const json& j, const TrainConfig& base) {
  reject_unknown(j,
                 {"num_clusters", "hidden", "init_gain", "lr_theta", "lr_bprime", "batch_pairs",
                  "epochs", "lambda", "clamp", "ridge", "seed", "learn_b", "vol_on_full_matrix",
                  "lambda_grid", "early_stop", "patience"},
                 "train");
  TrainConfig c = base;
  read_opt(j, "num_clusters", c.num_clusters);
  read_opt(j, "hidden", c.hidden);
  read_opt(j, "init_gain", c.init_gain);
  read_opt(j, "lr_theta", c.lr_theta);
  read_opt(j, "lr_bprime", c.lr_bprime);
  read_opt(j, "batch_pairs", c.batch_pairs);
  read_opt(j, "epochs", c.epochs);
  read_opt(j, "lambda", c.lambda);
  read_opt(j, "clamp", c.clamp);
  read_opt(j, "ridge", c.ridge);
  read_opt(j, "seed", c.seed);
  read_opt(j, "learn_b", c.learn_b);
  read_opt(j, "vol_on_full_matrix", c.vol_on_full_matrix);
  read_opt(j, "lambda_grid", c.lambda_grid);
  read_opt(j, "early_stop", c.early_stop);
  read_opt(j, "patience", c.patience);
  c.validate();
  return c;
}

const char* mode_name(AnnotationSpec::Mode m) {
  switch (m) {
    case AnnotationSpec::Mode::kClean: return "clean";
    case AnnotationSpec::Mode::kConfusion: return "confusion";
    case AnnotationSpec::Mode::kMachine: return "machine";
    case AnnotationSpec::Mode::kFile: return "file";
  }
  return "clean";
}

AnnotationSpec::Mode mode_from(const std::string& s) {
  if (s == "clean") return AnnotationSpec::Mode::kClean;
  if (s == "confusion") return AnnotationSpec::Mode::kConfusion;
  if (s == "machine") return AnnotationSpec::Mode::kMachine;
  if (s == "file") return AnnotationSpec::Mode::kFile;
  throw ConfigError("unknown annotation mode '" + s + "'");
}

// JSON has no NaN; store it as null.
json num(double v) { return std::isnan(v) ? json(nullptr) : json(v); }
double num_from(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

json row_json(const ResultRow& r) {
  return json{{"method", r.method},
              {"m", r.m},
              {"seed", r.seed},
              {"lambda", r.lambda},
              {"status", r.status},
              {"error", r.error},
              {"noise_level", num(r.noise_level)},
              {"train_pairs", r.train_pairs},
              {"epochs_run", r.epochs_run},
              {"validation_cc", num(r.validation_cc)},
              {"mse_seen", num(r.mse_seen)},
              {"mse_unseen", num(r.mse_unseen)},
              {"acc_seen", num(r.acc_seen)},
              {"nmi_seen", num(r.nmi_seen)},
              {"ari_seen", num(r.ari_seen)},
              {"acc_unseen", num(r.acc_unseen)},
              {"nmi_unseen", num(r.nmi_unseen)},
              {"ari_unseen", num(r.ari_unseen)},
              {"gram_logdet", num(r.gram_logdet)},
              {"asc_satisfied", r.asc_satisfied},
              {"ssc_verdict", r.ssc_verdict},
              {"seconds", num(r.seconds)}};
}

ResultRow row_from(const json& j) {
  ResultRow r;
  r.method = j.at("method").get<std::string>();
  r.m = j.at("m").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.lambda = j.at("lambda").get<double>();
  r.status = j.at("status").get<std::string>();
  r.error = j.at("error").get<std::string>();
  r.noise_level = num_from(j.at("noise_level"));
  r.train_pairs = j.at("train_pairs").get<std::size_t>();
  r.epochs_run = j.at("epochs_run").get<std::size_t>();
  r.validation_cc = num_from(j.at("validation_cc"));
  r.mse_seen = num_from(j.at("mse_seen"));
  r.mse_unseen = num_from(j.at("mse_unseen"));
  r.acc_seen = num_from(j.at("acc_seen"));
  r.nmi_seen = num_from(j.at("nmi_seen"));
  r.ari_seen = num_from(j.at("ari_seen"));
  r.acc_unseen = num_from(j.at("acc_unseen"));
  r.nmi_unseen = num_from(j.at("nmi_unseen"));
  r.ari_unseen = num_from(j.at("ari_unseen"));
  r.gram_logdet = num_from(j.at("gram_logdet"));
  r.asc_satisfied = j.at("asc_satisfied").get<bool>();
  r.ssc_verdict = j.at("ssc_verdict").get<std::string>();
  r.seconds = num_from(j.at("seconds"));
  return r;
}

std::string csv_safe(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

struct Cell {
  std::string method;
  std::size_t m = 0;
  std::uint64_t seed = 0;
  double lambda = 0.0;

  std::string key() const {
    ResultRow r;
    r.method = method;
    r.m = m;
    r.seed = seed;
    r.lambda = lambda;
    return r.key();
  }
};

struct SharedInputs {
  std::optional<GroundTruth> file_gt;
  std::optional<AnnotationSet> file_ann;
  std::optional<ConfusionMatrix> confusion;
};

GroundTruth load_ground_truth(const DatasetSpec& d) {
  GroundTruth gt;
  gt.m_true = read_sample_matrix_csv(d.memberships_path, 'k');
  gt.features = read_sample_matrix_csv(d.features_path, 'd');
  if (gt.m_true.cols() != gt.features.cols()) {
    throw ConfigError("memberships and features have different sample counts");
  }
  gt.seen_count = d.seen == 0 ? gt.m_true.cols() : d.seen;
  if (gt.seen_count > gt.m_true.cols()) throw ConfigError("seen count exceeds the sample count");
  return gt;
}

ResultRow run_cell(const ExperimentSpec& spec, const SharedInputs& shared, const Cell& cell) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  ResultRow row;
  row.method = cell.method;
  row.m = cell.m;
  row.seed = cell.seed;
  row.lambda = cell.lambda;
  try {
    const GroundTruth gt =
        shared.file_gt ? *shared.file_gt
                       : synth_generate(spec.dataset.n, spec.dataset.k, cell.seed,
                                        {spec.dataset.seen, spec.dataset.noise_variance, nullptr});
    const std::uint64_t ann_seed = derive_seed(cell.seed, "M=" + std::to_string(cell.m));
    AnnotationSet ann;
    switch (spec.annotations.mode) {
      case AnnotationSpec::Mode::kClean:
        ann = sample_annotations(gt, cell.m, Matrix::identity(gt.num_clusters()), ann_seed);
        break;
      case AnnotationSpec::Mode::kConfusion:
        ann = sample_annotations(gt, cell.m, shared.confusion->gram(), ann_seed);
        break;
      case AnnotationSpec::Mode::kMachine: {
        const auto km = kmeans_reference(gt.seen_features(), gt.num_clusters(), cell.seed, 10);
        ann = machine_annotate(km.labels, cell.m, ann_seed);
        break;
      }
      case AnnotationSpec::Mode::kFile: {
        const auto& all = *shared.file_ann;
        if (all.size() < cell.m) throw ConfigError("annotation file has fewer than M triplets");
        ann.n = all.n;
        ann.triplets.assign(all.triplets.begin(),
                            all.triplets.begin() + static_cast<std::ptrdiff_t>(cell.m));
        break;
      }
    }
    row.noise_level = annotation_error_rate(ann, gt);
    const AnnotationSplit split =
        split_annotations(ann, spec.annotations.holdout_fraction, derive_seed(cell.seed, "split"));
    row.train_pairs = split.train.size();

    TrainConfig cfg = spec.train;
    cfg.seed = cell.seed;
    cfg.num_clusters = gt.num_clusters();
    cfg.learn_b = cell.method == "volmax";
    cfg.lambda = cell.lambda;
    const bool has_val = !split.validation.triplets.empty();
    const TrainResult tr =
        train(gt.seen_features(), split.train, cfg, has_val ? &split.validation : nullptr);
    row.epochs_run = tr.log.epochs.size();
    row.validation_cc = tr.validation_cc.value_or(std::numeric_limits<double>::quiet_NaN());

    EvalOptions eo = spec.eval;
    eo.ssc_seed = cell.seed;
    const EvalReport rep = evaluate_model(tr.params, gt, eo);
    row.mse_seen = rep.seen.mse;
    row.acc_seen = rep.seen.clustering.acc;
    row.nmi_seen = rep.seen.clustering.nmi;
    row.ari_seen = rep.seen.clustering.ari;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    row.mse_unseen = rep.unseen ? rep.unseen->mse : nan;
    row.acc_unseen = rep.unseen ? rep.unseen->clustering.acc : nan;
    row.nmi_unseen = rep.unseen ? rep.unseen->clustering.nmi : nan;
    row.ari_unseen = rep.unseen ? rep.unseen->clustering.ari : nan;
    row.gram_logdet = rep.gram_logdet;
    row.asc_satisfied = rep.asc.satisfied;
    row.ssc_verdict = to_string(rep.ssc.verdict);
  } catch (const Error& e) {
    row.status = "error";
    row.error = csv_safe(std::string(e.kind()) + ": " + e.what());
  }
  row.seconds = std::chrono::duration<double>(clock::now() - t0).count();
  return row;
}

class Manifest {
 public:
  explicit Manifest(std::filesystem::path path) : path_(std::move(path)) {}

  std::map<std::string, ResultRow> load() const {
    std::map<std::string, ResultRow> done;
    std::ifstream in(path_);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        ResultRow r = row_from(json::parse(line));
        done[r.key()] = r;
      } catch (const json::exception&) {
        // A torn final line from an interrupted run; the cell reruns.
      }
    }
    const std::string text = std::filesystem::exists(path_) ? read_text_file(path_) : std::string();
    if (!text.empty() && text.back() != '\n') {
      std::ofstream(path_, std::ios::app) << '\n';
    }
    return done;
  }

  void append(const ResultRow& row) {
    const std::string line = row_json(row).dump() + "\n";
    std::lock_guard<std::mutex> guard(mu_);
    const int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd < 0) throw IoError("cannot open manifest " + path_.string());
    ::flock(fd, LOCK_EX);
    const ssize_t written = ::write(fd, line.data(), line.size());
    ::flock(fd, LOCK_UN);
    ::close(fd);
    if (written != static_cast<ssize_t>(line.size())) {
      throw IoError("short write to manifest " + path_.string());
    }
  }

 private:
  std::filesystem::path path_;
  std::mutex mu_;
};

std::string method_label(const ResultRow& r) {
  return r.method == "volmax" ? "volmax_lambda=" + format_double(r.lambda) : r.method;
}

}  // namespace

TrainConfig train_config_from_json(const std::string& json_text, const TrainConfig& base) {
  return train_config_from(parse_json(json_text, "train config"), base);
}

std::string train_config_to_json(const TrainConfig& cfg) { return train_config_json(cfg).dump(2); }

void ExperimentSpec::validate() const {
  if (m_grid.empty()) throw ConfigError("experiment: empty M grid");
  if (seeds.empty()) throw ConfigError("experiment: no seeds");
  if (methods.empty()) throw ConfigError("experiment: no methods");
  for (const auto& m : methods) {
    if (m != "vanilla" && m != "volmax") throw ConfigError("experiment: unknown method '" + m + "'");
  }
  if (std::find(methods.begin(), methods.end(), "volmax") != methods.end() &&
      train.lambda_grid.empty()) {
    throw ConfigError("experiment: volmax needs a non-empty lambda_grid");
  }
  if (workers == 0) throw ConfigError("experiment: workers must be positive");
  if (!(annotations.holdout_fraction >= 0.0 && annotations.holdout_fraction < 1.0)) {
    throw ConfigError("experiment: holdout_fraction must be in [0, 1)");
  }
  auto require = [](const std::filesystem::path& p, const char* what) {
    if (p.empty() || !std::filesystem::exists(p)) {
      throw ConfigError(std::string("experiment: ") + what + " '" + p.string() + "' not found");
    }
  };
  if (dataset.source == DatasetSpec::Source::kFiles) {
    require(dataset.memberships_path, "memberships file");
    require(dataset.features_path, "features file");
  } else if (dataset.k < 2 || dataset.n < 2 * dataset.k) {
    throw ConfigError("experiment: synthetic data needs K >= 2 and N >= 2K");
  }
  if (annotations.mode == AnnotationSpec::Mode::kFile) require(annotations.file_path, "annotation file");
  if (annotations.mode == AnnotationSpec::Mode::kConfusion && !annotations.confusion_path.empty()) {
    require(annotations.confusion_path, "confusion file");
  }
  train.validate();
}

ExperimentSpec experiment_spec_from_json(const std::string& json_text) {
  const json j = parse_json(json_text, "experiment spec");
  reject_unknown(j,
                 {"name", "dataset", "annotations", "m_grid", "seeds", "methods", "train", "eval",
                  "output_dir", "workers"},
                 "experiment");
  ExperimentSpec s;
  read_opt(j, "name", s.name);
  read_opt(j, "m_grid", s.m_grid);
  read_opt(j, "seeds", s.seeds);
  read_opt(j, "methods", s.methods);
  read_opt(j, "workers", s.workers);
  if (j.contains("output_dir")) s.output_dir = j.at("output_dir").get<std::string>();
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    reject_unknown(d, {"source", "n", "k", "seen", "noise_variance", "memberships", "features"},
                   "dataset");
    std::string source = "synthetic";
    read_opt(d, "source", source);
    if (source == "files") {
      s.dataset.source = DatasetSpec::Source::kFiles;
    } else if (source != "synthetic") {
      throw ConfigError("dataset.source must be 'synthetic' or 'files'");
    }
    read_opt(d, "n", s.dataset.n);
    read_opt(d, "k", s.dataset.k);
    read_opt(d, "seen", s.dataset.seen);
    read_opt(d, "noise_variance", s.dataset.noise_variance);
    if (d.contains("memberships")) s.dataset.memberships_path = d.at("memberships").get<std::string>();
    if (d.contains("features")) s.dataset.features_path = d.at("features").get<std::string>();
  }
  if (j.contains("annotations")) {
    const json& a = j.at("annotations");
    reject_unknown(a, {"mode", "confusion", "file", "holdout_fraction"}, "annotations");
    std::string mode = "clean";
    read_opt(a, "mode", mode);
    s.annotations.mode = mode_from(mode);
    if (a.contains("confusion")) s.annotations.confusion_path = a.at("confusion").get<std::string>();
    if (a.contains("file")) s.annotations.file_path = a.at("file").get<std::string>();
    read_opt(a, "holdout_fraction", s.annotations.holdout_fraction);
  }
  if (j.contains("train")) s.train = train_config_from(j.at("train"), s.train);
  if (s.dataset.source == DatasetSpec::Source::kSynthetic) s.train.num_clusters = s.dataset.k;
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    reject_unknown(e, {"asc_tol", "ssc_directions", "gram_ridge"}, "eval");
    read_opt(e, "asc_tol", s.eval.asc_tol);
    read_opt(e, "ssc_directions", s.eval.ssc_directions);
    read_opt(e, "gram_ridge", s.eval.gram_ridge);
  }
  s.validate();
  return s;
}

std::string experiment_spec_to_json(const ExperimentSpec& s) {
  json dataset{{"source", s.dataset.source == DatasetSpec::Source::kFiles ? "files" : "synthetic"},
               {"n", s.dataset.n},
               {"k", s.dataset.k},
               {"seen", s.dataset.seen},
               {"noise_variance", s.dataset.noise_variance}};
  if (!s.dataset.memberships_path.empty()) dataset["memberships"] = s.dataset.memberships_path.string();
  if (!s.dataset.features_path.empty()) dataset["features"] = s.dataset.features_path.string();
  json ann{{"mode", mode_name(s.annotations.mode)},
           {"holdout_fraction", s.annotations.holdout_fraction}};
  if (!s.annotations.confusion_path.empty()) ann["confusion"] = s.annotations.confusion_path.string();
  if (!s.annotations.file_path.empty()) ann["file"] = s.annotations.file_path.string();
  const json doc{{"name", s.name},
                 {"dataset", dataset},
                 {"annotations", ann},
                 {"m_grid", s.m_grid},
                 {"seeds", s.seeds},
                 {"methods", s.methods},
                 {"train", train_config_json(s.train)},
                 {"eval",
                  {{"asc_tol", s.eval.asc_tol},
                   {"ssc_directions", s.eval.ssc_directions},
                   {"gram_ridge", s.eval.gram_ridge}}},
                 {"output_dir", s.output_dir.string()},
                 {"workers", s.workers}};
  return doc.dump(2);
}

std::string ResultRow::key() const {
  return method + "|" + std::to_string(m) + "|" + std::to_string(seed) + "|" + format_double(lambda);
}

std::vector<std::string> result_table_header() {
  return {"method",     "M",          "seed",       "lambda",     "status",        "error",
          "noise_level", "train_pairs", "epochs_run", "validation_cc", "mse_seen",   "mse_unseen",
          "acc_seen",   "nmi_seen",   "ari_seen",   "acc_unseen", "nmi_unseen",    "ari_unseen",
          "gram_logdet", "asc_satisfied", "ssc_verdict", "seconds"};
}

void write_result_table_csv(const std::filesystem::path& path, const ResultTable& table) {
  CsvTable t;
  t.header = result_table_header();
  for (const auto& r : table.rows) {
    t.rows.push_back({r.method, std::to_string(r.m), std::to_string(r.seed), format_double(r.lambda),
                      r.status, csv_safe(r.error), format_double(r.noise_level),
                      std::to_string(r.train_pairs), std::to_string(r.epochs_run),
                      format_double(r.validation_cc), format_double(r.mse_seen),
                      format_double(r.mse_unseen), format_double(r.acc_seen),
                      format_double(r.nmi_seen), format_double(r.ari_seen),
                      format_double(r.acc_unseen), format_double(r.nmi_unseen),
                      format_double(r.ari_unseen), format_double(r.gram_logdet),
                      r.asc_satisfied ? "1" : "0", r.ssc_verdict, format_double(r.seconds)});
  }
  write_csv(path, t);
}

ResultTable read_result_table_csv(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  if (t.header != result_table_header()) throw DataError(path.string() + ": unexpected header");
  ResultTable table;
  for (const auto& f : t.rows) {
    ResultRow r;
    r.method = f[0];
    r.m = std::stoull(f[1]);
    r.seed = std::stoull(f[2]);
    r.lambda = parse_double(f[3]);
    r.status = f[4];
    r.error = f[5];
    r.noise_level = parse_double(f[6]);
    r.train_pairs = std::stoull(f[7]);
    r.epochs_run = std::stoull(f[8]);
    r.validation_cc = parse_double(f[9]);
    r.mse_seen = parse_double(f[10]);
    r.mse_unseen = parse_double(f[11]);
    r.acc_seen = parse_double(f[12]);
    r.nmi_seen = parse_double(f[13]);
    r.ari_seen = parse_double(f[14]);
    r.acc_unseen = parse_double(f[15]);
    r.nmi_unseen = parse_double(f[16]);
    r.ari_unseen = parse_double(f[17]);
    r.gram_logdet = parse_double(f[18]);
    r.asc_satisfied = f[19] == "1";
    r.ssc_verdict = f[20];
    r.seconds = parse_double(f[21]);
    table.rows.push_back(std::move(r));
  }
  return table;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<CurvePoint> aggregate_curves(const ResultTable& table) {
  // (M, method label, split) -> values over seeds
  std::map<std::tuple<std::size_t, std::string, std::string>, std::vector<double>> groups;
  auto add = [&](std::size_t m, const std::string& label, const ResultRow& r) {
    groups[{m, label, "seen"}].push_back(r.mse_seen);
    if (!std::isnan(r.mse_unseen)) groups[{m, label, "unseen"}].push_back(r.mse_unseen);
  };
  std::map<std::pair<std::size_t, std::uint64_t>, std::vector<const ResultRow*>> volmax_cells;
  for (const auto& r : table.rows) {
    if (!r.ok()) continue;
    add(r.m, method_label(r), r);
    if (r.method == "volmax") volmax_cells[{r.m, r.seed}].push_back(&r);
  }
  for (const auto& [key, rows] : volmax_cells) {
    std::vector<double> lambdas;
    std::vector<std::optional<double>> vals;
    for (const ResultRow* r : rows) {
      lambdas.push_back(r->lambda);
      vals.push_back(std::isnan(r->validation_cc) ? std::nullopt : std::optional(r->validation_cc));
    }
    if (const auto best = pick_lambda(lambdas, vals)) add(key.first, "volmax_selected", *rows[*best]);
  }

  std::vector<CurvePoint> out;
  for (const auto& [key, values] : groups) {
    CurvePoint p;
    std::tie(p.m, p.method, p.split) = key;
    p.count = values.size();
    p.median = median_of(values);
    p.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    if (values.size() > 1) {
      double ss = 0.0;
      for (double v : values) ss += (v - p.mean) * (v - p.mean);
      p.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    out.push_back(std::move(p));
  }
  return out;
}

void write_curves_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& curves) {
  CsvTable t;
  t.header = {"M", "method", "split", "median", "mean", "std", "count"};
  for (const auto& c : curves) {
    t.rows.push_back({std::to_string(c.m), c.method, c.split, format_double(c.median),
                      format_double(c.mean), format_double(c.std), std::to_string(c.count)});
  }
  write_csv(path, t);
}

std::vector<CurvePoint> read_curves_csv(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  std::vector<CurvePoint> out;
  for (const auto& f : t.rows) {
    CurvePoint c;
    c.m = std::stoull(f[t.column("M")]);
    c.method = f[t.column("method")];
    c.split = f[t.column("split")];
    c.median = parse_double(f[t.column("median")]);
    c.mean = parse_double(f[t.column("mean")]);
    c.std = parse_double(f[t.column("std")]);
    c.count = std::stoull(f[t.column("count")]);
    out.push_back(std::move(c));
  }
  return out;
}

std::string git_blob_hash(const std::string& content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr) throw IoError("sha1: cannot allocate digest context");
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, header.data(), header.size());
  EVP_DigestUpdate(ctx, content.data(), content.size());
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xF]);
  }
  return hex;
}

ExperimentOutcome run_experiment(const ExperimentSpec& spec, const ProgressFn& progress) {
  spec.validate();
  std::filesystem::create_directories(spec.output_dir);

  SharedInputs shared;
  json input_hashes;
  const std::string spec_text = experiment_spec_to_json(spec);
  input_hashes["spec"] = git_blob_hash(spec_text);
  if (spec.dataset.source == DatasetSpec::Source::kFiles) {
    shared.file_gt = load_ground_truth(spec.dataset);
    input_hashes["memberships"] = git_blob_hash(read_text_file(spec.dataset.memberships_path));
    input_hashes["features"] = git_blob_hash(read_text_file(spec.dataset.features_path));
  }
  if (spec.annotations.mode == AnnotationSpec::Mode::kConfusion) {
    if (spec.annotations.confusion_path.empty()) {
      shared.confusion = default_confusion_k3();
    } else {
      shared.confusion = ConfusionMatrix(read_plain_matrix_csv(spec.annotations.confusion_path));
      input_hashes["confusion"] = git_blob_hash(read_text_file(spec.annotations.confusion_path));
    }
    const std::size_t k =
        shared.file_gt ? shared.file_gt->num_clusters() : spec.dataset.k;
    if (shared.confusion->size() != k) throw ConfigError("confusion matrix size does not match K");
  }
  if (spec.annotations.mode == AnnotationSpec::Mode::kFile) {
    const std::size_t n = shared.file_gt ? shared.file_gt->seen_count : spec.dataset.seen;
    shared.file_ann = read_annotations_csv(spec.annotations.file_path, n);
    input_hashes["annotations"] = git_blob_hash(read_text_file(spec.annotations.file_path));
  }

  std::vector<Cell> cells;
  for (std::size_t m : spec.m_grid) {
    for (std::uint64_t seed : spec.seeds) {
      for (const auto& method : spec.methods) {
        if (method == "vanilla") {
          cells.push_back({method, m, seed, 0.0});
        } else {
          for (double l : spec.train.lambda_grid) cells.push_back({method, m, seed, l});
        }
      }
    }
  }

  Manifest manifest(spec.output_dir / "manifest.jsonl");
  const auto done = manifest.load();
  std::vector<std::optional<ResultRow>> results(cells.size());
  std::vector<std::size_t> todo;
  ExperimentOutcome outcome;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto it = done.find(cells[i].key());
    if (it != done.end()) {
      results[i] = it->second;
      ++outcome.cells_skipped;
    } else {
      todo.push_back(i);
    }
  }

  std::mutex progress_mu;
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> finished{0};
  auto worker = [&] {
    for (std::size_t t; (t = next.fetch_add(1)) < todo.size();) {
      const std::size_t i = todo[t];
      ResultRow row = run_cell(spec, shared, cells[i]);
      manifest.append(row);
      const std::size_t n_done = ++finished;
      if (progress) {
        std::lock_guard<std::mutex> guard(progress_mu);
        progress("[" + std::to_string(n_done) + "/" + std::to_string(todo.size()) + "] " +
                 row.key() + " " + row.status + " mse_seen=" + format_double(row.mse_seen) +
                 " (" + format_double(std::round(row.seconds * 10) / 10) + "s)");
      }
      results[i] = std::move(row);
    }
  };
  const std::size_t n_workers = std::max<std::size_t>(1, std::min(spec.workers, todo.size()));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  outcome.cells_run = todo.size();

  for (auto& r : results) outcome.table.rows.push_back(std::move(*r));
  std::sort(outcome.table.rows.begin(), outcome.table.rows.end(),
            [](const ResultRow& a, const ResultRow& b) {
              return std::tie(a.m, a.seed, a.method, a.lambda) <
                     std::tie(b.m, b.seed, b.method, b.lambda);
            });
  outcome.curves = aggregate_curves(outcome.table);

  write_result_table_csv(spec.output_dir / "results.csv", outcome.table);
  write_curves_csv(spec.output_dir / "mse_vs_M.csv", outcome.curves);
  const json meta{{"name", spec.name},
                  {"library_version", kLibraryVersion},
                  {"rng_algorithm", std::string(Rng::kAlgorithm)},
                  {"spec", json::parse(spec_text)},
                  {"input_hashes", input_hashes},
                  {"cells_total", cells.size()},
                  {"cells_run", outcome.cells_run},
                  {"cells_skipped", outcome.cells_skipped}};
  write_text_file(spec.output_dir / "run_metadata.json", meta.dump(2) + "\n");
  return outcome;
}

}  // namespace dcc
