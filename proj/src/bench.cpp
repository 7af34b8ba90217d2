#include "wdro/bench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <iomanip>
#include <map>
#include <sstream>

#include <json.hpp>

#include "wdro/error.hpp"
#include "wdro/parallel.hpp"
#include "wdro/rng.hpp"

namespace wdro {

using Eigen::Index;
using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Metrics

Metric Metric::parse(const std::string& s) {
  const auto colon = s.find(':');
  const std::string head = s.substr(0, colon);
  Metric m;
  auto param = [&](double fallback) {
    if (colon == std::string::npos) return fallback;
    try {
      return std::stod(s.substr(colon + 1));
    } catch (const std::exception&) {
      throw ParameterError("bad metric parameter in '" + s + "'");
    }
  };
  if (head == "mse" && colon == std::string::npos) {
    m.kind = Kind::mse;
  } else if (head == "accuracy" && colon == std::string::npos) {
    m.kind = Kind::accuracy;
  } else if (head == "huber") {
    m.kind = Kind::huber;
    m.tau = param(1.0);
    if (!(m.tau > 0)) throw ParameterError("huber metric needs tau > 0");
  } else if (head == "check") {
    m.kind = Kind::check;
    m.rho = param(0.5);
    if (!(m.rho > 0 && m.rho < 1)) throw ParameterError("check metric needs 0 < rho < 1");
  } else {
    throw ParameterError("unknown metric '" + s + "'");
  }
  return m;
}

std::string Metric::to_string() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::mse: return "mse";
    case Kind::accuracy: return "accuracy";
    case Kind::huber: os << "huber:" << tau; break;
    case Kind::check: os << "check:" << rho; break;
  }
  return os.str();
}

Metric metric_for(const LossKind& loss) {
  Metric m;
  switch (loss.tag) {
    case LossKind::Tag::quadratic: m.kind = Metric::Kind::mse; break;
    case LossKind::Tag::huber: m.kind = Metric::Kind::huber, m.tau = loss.tau; break;
    case LossKind::Tag::check: m.kind = Metric::Kind::check, m.rho = loss.rho; break;
    case LossKind::Tag::bce: m.kind = Metric::Kind::accuracy; break;
  }
  return m;
}

double evaluate(const Mlp& net, const Dataset& data, const Metric& metric) {
  if (data.size() == 0) throw ParameterError("cannot evaluate on an empty dataset");
  const bool labels = data.task != Task::regression;
  if (labels != (metric.kind == Metric::Kind::accuracy))
    throw ParameterError("metric " + metric.to_string() + " does not fit the dataset task");
  const Eigen::MatrixXd out = forward_batch(net, data.x);
  if (!out.allFinite()) throw NumericError("non-finite network output during evaluation");
  const auto n = static_cast<double>(data.size());
  if (metric.kind == Metric::Kind::accuracy) {
    double hits = 0.0;
    for (Index i = 0; i < out.rows(); ++i) {
      double pred;
      if (data.task == Task::binary) {
        pred = out(i, 0) > 0.0 ? 1.0 : -1.0;
      } else {
        Index arg = 0;
        out.row(i).maxCoeff(&arg);
        pred = static_cast<double>(arg);
      }
      hits += pred == data.y(i) ? 1.0 : 0.0;
    }
    return 100.0 * hits / n;
  }
  LossKind kind = LossKind::quadratic();
  if (metric.kind == Metric::Kind::huber) kind = LossKind::huber(metric.tau);
  if (metric.kind == Metric::Kind::check) kind = LossKind::check(metric.rho);
  double sum = 0.0;
  for (Index i = 0; i < out.rows(); ++i) sum += loss_value(kind, out(i, 0) - data.y(i));
  return sum / n;
}

double improvement(const Metric& metric, double erm, double wdro) {
  if (metric.kind == Metric::Kind::accuracy) return wdro - erm;
  return 100.0 * (erm - wdro) / erm;
}

MeanSd mean_sd(const std::vector<double>& v) {
  MeanSd r;
  if (v.empty()) return r;
  double sum = 0.0;
  for (double x : v) sum += x;
  r.mean = sum / static_cast<double>(v.size());
  if (v.size() < 2) return r;
  double ss = 0.0, comp = 0.0;
  for (double x : v) {
    ss += (x - r.mean) * (x - r.mean);
    comp += x - r.mean;
  }
  const auto n = static_cast<double>(v.size());
  r.sd = std::sqrt(std::max(0.0, (ss - comp * comp / n) / (n - 1.0)));
  return r;
}

// ---------------------------------------------------------------------------
// Configuration

void ExperimentConfig::validate() const {
  if (trials < 1) throw ParameterError("trials must be >= 1");
  if (delta_grid.empty()) throw ParameterError("delta grid must not be empty");
  if (losses.empty()) throw ParameterError("at least one loss is required");
  if (shift_probs.empty()) throw ParameterError("at least one shift probability is required");
  if (n_train < 2 || n_test < 1) throw ParameterError("sample sizes too small");
  if (cv_folds < 2) throw ParameterError("cv_folds must be >= 2");
  if (task == Task::multiclass) throw ParameterError("synthetic experiments support regression and binary tasks");
  for (double p : shift_probs)
    if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("shift probabilities must lie in [0,1]");
  for (double d : delta_grid)
    if (!(d >= 0.0)) throw ParameterError("delta grid entries must be nonnegative");
  for (const auto& l : losses) {
    if ((task == Task::binary) != (l.tag == LossKind::Tag::bce))
      throw ParameterError("loss " + l.to_string() + " does not fit the task");
  }
  train.validate();
}

ExperimentConfig ExperimentConfig::defaults(Task task, bool fast) {
  ExperimentConfig c;
  c.task = task;
  c.losses = task == Task::binary
                 ? std::vector<LossKind>{LossKind::bce()}
                 : std::vector<LossKind>{LossKind::quadratic(), LossKind::huber(1.0), LossKind::check(0.5)};
  c.shift_probs = {0.0, 0.05, 0.1, 0.15, 0.2, 0.25};
  if (fast) {
    c.trials = 5;
    c.n_train = 500;
    c.shift_probs = {0.1};
  }
  return c;
}

namespace {

const char* task_name(Task t) {
  switch (t) {
    case Task::regression: return "regression";
    case Task::binary: return "binary";
    case Task::multiclass: return "multiclass";
  }
  return "?";
}

Task parse_task(const std::string& s) {
  if (s == "regression") return Task::regression;
  if (s == "binary" || s == "classification") return Task::binary;
  if (s == "multiclass") return Task::multiclass;
  throw ParameterError("unknown task '" + s + "'");
}

template <class T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

json train_to_json(const TrainConfig& t) {
  json j;
  j["epochs"] = t.epochs;
  j["batch_size"] = t.batch_size;
  j["learning_rate"] = t.learning_rate;
  j["optimizer"] = to_string(t.optimizer);
  j["beta1"] = t.beta1;
  j["beta2"] = t.beta2;
  j["epsilon"] = t.epsilon;
  j["inner_steps"] = t.inner_steps;
  j["k_lip"] = std::isfinite(t.k_lip) ? json(t.k_lip) : json("inf");
  j["budget_mode"] = to_string(t.budget_mode);
  j["covariate_share"] = t.covariate_share;
  j["domain"] = t.domain ? json::array({t.domain->first, t.domain->second}) : json(nullptr);
  j["widths"] = t.widths;
  j["order"] = t.order;
  j["truncation"] = t.truncation ? json(*t.truncation) : json(nullptr);
  return j;
}

void train_from_json(const json& j, TrainConfig& t) {
  take(j, "epochs", t.epochs);
  take(j, "batch_size", t.batch_size);
  take(j, "learning_rate", t.learning_rate);
  if (j.contains("optimizer")) t.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
  take(j, "beta1", t.beta1);
  take(j, "beta2", t.beta2);
  take(j, "epsilon", t.epsilon);
  take(j, "inner_steps", t.inner_steps);
  if (j.contains("k_lip")) {
    const json& k = j.at("k_lip");
    t.k_lip = k.is_string() ? std::stod(k.get<std::string>()) : k.get<double>();
  }
  if (j.contains("budget_mode")) t.budget_mode = parse_budget_mode(j.at("budget_mode").get<std::string>());
  take(j, "covariate_share", t.covariate_share);
  if (j.contains("domain")) {
    const json& d = j.at("domain");
    if (d.is_null()) t.domain.reset();
    else t.domain = Interval{d.at(0).get<double>(), d.at(1).get<double>()};
  }
  take(j, "widths", t.widths);
  take(j, "order", t.order);
  if (j.contains("truncation")) {
    if (j.at("truncation").is_null()) t.truncation.reset();
    else t.truncation = j.at("truncation").get<double>();
  }
}

}  // namespace

ExperimentConfig config_from_json(const std::string& text, const ExperimentConfig& base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("<config>", e.byte, e.what());
  }
  ExperimentConfig c = base;
  try {
    if (j.contains("task")) c.task = parse_task(j.at("task").get<std::string>());
    if (j.contains("losses")) {
      c.losses.clear();
      for (const auto& l : j.at("losses")) c.losses.push_back(LossKind::parse(l.get<std::string>()));
    } else if (j.contains("task") && c.task != base.task) {
      c.losses = ExperimentConfig::defaults(c.task).losses;
    }
    take(j, "shift_probs", c.shift_probs);
    take(j, "delta_grid", c.delta_grid);
    take(j, "trials", c.trials);
    take(j, "n_train", c.n_train);
    take(j, "n_test", c.n_test);
    take(j, "cv_folds", c.cv_folds);
    if (j.contains("noise")) {
      take(j.at("noise"), "clean", c.noise.clean);
      take(j.at("noise"), "shifted", c.noise.shifted);
    }
    if (j.contains("train")) train_from_json(j.at("train"), c.train);
    take(j, "seed", c.seed);
    take(j, "output_dir", c.output_dir);
    take(j, "threads", c.threads);
  } catch (const json::exception& e) {
    throw ParameterError(std::string("invalid experiment config: ") + e.what());
  }
  return c;
}

std::string config_to_json(const ExperimentConfig& c) {
  json j;
  j["task"] = task_name(c.task);
  json losses = json::array();
  for (const auto& l : c.losses) losses.push_back(l.to_string());
  j["losses"] = losses;
  j["shift_probs"] = c.shift_probs;
  j["delta_grid"] = c.delta_grid;
  j["trials"] = c.trials;
  j["n_train"] = c.n_train;
  j["n_test"] = c.n_test;
  j["cv_folds"] = c.cv_folds;
  j["noise"] = {{"clean", c.noise.clean}, {"shifted", c.noise.shifted}};
  j["train"] = train_to_json(c.train);
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["threads"] = c.threads;
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Experiment

namespace {

struct TrialOutput {
  std::vector<TrialRecord> records;
};

std::vector<std::pair<std::string, const Dataset*>> named_sets(const TestSets& t) {
  std::vector<std::pair<std::string, const Dataset*>> out{{"standard", &t.standard}, {"perturbed", &t.perturbed}};
  if (t.imbalanced) out.emplace_back("imbalanced", &*t.imbalanced);
  return out;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const ShiftKind kind =
      config.task == Task::binary ? ShiftKind::synthetic_label_flip : ShiftKind::synthetic_regression;
  const std::size_t ns = config.shift_probs.size(), nt = static_cast<std::size_t>(config.trials),
                    nl = config.losses.size();
  std::vector<TrialOutput> out(ns * nt * nl);

  parallel_for(
      out.size(),
      [&](std::size_t job) {
        const std::size_t s = job / (nt * nl), t = (job / nl) % nt, l = job % nl;
        const double p = config.shift_probs[s];
        const std::uint64_t trial_seed = derive_seed(derive_seed(config.seed, s), t);
        try {
          const Dataset train = gen_synthetic(config.n_train, {p, kind, derive_seed(trial_seed, 0)}, config.task,
                                              config.noise);
          const TestSets tests = make_test_sets(p, kind, config.task, config.task == Task::binary,
                                                derive_seed(trial_seed, 1), config.n_test, config.noise);
          TrainConfig tc = config.train;
          tc.loss = config.losses[l];
          tc.seed = derive_seed(trial_seed, 2);
          tc.delta = 0.0;
          const double delta = cross_validate_delta(tc, train, config.delta_grid, config.cv_folds, 1);

          const Dataset erm_view = train, wdro_view = train;  // each trainer gets its own copy
          const Mlp erm = fit_erm(tc, erm_view).net;
          TrainConfig wc = tc;
          wc.delta = delta;
          const Mlp wdro = fit(wc, wdro_view).net;

          const Metric metric = metric_for(tc.loss);
          for (const auto& [name, set] : named_sets(tests)) {
            TrialRecord r;
            r.shift_prob = p;
            r.trial = static_cast<int>(t);
            r.loss = tc.loss.to_string();
            r.test_set = name;
            r.delta = delta;
            r.erm = evaluate(erm, *set, metric);
            r.wdro = evaluate(wdro, *set, metric);
            r.improvement = improvement(metric, r.erm, r.wdro);
            r.train_hash_erm = erm_view.hash();
            r.train_hash_wdro = wdro_view.hash();
            r.test_hash = set->hash();
            out[job].records.push_back(r);
          }
        } catch (const Error& e) {
          std::ostringstream os;
          os << "trial " << t << " at shift_prob " << p << " (" << config.losses[l].to_string() << "): " << e.what();
          throw Error(os.str());
        }
      },
      config.threads);

  ExperimentResult res;
  for (const auto& o : out) res.trials.insert(res.trials.end(), o.records.begin(), o.records.end());

  // Aggregate in (shift, loss, test set) order; records are already in job order.
  for (std::size_t s = 0; s < ns; ++s) {
    for (std::size_t l = 0; l < nl; ++l) {
      const std::string loss = config.losses[l].to_string();
      std::vector<std::string> sets{"standard", "perturbed"};
      if (config.task == Task::binary) sets.push_back("imbalanced");
      for (const auto& set : sets) {
        std::vector<double> erm, wdro, imp;
        for (const auto& r : res.trials) {
          if (r.shift_prob != config.shift_probs[s] || r.loss != loss || r.test_set != set) continue;
          erm.push_back(r.erm);
          wdro.push_back(r.wdro);
          imp.push_back(r.improvement);
        }
        const MeanSd e = mean_sd(erm), w = mean_sd(wdro), i = mean_sd(imp);
        res.rows.push_back({loss, set, config.shift_probs[s], e.mean, e.sd, w.mean, w.sd, i.mean, i.sd,
                            static_cast<int>(erm.size())});
      }
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// MNIST

TrainConfig MnistConfig::default_train() {
  TrainConfig t;
  t.loss = LossKind::bce();
  t.widths = {128, 64};
  t.epochs = 20;
  t.batch_size = 64;
  t.inner_steps = 3;
  t.k_lip = std::numeric_limits<double>::infinity();
  return t;
}

std::string MnistResult::to_json() const {
  json j{{"delta", delta},          {"erm_clean", erm_clean}, {"erm_perturbed", erm_perturbed},
         {"wdro_clean", wdro_clean}, {"wdro_perturbed", wdro_perturbed},
         {"n_train", n_train},      {"n_test", n_test}};
  return j.dump(2);
}

MnistResult run_mnist(const MnistConfig& config) {
  const std::string dir = config.dir.empty() ? std::string(".") : config.dir;
  const Dataset train_clean = load_idx(dir + "/train-images-idx3-ubyte", dir + "/train-labels-idx1-ubyte",
                                       config.n_train, derive_seed(config.seed, 0));
  const Dataset test = load_idx(dir + "/t10k-images-idx3-ubyte", dir + "/t10k-labels-idx1-ubyte", config.n_test,
                                derive_seed(config.seed, 1));
  const Dataset train = perturb_mnist(train_clean, {config.shift_prob, config.kind, derive_seed(config.seed, 2)});
  const Dataset test_perturbed =
      perturb_mnist(test, {std::min(1.0, 2.0 * config.shift_prob), config.kind, derive_seed(config.seed, 3)});

  TrainConfig tc = config.train;
  tc.seed = derive_seed(config.seed, 4);
  tc.delta = 0.0;
  MnistResult r;
  r.n_train = train.size();
  r.n_test = test.size();
  r.delta = config.cross_validate ? cross_validate_delta(tc, train, config.delta_grid, config.cv_folds) : config.delta;
  const Mlp erm = fit_erm(tc, train).net;
  TrainConfig wc = tc;
  wc.delta = r.delta;
  const Mlp wdro = fit(wc, train).net;
  const Metric acc = Metric::parse("accuracy");
  r.erm_clean = evaluate(erm, test, acc);
  r.erm_perturbed = evaluate(erm, test_perturbed, acc);
  r.wdro_clean = evaluate(wdro, test, acc);
  r.wdro_perturbed = evaluate(wdro, test_perturbed, acc);
  return r;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

const char* const kColumns[] = {"loss",      "test_set", "shift_prob",       "erm_mean",       "erm_sd",
                               "wdro_mean", "wdro_sd",  "improvement_mean", "improvement_sd", "trials"};

std::string g6(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

}  // namespace

ReportFormat parse_report_format(const std::string& s) {
  if (s == "csv") return ReportFormat::csv;
  if (s == "json") return ReportFormat::json;
  throw ParameterError("unknown report format '" + s + "'");
}

std::string format_report(const std::vector<ResultRow>& rows, ReportFormat format) {
  std::ostringstream os;
  if (format == ReportFormat::csv) {
    for (std::size_t c = 0; c < std::size(kColumns); ++c) os << (c ? "," : "") << kColumns[c];
    os << '\n';
    for (const auto& r : rows) {
      os << r.loss << ',' << r.test_set << ',' << g6(r.shift_prob) << ',' << g6(r.erm_mean) << ',' << g6(r.erm_sd)
         << ',' << g6(r.wdro_mean) << ',' << g6(r.wdro_sd) << ',' << g6(r.improvement_mean) << ','
         << g6(r.improvement_sd) << ',' << r.trials << '\n';
    }
    return os.str();
  }
  json arr = json::array();
  auto num = [](double v) { return json::parse(g6(v)); };
  for (const auto& r : rows) {
    arr.push_back({{"loss", r.loss},
                   {"test_set", r.test_set},
                   {"shift_prob", num(r.shift_prob)},
                   {"erm_mean", num(r.erm_mean)},
                   {"erm_sd", num(r.erm_sd)},
                   {"wdro_mean", num(r.wdro_mean)},
                   {"wdro_sd", num(r.wdro_sd)},
                   {"improvement_mean", num(r.improvement_mean)},
                   {"improvement_sd", num(r.improvement_sd)},
                   {"trials", r.trials}});
  }
  return arr.dump(2) + "\n";
}

void emit_report(const std::vector<ResultRow>& rows, ReportFormat format, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write report " + path);
  os << format_report(rows, format);
  if (!os) throw IoError("write failed for report " + path);
}

std::vector<ResultRow> read_report_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open report " + path);
  std::string line;
  std::size_t offset = 0;
  if (!std::getline(in, line)) throw ParseError(path, 0, "missing header");
  std::string expect;
  for (std::size_t c = 0; c < std::size(kColumns); ++c) expect += std::string(c ? "," : "") + kColumns[c];
  if (line != expect) throw ParseError(path, 0, "unexpected header");
  offset += line.size() + 1;
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) {
      offset += 1;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != std::size(kColumns)) throw ParseError(path, offset, "expected 10 fields");
    ResultRow r;
    try {
      r.loss = cells[0];
      r.test_set = cells[1];
      r.shift_prob = std::stod(cells[2]);
      r.erm_mean = std::stod(cells[3]);
      r.erm_sd = std::stod(cells[4]);
      r.wdro_mean = std::stod(cells[5]);
      r.wdro_sd = std::stod(cells[6]);
      r.improvement_mean = std::stod(cells[7]);
      r.improvement_sd = std::stod(cells[8]);
      r.trials = std::stoi(cells[9]);
    } catch (const std::exception&) {
      throw ParseError(path, offset, "malformed number");
    }
    rows.push_back(r);
    offset += line.size() + 1;
  }
  return rows;
}

void write_trials(const std::vector<TrialRecord>& trials, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  for (const auto& r : trials) {
    json j{{"shift_prob", r.shift_prob}, {"trial", r.trial},   {"loss", r.loss},
           {"test_set", r.test_set},     {"delta", r.delta},   {"erm", r.erm},
           {"wdro", r.wdro},             {"improvement", r.improvement},
           {"train_hash_erm", r.train_hash_erm}, {"train_hash_wdro", r.train_hash_wdro}, {"test_hash", r.test_hash}};
    os << j.dump() << '\n';
  }
  if (!os) throw IoError("write failed for " + path);
}

}  // namespace wdro
