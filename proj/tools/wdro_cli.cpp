// Command-line front end: single fits, the synthetic benchmark, the lemma
// verification suites and the MNIST pipeline.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "wdro/bench.hpp"
#include "wdro/checkpoint.hpp"
#include "wdro/error.hpp"
#include "wdro/verify.hpp"

namespace fs = std::filesystem;
using namespace wdro;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
}

double parse_real(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw ParameterError("not a number: " + s);
  return v;
}

// Flags shared by `train` and `bench`; values apply only when given.
struct TrainFlags {
  std::string delta, epochs, batch_size, lr, optimizer, inner_steps, k_lip, budget_mode, share, order, truncation;
  std::vector<int> widths;

  void attach(CLI::App* app, bool with_delta) {
    if (with_delta) app->add_option("--delta", delta, "uncertainty level (inf-norm units)");
    app->add_option("--epochs", epochs, "training epochs");
    app->add_option("--batch-size", batch_size, "mini-batch size");
    app->add_option("--lr", lr, "learning rate");
    app->add_option("--optimizer", optimizer, "sgd | adam");
    app->add_option("--inner-steps", inner_steps, "Frank-Wolfe steps per batch");
    app->add_option("--k-lip", k_lip, "norm cap on kappa (number or inf)");
    app->add_option("--budget-mode", budget_mode, "per_sample | batch_mean");
    app->add_option("--covariate-share", share, "fraction of delta spent on covariates");
    app->add_option("--widths", widths, "hidden widths")->delimiter(',');
    app->add_option("--order", order, "activation order m");
    app->add_option("--truncation", truncation, "output clamp M (or none)");
  }

  void apply(TrainConfig& t) const {
    if (!delta.empty()) t.delta = parse_real(delta);
    if (!epochs.empty()) t.epochs = std::stoi(epochs);
    if (!batch_size.empty()) t.batch_size = std::stoi(batch_size);
    if (!lr.empty()) t.learning_rate = parse_real(lr);
    if (!optimizer.empty()) t.optimizer = parse_optimizer(optimizer);
    if (!inner_steps.empty()) t.inner_steps = std::stoi(inner_steps);
    if (!k_lip.empty()) t.k_lip = parse_real(k_lip);
    if (!budget_mode.empty()) t.budget_mode = parse_budget_mode(budget_mode);
    if (!share.empty()) t.covariate_share = parse_real(share);
    if (!widths.empty()) t.widths = widths;
    if (!order.empty()) t.order = std::stoi(order);
    if (truncation == "none") t.truncation.reset();
    else if (!truncation.empty()) t.truncation = parse_real(truncation);
  }
};

Task parse_task_flag(const std::string& s) {
  if (s == "regression") return Task::regression;
  if (s == "binary" || s == "classification") return Task::binary;
  throw ParameterError("unknown task '" + s + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wasserstein distributionally robust regression toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  std::uint64_t seed = 0;
  bool seed_given = false;
  app.add_option_function<std::uint64_t>(
         "--seed", [&](std::uint64_t s) { seed = s, seed_given = true; }, "base random seed")
      ->trigger_on_parse();

  // train ------------------------------------------------------------------
  auto* train = app.add_subcommand("train", "fit one network and print the training log");
  std::string train_config, data_csv, loss_str, task_str, checkpoint_out, log_out;
  std::size_t n = 1000;
  double shift_prob = 0.0;
  bool erm_only = false;
  TrainFlags train_flags;
  train->add_option("--config", train_config, "experiment JSON (its train section, task and first loss)");
  train->add_option("--data", data_csv, "training CSV (x1..xd,y,shifted); default: synthetic sample");
  train->add_option("--task", task_str, "regression | binary (default regression)");
  train->add_option("--loss", loss_str, "quadratic | huber:TAU | check:RHO | bce");
  train->add_option("--n", n, "synthetic sample size");
  train->add_option("--shift-prob", shift_prob, "synthetic shift probability");
  train->add_flag("--erm", erm_only, "use the plain ERM trainer");
  train->add_option("--out", checkpoint_out, "checkpoint path");
  train->add_option("--log", log_out, "JSON-lines training log path (default stdout)");
  train_flags.attach(train, true);

  // bench ------------------------------------------------------------------
  auto* bench = app.add_subcommand("bench", "ERM vs WDRO on the synthetic benchmark");
  std::string bench_config, bench_task, out_dir, format_str = "csv", losses_str;
  int trials = 0;
  unsigned threads = 0;
  bool fast = false;
  std::vector<double> shifts;
  TrainFlags bench_flags;
  bench->add_option("--config", bench_config, "experiment JSON");
  bench->add_flag("--fast", fast, "small profile: 5 trials, 500 training samples, shift 0.1");
  bench->add_option("--task", bench_task, "regression | binary");
  bench->add_option("--losses", losses_str, "comma-separated loss list");
  bench->add_option("--shift-probs", shifts, "shift probabilities")->delimiter(',');
  bench->add_option("--trials", trials, "trials per setting");
  bench->add_option("--threads", threads, "worker threads (0 = all cores)");
  bench->add_option("--out-dir", out_dir, "directory for results, per-trial records and the resolved config");
  bench->add_option("--format", format_str, "csv | json (stdout report)");
  bench_flags.attach(bench, false);

  // verify -----------------------------------------------------------------
  auto* verify = app.add_subcommand("verify", "run the worst-case risk verification sweeps");
  int instances = 200;
  std::string verify_out;
  verify->add_option("--instances", instances, "instances per sweep");
  verify->add_option("--threads", threads, "worker threads (0 = all cores)");
  verify->add_option("--out", verify_out, "JSON report path (default stdout)");

  // mnist ------------------------------------------------------------------
  auto* mnist = app.add_subcommand("mnist", "ERM vs WDRO on perturbed MNIST with an MLP");
  MnistConfig mc;
  std::string kind_str = "mnist_occlusion", min_acc;
  TrainFlags mnist_flags;
  mnist->add_option("--mnist-dir", mc.dir, "directory with the four IDX files")->required();
  mnist->add_option("--n-train", mc.n_train, "training subsample");
  mnist->add_option("--n-test", mc.n_test, "test subsample");
  mnist->add_option("--kind", kind_str, "mnist_occlusion | mnist_corner | mnist_noise");
  mnist->add_option("--shift-prob", mc.shift_prob, "training perturbation probability");
  mnist->add_option("--delta", mc.delta, "uncertainty level when not cross-validating");
  mnist->add_flag("--cv", mc.cross_validate, "cross-validate delta over {0, 0.1, 0.2, 0.3}");
  mnist->add_option("--min-clean-accuracy", min_acc, "exit nonzero if ERM clean accuracy (percent) falls below");
  mnist_flags.attach(mnist, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      ExperimentConfig base = ExperimentConfig::defaults(task_str.empty() ? Task::regression : parse_task_flag(task_str));
      if (!train_config.empty()) base = config_from_json(slurp(train_config), base);
      if (!task_str.empty() && base.task != parse_task_flag(task_str)) {
        base.task = parse_task_flag(task_str);
        base.losses = ExperimentConfig::defaults(base.task).losses;
      }
      TrainConfig tc = base.train;
      tc.loss = base.losses.front();
      if (!loss_str.empty()) tc.loss = LossKind::parse(loss_str);
      tc.seed = seed_given ? seed : base.seed;
      train_flags.apply(tc);
      const Task task = base.task;
      const Dataset data =
          data_csv.empty()
              ? gen_synthetic(n, {shift_prob, task == Task::binary ? ShiftKind::synthetic_label_flip
                                                                   : ShiftKind::synthetic_regression,
                                  tc.seed},
                              task)
              : read_csv(data_csv, task);
      const FitResult r = erm_only ? fit_erm(tc, data) : fit(tc, data);
      std::ofstream log_file;
      if (!log_out.empty()) {
        log_file.open(log_out, std::ios::binary);
        if (!log_file) throw IoError("cannot write " + log_out);
      }
      std::ostream& log = log_out.empty() ? std::cout : log_file;
      for (const auto& rec : r.log) log << to_json_line(rec) << '\n';
      if (!checkpoint_out.empty()) save_checkpoint(r.net, checkpoint_out);
      return 0;
    }

    if (*bench) {
      const Task task = bench_task.empty() ? Task::regression : parse_task_flag(bench_task);
      ExperimentConfig c = ExperimentConfig::defaults(task, fast);
      if (!bench_config.empty()) c = config_from_json(slurp(bench_config), c);
      if (!bench_task.empty() && c.task != task) {
        c.task = task;
        c.losses = ExperimentConfig::defaults(task).losses;
      }
      if (fast) {
        c.trials = 5;
        c.n_train = 500;
        c.shift_probs = {0.1};
      }
      if (!losses_str.empty()) {
        c.losses.clear();
        std::stringstream ss(losses_str);
        std::string item;
        while (std::getline(ss, item, ',')) c.losses.push_back(LossKind::parse(item));
      }
      if (!shifts.empty()) c.shift_probs = shifts;
      if (trials > 0) c.trials = trials;
      if (seed_given) c.seed = seed;
      if (threads > 0) c.threads = threads;
      if (!out_dir.empty()) c.output_dir = out_dir;
      bench_flags.apply(c.train);
      const ReportFormat fmt = parse_report_format(format_str);
      const ExperimentResult res = run_experiment(c);
      std::cout << format_report(res.rows, fmt);
      if (!c.output_dir.empty()) {
        fs::create_directories(c.output_dir);
        emit_report(res.rows, ReportFormat::csv, (fs::path(c.output_dir) / "results.csv").string());
        emit_report(res.rows, ReportFormat::json, (fs::path(c.output_dir) / "results.json").string());
        write_trials(res.trials, (fs::path(c.output_dir) / "trials.jsonl").string());
        write_text(fs::path(c.output_dir) / "config.json", config_to_json(c) + "\n");
      }
      return 0;
    }

    if (*verify) {
      const VerificationReport rep = verify_lemmas(seed, instances, threads);
      if (verify_out.empty()) std::cout << rep.to_json() << '\n';
      else write_text(verify_out, rep.to_json() + "\n");
      for (const auto& c : rep.checks)
        std::cerr << (c.pass ? "PASS " : "FAIL ") << c.lemma << " max_violation=" << c.max_violation
                  << " tolerance=" << c.tolerance << '\n';
      return rep.all_pass() ? 0 : 1;
    }

    if (*mnist) {
      mc.kind = parse_shift_kind(kind_str);
      mc.seed = seed;
      mnist_flags.apply(mc.train);
      const MnistResult r = run_mnist(mc);
      std::cout << r.to_json() << '\n';
      if (!min_acc.empty() && r.erm_clean < parse_real(min_acc)) {
        std::cerr << "clean accuracy " << r.erm_clean << " below " << min_acc << '\n';
        return 1;
      }
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
