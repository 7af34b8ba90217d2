#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include <json.hpp>

#include "doctest.h"
#include "support.hpp"
#include "wdro/bench.hpp"
#include "wdro/error.hpp"
#include "wdro/notice.hpp"
#include "wdro/verify.hpp"

using namespace wdro;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// f(x) = c for every input: one ReLU unit fed by a unit bias.
Mlp constant_net(int d, double c) {
  DenseLayer h{MatrixXd::Zero(1, d), VectorXd::Ones(1)};
  return Mlp({h}, MatrixXd::Constant(1, 1, c), 1);
}

ExperimentConfig tiny(Task task) {
  ExperimentConfig c = ExperimentConfig::defaults(task, true);
  c.trials = 2;
  c.n_train = 60;
  c.n_test = 40;
  c.shift_probs = {0.0};
  c.delta_grid = {0.0, 0.1};
  c.cv_folds = 2;
  c.train.epochs = 2;
  c.train.batch_size = 16;
  c.train.widths = {4};
  c.seed = 5;
  c.threads = 2;
  return c;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("wdro_bench_" + name);
}

struct QuietNotices {
  QuietNotices() { set_notice_handler({}); }
};

}  // namespace

TEST_CASE("evaluate on hand-built predictors") {
  Dataset d;
  d.x = MatrixXd::Constant(5, 2, 0.3);
  d.y = VectorXd::Zero(5);
  d.shifted.assign(5, 0);
  CHECK(evaluate(constant_net(2, 0.0), d, Metric::parse("mse")) == 0.0);
  CHECK(evaluate(constant_net(2, 2.0), d, Metric::parse("mse")) == doctest::Approx(4.0));
  CHECK(evaluate(constant_net(2, 2.0), d, Metric::parse("huber:1")) == doctest::Approx(1.5));

  Dataset b = d;
  b.task = Task::binary;
  b.y = VectorXd::Ones(5);
  CHECK(evaluate(constant_net(2, -1.0), b, Metric::parse("accuracy")) == 0.0);
  CHECK(evaluate(constant_net(2, 1.0), b, Metric::parse("accuracy")) == 100.0);

  CHECK_THROWS_AS(evaluate(constant_net(2, 0.0), d, Metric::parse("accuracy")), ParameterError);
  CHECK_THROWS_AS(evaluate(constant_net(2, 0.0), b, Metric::parse("mse")), ParameterError);
  CHECK_THROWS_AS(Metric::parse("rmse"), ParameterError);
}

TEST_CASE("evaluate matches an independent loop") {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 20; ++t) {
    const Mlp net = wdro::testing::random_net(rng, 3, 3, 6, 1 + t % 2);
    Dataset d;
    d.x.resize(50, 3);
    d.y.resize(50);
    d.shifted.assign(50, 0);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (int i = 0; i < 50; ++i) {
      d.x.row(i) = wdro::testing::random_point(rng, 3).transpose();
      d.y(i) = nd(rng);
    }
    for (const char* spec : {"mse", "huber:0.7", "check:0.3"}) {
      const Metric m = Metric::parse(spec);
      long double acc = 0;
      for (int i = 0; i < 50; ++i) {
        // Recompute the network output layer by layer.
        VectorXd h = d.x.row(i).transpose();
        for (const auto& layer : net.hidden()) {
          VectorXd z = layer.weight * h + layer.bias;
          for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = std::pow(std::max(z(j), 0.0), net.order());
          h = z;
        }
        const double u = (net.output() * h)(0) - d.y(i);
        double v = 0;
        if (m.kind == Metric::Kind::mse) v = u * u;
        else if (m.kind == Metric::Kind::huber)
          v = std::abs(u) <= m.tau ? 0.5 * u * u : m.tau * (std::abs(u) - 0.5 * m.tau);
        else v = u * (m.rho - (u <= 0 ? 1.0 : 0.0));
        acc += v;
      }
      const double ref = static_cast<double>(acc / 50);
      CHECK(std::abs(evaluate(net, d, m) - ref) <= 1e-12 * std::max(1.0, std::abs(ref)));
    }
  }
}

TEST_CASE("improvement units") {
  CHECK(improvement(Metric::parse("mse"), 2.0, 1.5) == doctest::Approx(25.0));
  CHECK(improvement(Metric::parse("mse"), 2.0, 2.5) == doctest::Approx(-25.0));
  CHECK(improvement(Metric::parse("accuracy"), 60.0, 75.0) == doctest::Approx(15.0));
}

TEST_CASE("mean and sd against an extended-precision reference") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(1e6, 3.0);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> v(200 + 37 * t);
    for (auto& x : v) x = nd(rng);
    long double s = 0;
    for (double x : v) s += x;
    const long double mu = s / v.size();
    long double ss = 0;
    for (double x : v) ss += (x - mu) * (x - mu);
    const double sd = static_cast<double>(std::sqrt(ss / (v.size() - 1)));
    const MeanSd r = mean_sd(v);
    CHECK(std::abs(r.mean - static_cast<double>(mu)) <= 1e-12 * std::abs(static_cast<double>(mu)));
    CHECK(std::abs(r.sd - sd) <= 1e-12 * std::max(1.0, sd));
  }
  CHECK(mean_sd({4.0}).sd == 0.0);
  CHECK(mean_sd({1.0, 3.0}).sd == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("reports round-trip at six significant digits") {
  std::vector<ResultRow> rows;
  for (int i = 0; i < 4; ++i)
    rows.push_back({"huber:1", i % 2 ? "perturbed" : "standard", 0.05 * i, 1.2345678 + i, 0.0123456789,
                    1.1111111, 0.2, 9.87654321, 3.3333333, 20});
  const auto csv = temp_path("rows.csv");
  emit_report(rows, ReportFormat::csv, csv.string());
  const auto back = read_report_csv(csv.string());
  REQUIRE(back.size() == rows.size());
  auto six = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return std::stod(buf);
  };
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].loss == rows[i].loss);
    CHECK(back[i].test_set == rows[i].test_set);
    CHECK(back[i].erm_mean == six(rows[i].erm_mean));
    CHECK(back[i].erm_sd == six(rows[i].erm_sd));
    CHECK(back[i].improvement_mean == six(rows[i].improvement_mean));
    CHECK(back[i].trials == 20);
  }

  const std::string empty = format_report({}, ReportFormat::csv);
  CHECK(empty ==
        "loss,test_set,shift_prob,erm_mean,erm_sd,wdro_mean,wdro_sd,improvement_mean,improvement_sd,trials\n");

  const auto j = nlohmann::json::parse(format_report(rows, ReportFormat::json));
  REQUIRE(j.is_array());
  CHECK(j.size() == rows.size());
  CHECK(j[1]["test_set"] == "perturbed");

  CHECK_THROWS_AS(emit_report(rows, ReportFormat::csv, "/nonexistent/dir/x.csv"), IoError);
  CHECK_THROWS_AS(parse_report_format("xml"), ParameterError);
  std::filesystem::remove(csv);
}

TEST_CASE("experiment config JSON round trip") {
  ExperimentConfig c = ExperimentConfig::defaults(Task::regression);
  c.trials = 7;
  c.delta_grid = {0.0, 0.3};
  c.train.k_lip = std::numeric_limits<double>::infinity();
  c.train.truncation = 4.0;
  c.seed = 99;
  const ExperimentConfig back = config_from_json(config_to_json(c), ExperimentConfig::defaults(Task::binary));
  CHECK(back.task == Task::regression);
  CHECK(back.trials == 7);
  CHECK(back.delta_grid == c.delta_grid);
  CHECK(back.losses == c.losses);
  CHECK(std::isinf(back.train.k_lip));
  CHECK(back.train.truncation == 4.0);
  CHECK(back.seed == 99);
  CHECK(config_to_json(back) == config_to_json(c));

  // Missing keys keep the base, malformed text is a parse error.
  const ExperimentConfig partial = config_from_json(R"({"trials": 3})", c);
  CHECK(partial.trials == 3);
  CHECK(partial.seed == 99);
  CHECK_THROWS(config_from_json("{nope", c));

  ExperimentConfig bad = c;
  bad.trials = 0;
  CHECK_THROWS_AS(bad.validate(), ParameterError);
  bad = c;
  bad.delta_grid.clear();
  CHECK_THROWS_AS(bad.validate(), ParameterError);
}

TEST_CASE("run_experiment rows, pairing and determinism") {
  QuietNotices quiet;
  ExperimentConfig c = tiny(Task::regression);
  c.losses = {LossKind::quadratic(), LossKind::check(0.5)};
  const ExperimentResult r = run_experiment(c);
  CHECK(r.rows.size() == 2 * c.losses.size());
  std::set<std::string> sets;
  for (const auto& row : r.rows) {
    sets.insert(row.test_set);
    CHECK(row.trials == c.trials);
    CHECK(row.erm_sd >= 0.0);
    CHECK(row.wdro_sd >= 0.0);
  }
  CHECK(sets == std::set<std::string>{"standard", "perturbed"});
  REQUIRE(r.trials.size() == static_cast<std::size_t>(c.trials) * c.losses.size() * 2);
  for (const auto& t : r.trials) CHECK(t.train_hash_erm == t.train_hash_wdro);

  // Same seed, same bytes; thread count does not matter.
  ExperimentConfig c1 = c;
  c1.threads = 1;
  CHECK(format_report(run_experiment(c1).rows, ReportFormat::csv) == format_report(r.rows, ReportFormat::csv));

  ExperimentConfig b = tiny(Task::binary);
  b.trials = 1;
  const ExperimentResult rb = run_experiment(b);
  CHECK(rb.rows.size() == 3);
  CHECK(rb.rows.back().test_set == "imbalanced");
}

TEST_CASE("verification report structure") {
  const VerificationReport rep = verify_lemmas(3, 4, 1);
  std::set<std::string> names;
  for (const auto& c : rep.checks) {
    names.insert(c.lemma);
    CHECK(c.instances >= 1);
    CHECK(c.max_violation >= 0.0);
  }
  CHECK(names.count("strong_duality") == 1);
  CHECK(names.count("lipschitz_regularization_bound") == 1);
  CHECK(names.count("zero_radius") == 1);
  CHECK(rep.all_pass());
  const auto j = nlohmann::json::parse(rep.to_json());
  CHECK(j.size() == rep.checks.size());
}
