// fpcert: train, certify, attack, run experiments, aggregate reports.
//
// Exit codes: 0 ok, 2 usage, 3 data error, 4 invariant violation.

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "CLI11.hpp"

#include "fpcert/attack.hpp"
#include "fpcert/certify.hpp"
#include "fpcert/data_io.hpp"
#include "fpcert/experiment.hpp"
#include "fpcert/smoothing.hpp"
#include "fpcert/train.hpp"

namespace {

using namespace fpcert;

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitInvariant = 4;

void emit(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-")
    std::cout << content;
  else
    io::write_atomic(path, content);
}

std::pair<long, long> parse_pair(const std::string& s) {
  auto comma = s.find(',');
  if (comma == std::string::npos) throw Error(ErrorCode::InvalidArgument, "--pair expects A,B");
  try {
    long a = std::stol(s.substr(0, comma)), b = std::stol(s.substr(comma + 1));
    if (a == b) throw Error(ErrorCode::InvalidArgument, "--pair labels must differ");
    return {a, b};
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::InvalidArgument, "--pair expects two integers");
  }
}

std::string model_id_of(const LoadedModel& m, const std::string& fallback) {
  if (m.metadata.contains("model_id") && m.metadata["model_id"].is_string()) return m.metadata["model_id"];
  return fallback;
}

// Rows [begin, begin+count) of the dataset; count 0 means to the end.
struct RowRange {
  std::size_t begin = 0;
  std::size_t count = 0;
};

Dataset load_rows(const std::string& spec, bool rescale, const std::string& pair, RowRange range) {
  Dataset ds = load_dataset(spec, rescale);
  if (!pair.empty()) {
    auto [a, b] = parse_pair(pair);
    ds = binary_subset(ds, a, b);
  }
  if (range.begin >= ds.size()) throw Error(ErrorCode::InvalidArgument, "row index beyond the dataset");
  return slice(ds, range.begin, range.count == 0 ? ds.size() : range.count);
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string kind = "svm";
  std::string dataset;
  std::string pair;
  std::vector<std::size_t> hidden{16, 16};
  std::size_t classes = 10;
  bool rescale = false;
  TrainConfig cfg;
  std::string out;
  std::string log;
  std::string model_id;
};

void run_train(const TrainArgs& a) {
  Dataset ds = load_dataset(a.dataset, a.rescale);
  nlohmann::json meta = nlohmann::json::object();
  meta["seed"] = a.cfg.seed;
  meta["epochs"] = a.cfg.epochs;
  std::vector<EpochLog> log;
  Model model;
  if (a.kind == "svm") {
    if (a.pair.empty()) throw Error(ErrorCode::InvalidArgument, "svm training needs --pair A,B");
    auto [neg, pos] = parse_pair(a.pair);
    ds = binary_subset(ds, neg, pos);
    LinearTrainResult r = train_linear_svm(ds.features, ds.labels, a.cfg);
    model = r.model;
    log = std::move(r.log);
    meta["model_id"] = a.model_id.empty() ? "pair_" + std::to_string(neg) + "_" + std::to_string(pos) : a.model_id;
    meta["pair"] = {neg, pos};
  } else if (a.kind == "mlp") {
    if (!a.pair.empty()) {
      auto [neg, pos] = parse_pair(a.pair);
      ds = binary_subset(ds, neg, pos);
      for (long& l : ds.labels) l = l > 0 ? 1 : 0;
    }
    std::size_t k = a.pair.empty() ? a.classes : 2;
    MlpTrainResult r = train_mlp(ds.features, ds.labels, a.hidden, k, a.cfg);
    model = r.model;
    log = std::move(r.log);
    meta["model_id"] = a.model_id.empty() ? std::string("mlp") : a.model_id;
    meta["clamp_nonnegative"] = a.cfg.clamp_nonnegative;
  } else {
    throw Error(ErrorCode::InvalidArgument, "--kind must be svm or mlp");
  }
  meta["train_accuracy"] = log.back().accuracy;
  save_model(a.out, model, meta);
  if (!a.log.empty()) {
    std::string s = "epoch,objective,accuracy\n";
    for (const EpochLog& e : log)
      s += std::to_string(e.epoch) + "," + format_double(e.objective) + "," + format_double(e.accuracy) + "\n";
    io::write_atomic(a.log, s);
  }
  std::cerr << "trained " << a.kind << " on " << ds.size() << " rows, accuracy " << log.back().accuracy << "\n";
}

// ---- certify ----------------------------------------------------------------

struct CertifyArgs {
  std::string model;
  std::string dataset;
  std::string pair;
  bool rescale = false;
  RowRange rows{0, 1};
  bool sound = false;
  bool rhat = false;
  bool smooth = false;
  SmoothingConfig smoothing;
  AttackBudget budget;
  std::string out;
};

/// The binary model whose radius certifies x: the linear model itself, or
/// the runner-up difference model of the ReLU network's region at x.
LinearModel certified_model(const Model& m, std::span<const double> x) {
  if (const auto* lin = std::get_if<LinearModel>(&m)) return *lin;
  const auto& net = std::get<ReluNetwork>(m);
  ForwardResult f = relu_forward(net, x);
  return difference_model(linearize(net, x), f.label, runner_up(f.scores, f.label));
}

void run_certify(const CertifyArgs& a) {
  LoadedModel lm = load_model(a.model);
  Dataset ds = load_rows(a.dataset, a.rescale, a.pair, a.rows);
  std::string id = model_id_of(lm, "model");
  if (a.smooth) {
    const auto* net = std::get_if<ReluNetwork>(&lm.model);
    if (!net) throw Error(ErrorCode::InvalidArgument, "--smooth needs a ReLU model");
    std::string s = kSmoothCertificateHeader;
    for (std::size_t i = 0; i < ds.size(); ++i)
      s += smooth_certificate_row(a.rows.begin + i, a.smoothing, smooth_certify(*net, ds.row(i), a.smoothing));
    emit(a.out, s);
    return;
  }
  std::string s = kCertificateHeader;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto x = ds.row(i);
    LinearModel m = certified_model(lm.model, x);
    std::string row = id + "," + std::to_string(a.rows.begin + i) + ",";
    double rt = exact_radius_linear(m, x);
    row += format_double(rt) + ",";
    if (a.sound || a.rhat) {
      CertificateReport r = certify_linear(m, x);
      if (!(r.r_lo <= r.r_tilde && r.r_tilde <= r.r_hi))
        throw Error(ErrorCode::InvariantViolation, "r_lo <= r_tilde <= r_hi violated at row " + std::to_string(i));
      row += format_double(r.r_lo) + "," + format_double(r.r_hi) + ",";
      if (a.rhat) {
        AttackBudget b = a.budget;
        b.seed = SplitMix64::derive(a.budget.seed, a.rows.begin + i);
        row += format_double(rhat_search(m, x, r.r_lo, r.r_hi, b));
      }
    } else {
      row += ",,";
    }
    s += row + "\n";
  }
  emit(a.out, s);
}

// ---- attack -----------------------------------------------------------------

struct AttackArgs {
  std::string model;
  std::string dataset;
  std::string pair;
  bool rescale = false;
  RowRange rows{0, 0};
  std::string threshold = "r_tilde";
  bool smooth = false;
  SmoothingConfig smoothing;
  AttackBudget budget;
  std::optional<std::uint64_t> neighbors;
  std::size_t workers = 1;
  std::string out;
};

void run_attack(const AttackArgs& a) {
  LoadedModel lm = load_model(a.model);
  Dataset ds = load_rows(a.dataset, a.rescale, a.pair, a.rows);
  std::string id = model_id_of(lm, "model");
  ThresholdKind tk = parse_threshold_kind(a.threshold);
  std::vector<std::string> rows(ds.size());
  std::vector<char> invalid(ds.size(), 0);
  const Domain domain = ds.domain;
  parallel_for(ds.size(), a.workers, [&](std::size_t i) {
    auto x = ds.row(i);
    AttackBudget b = a.budget;
    b.seed = SplitMix64::derive(a.budget.seed, a.rows.begin + i);
    b.n_neighbors_total = a.neighbors ? *a.neighbors : static_cast<std::uint64_t>(x.size()) * x.size();
    AttackOutcome o;
    long before;
    std::string kind;
    if (const auto* lin = std::get_if<LinearModel>(&lm.model)) {
      before = linear_predict(*lin, x);
      double threshold = tk == ThresholdKind::RTilde ? exact_radius_linear(*lin, x) : certify_linear(*lin, x).r_lo;
      o = attack_linear_at(*lin, x, threshold, b, domain);
      kind = to_string(tk);
      if (o.success())
        invalid[i] = !replay_is_valid(x, *o.result, domain,
                                      [&](std::span<const double> v) -> long { return linear_predict(*lin, v); });
    } else {
      const auto& net = std::get<ReluNetwork>(lm.model);
      if (a.smooth) {
        SmoothCertificate cert = smooth_certify(net, x, a.smoothing);
        before = static_cast<long>(cert.label);
        o = attack_smoothed(net, x, a.smoothing, b, domain);
        kind = "smoothed";
        if (o.success())
          invalid[i] = !replay_is_valid(x, *o.result, domain, [&](std::span<const double> v) -> long {
            auto l = smooth_predict(net, v, a.smoothing);
            return l ? static_cast<long>(*l) : before;
          });
      } else {
        if (tk != ThresholdKind::RTilde) throw Error(ErrorCode::InvalidArgument, "ReLU attacks use the exact radius r");
        before = static_cast<long>(relu_predict(net, x));
        o = attack_relu_exact(net, x, b, domain);
        kind = "r";
        if (o.success())
          invalid[i] = !replay_is_valid(x, *o.result, domain, [&](std::span<const double> v) -> long {
            return static_cast<long>(relu_predict(net, v));
          });
      }
    }
    rows[i] = attack_row(id, a.rows.begin + i, kind, before, o);
  });
  std::string s = kAttackHeader;
  for (const auto& r : rows) s += r;
  emit(a.out, s);
  std::size_t bad = std::count(invalid.begin(), invalid.end(), 1);
  if (bad) throw Error(ErrorCode::InvariantViolation, std::to_string(bad) + " reported successes failed replay");
}

// ---- experiment -------------------------------------------------------------

struct ExperimentArgs {
  std::string kind;
  std::vector<std::size_t> dims;
  std::optional<std::size_t> trials;
  std::string threshold = "r_tilde";
  bool paper_scale = false;
  std::optional<std::uint64_t> neighbors;
  ExperimentSpec spec;
  std::string out;
  std::string tsv;
};

std::vector<std::size_t> default_dims(ExperimentKind k, bool paper_scale) {
  switch (k) {
    case ExperimentKind::RoundingError: {
      if (!paper_scale) return {20, 100, 500, 1000};
      std::vector<std::size_t> d;
      for (std::size_t v = 20; v <= 1000; v += 20) d.push_back(v);
      return d;
    }
    case ExperimentKind::RandomLinear:
    case ExperimentKind::Mitigation:
      if (paper_scale) return {10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
      return {10, 25, 50, 100, 200};
    case ExperimentKind::SvmAttack: return {64};
    case ExperimentKind::ReluExactAttack: return {10};
    case ExperimentKind::SmoothingAttack: return {10};
  }
  return {};
}

void run_experiment_cmd(ExperimentArgs& a) {
  ExperimentSpec& spec = a.spec;
  spec.kind = parse_experiment_kind(a.kind);
  spec.dims = a.dims.empty() ? default_dims(spec.kind, a.paper_scale) : a.dims;
  spec.trials = a.trials ? *a.trials : (a.paper_scale ? 10000 : 1000);
  spec.threshold_kind = parse_threshold_kind(a.threshold);
  spec.neighbors = a.neighbors;
  spec.workers = worker_count_from_env();
  ExperimentOutput out = run_experiment(spec);
  emit(a.out, out.csv);
  if (!a.tsv.empty()) io::write_atomic(a.tsv, out.tsv);
  if (out.invalid_replays)
    throw Error(ErrorCode::InvariantViolation, std::to_string(out.invalid_replays) + " successes failed replay");
}

// ---- report -----------------------------------------------------------------

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string out;
  std::string triangle;
};

void run_report(const ReportArgs& a) {
  AttackReport report;
  for (const auto& path : a.inputs) accumulate_attack_csv(report, io::read_text(path));
  emit(a.out, attack_summary_csv(report));
  if (!a.triangle.empty()) io::write_atomic(a.triangle, pairwise_triangle_csv(report));
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::InvalidBracket: return kExitUsage;
    case ErrorCode::InvariantViolation: return kExitInvariant;
    default: return kExitData;
  }
}

void add_budget_options(CLI::App* cmd, AttackBudget& b) {
  cmd->add_option("--steps", b.n_steps_per_side, "ULP neighbours per side (n)")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", b.seed, "Sampling seed");
  cmd->add_option("--pgd-step", b.pgd_step, "ReluPGD step size s")->check(CLI::PositiveNumber);
  cmd->add_option("--max-pgd-iters", b.max_pgd_iters, "ReluPGD iteration cap")->check(CLI::PositiveNumber);
}

void add_smoothing_options(CLI::App* cmd, SmoothingConfig& s) {
  cmd->add_option("--sigma", s.sigma_p, "Gaussian noise scale")->check(CLI::PositiveNumber);
  cmd->add_option("--samples", s.m_samples, "Monte Carlo samples M")->check(CLI::Range(2ULL, ~0ULL));
  cmd->add_option("--alpha", s.alpha, "Failure probability")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--noise-seed", s.seed, "Noise seed");
}

RowRange parse_rows(const std::string& s) {
  // "i" or "begin:count"
  auto colon = s.find(':');
  try {
    if (colon == std::string::npos) return {std::stoul(s), 1};
    return {std::stoul(s.substr(0, colon)), std::stoul(s.substr(colon + 1))};
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::InvalidArgument, "row selection must be I or BEGIN:COUNT");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Floating-point soundness attacks on certified robustness radii"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a linear SVM or a ReLU MLP");
  train->add_option("--kind", ta.kind, "svm or mlp")->check(CLI::IsMember({"svm", "mlp"}));
  train->add_option("--dataset", ta.dataset, "CSV file or IDX prefix")->required();
  train->add_option("--pair", ta.pair, "Binary task A,B (A -> -1, B -> +1)");
  train->add_option("--hidden", ta.hidden, "Hidden layer sizes")->delimiter(',');
  train->add_option("--classes", ta.classes, "Output classes for mlp");
  train->add_flag("--rescale", ta.rescale, "Map IDX pixels to [0,1]");
  train->add_option("--epochs", ta.cfg.epochs)->check(CLI::PositiveNumber);
  train->add_option("--lr", ta.cfg.learning_rate)->check(CLI::PositiveNumber);
  train->add_option("--momentum", ta.cfg.momentum);
  train->add_option("--batch", ta.cfg.batch_size)->check(CLI::PositiveNumber);
  train->add_option("--lambda", ta.cfg.l1_lambda);
  train->add_flag("--clamp", ta.cfg.clamp_nonnegative, "Clamp hidden weights and biases to >= 0");
  train->add_option("--seed", ta.cfg.seed);
  train->add_option("--model-id", ta.model_id);
  train->add_option("--out", ta.out, "Model file")->required();
  train->add_option("--log", ta.log, "Training log CSV");

  CertifyArgs ca;
  std::string certify_rows = "0";
  auto* certify = app.add_subcommand("certify", "Certified radius rows for dataset inputs");
  certify->add_option("--model", ca.model)->required();
  certify->add_option("--dataset", ca.dataset)->required();
  certify->add_option("--input-row", certify_rows, "I or BEGIN:COUNT");
  certify->add_option("--pair", ca.pair);
  certify->add_flag("--rescale", ca.rescale);
  certify->add_flag("--sound", ca.sound, "Add interval bounds r_lo, r_hi");
  certify->add_flag("--rhat", ca.rhat, "Add the searched radius r_hat (implies --sound)");
  certify->add_flag("--smooth", ca.smooth, "Randomized-smoothing certificate (ReLU models)");
  certify->add_option("--neighbors", ca.budget.n_neighbors_total, "N for the r_hat search")->check(CLI::PositiveNumber);
  add_budget_options(certify, ca.budget);
  add_smoothing_options(certify, ca.smoothing);
  certify->add_option("--out", ca.out);

  AttackArgs aa;
  std::string attack_rows = "0:0";
  auto* attack = app.add_subcommand("attack", "Rounding-search attack on dataset inputs");
  attack->add_option("--model", aa.model)->required();
  attack->add_option("--dataset", aa.dataset)->required();
  attack->add_option("--rows", attack_rows, "BEGIN:COUNT (COUNT 0 = to the end)");
  attack->add_option("--pair", aa.pair);
  attack->add_flag("--rescale", aa.rescale);
  attack->add_option("--threshold", aa.threshold)->check(CLI::IsMember({"r_tilde", "r_lo"}));
  attack->add_flag("--smooth", aa.smooth, "Attack the smoothed classifier");
  attack->add_option("--neighbors", aa.neighbors, "N (default D^2)")->check(CLI::PositiveNumber);
  add_budget_options(attack, aa.budget);
  add_smoothing_options(attack, aa.smoothing);
  attack->add_option("--out", aa.out);

  ExperimentArgs ea;
  auto* experiment = app.add_subcommand("experiment", "Seeded batch experiment");
  experiment->add_option("--kind", ea.kind)->required()->check(
      CLI::IsMember({"random_linear", "rounding_error", "svm_attack", "relu_exact_attack", "smoothing_attack",
                     "mitigation"}));
  experiment->add_option("--dims", ea.dims)->delimiter(',');
  experiment->add_option("--trials", ea.trials)->check(CLI::PositiveNumber);
  experiment->add_option("--threshold", ea.threshold)->check(CLI::IsMember({"r_tilde", "r_lo"}));
  experiment->add_option("--neighbors", ea.neighbors, "N (default D^2)")->check(CLI::PositiveNumber);
  experiment->add_option("--dataset", ea.spec.dataset, "svm_attack: CSV file or IDX prefix");
  std::string exp_pair;
  experiment->add_option("--pair", exp_pair, "svm_attack: labels A,B");
  experiment->add_flag("--paper-scale", ea.paper_scale, "10000 trials and the full dimension grid");
  add_budget_options(experiment, ea.spec.budget);
  add_smoothing_options(experiment, ea.spec.smoothing);
  experiment->add_option("--out", ea.out);
  experiment->add_option("--tsv", ea.tsv, "Plot data");
  experiment->get_option("--seed")->description("Experiment seed");

  ReportArgs ra;
  auto* report = app.add_subcommand("report", "Aggregate attack CSVs");
  report->add_option("--in", ra.inputs)->required()->check(CLI::ExistingFile);
  report->add_option("--out", ra.out);
  report->add_option("--triangle", ra.triangle, "9x9 pairwise success-rate table");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*train) run_train(ta);
    if (*certify) {
      ca.rows = parse_rows(certify_rows);
      run_certify(ca);
    }
    if (*attack) {
      aa.rows = parse_rows(attack_rows);
      aa.workers = worker_count_from_env();
      run_attack(aa);
    }
    if (*experiment) {
      ea.spec.seed = ea.spec.budget.seed;
      if (!exp_pair.empty()) std::tie(ea.spec.pair_neg, ea.spec.pair_pos) = parse_pair(exp_pair);
      run_experiment_cmd(ea);
    }
    if (*report) run_report(ra);
  } catch (const Error& e) {
    std::cerr << "fpcert: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "fpcert: internal error: " << e.what() << "\n";
    return kExitInvariant;
  }
  return 0;
}
