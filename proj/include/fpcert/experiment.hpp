#pragma once

// Batch experiments and report tables. Every trial draws its randomness from
// a seed derived from (spec seed, D, trial index), and results are gathered
// by index, so the output bytes do not depend on the number of workers.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "fpcert/attack.hpp"
#include "fpcert/certify.hpp"
#include "fpcert/data_io.hpp"
#include "fpcert/smoothing.hpp"
#include "fpcert/train.hpp"

namespace fpcert {

enum class ExperimentKind { RandomLinear, RoundingError, SvmAttack, ReluExactAttack, SmoothingAttack, Mitigation };
enum class ThresholdKind { RTilde, RLo };

inline const char* to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::RandomLinear: return "random_linear";
    case ExperimentKind::RoundingError: return "rounding_error";
    case ExperimentKind::SvmAttack: return "svm_attack";
    case ExperimentKind::ReluExactAttack: return "relu_exact_attack";
    case ExperimentKind::SmoothingAttack: return "smoothing_attack";
    case ExperimentKind::Mitigation: return "mitigation";
  }
  return "unknown";
}

inline ExperimentKind parse_experiment_kind(const std::string& s) {
  for (auto k : {ExperimentKind::RandomLinear, ExperimentKind::RoundingError, ExperimentKind::SvmAttack,
                 ExperimentKind::ReluExactAttack, ExperimentKind::SmoothingAttack, ExperimentKind::Mitigation})
    if (s == to_string(k)) return k;
  throw Error(ErrorCode::InvalidArgument, "unknown experiment kind '" + s + "'");
}

inline const char* to_string(ThresholdKind k) { return k == ThresholdKind::RTilde ? "r_tilde" : "r_lo"; }

inline ThresholdKind parse_threshold_kind(const std::string& s) {
  if (s == "r_tilde") return ThresholdKind::RTilde;
  if (s == "r_lo") return ThresholdKind::RLo;
  throw Error(ErrorCode::InvalidArgument, "threshold must be r_tilde or r_lo, got '" + s + "'");
}

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::RandomLinear;
  std::vector<std::size_t> dims;
  std::size_t trials = 1000;
  AttackBudget budget;
  std::optional<std::uint64_t> neighbors;  // unset: N = D^2
  ThresholdKind threshold_kind = ThresholdKind::RTilde;
  std::uint64_t seed = 0;
  SmoothingConfig smoothing{3.0, 100, 0.001, 0};
  std::string dataset;  // svm_attack only; empty means synthetic data
  long pair_neg = 0;
  long pair_pos = 1;
  std::size_t workers = 1;

  void validate() const {
    if (trials < 1) throw Error(ErrorCode::InvalidArgument, "trials must be >= 1");
    if (dims.empty()) throw Error(ErrorCode::InvalidArgument, "dims must be nonempty");
    for (std::size_t d : dims)
      if (d == 0) throw Error(ErrorCode::InvalidArgument, "dimensions must be >= 1");
    if (neighbors && *neighbors == 0) throw Error(ErrorCode::InvalidArgument, "neighbors must be >= 1");
    if (workers < 1) throw Error(ErrorCode::InvalidArgument, "workers must be >= 1");
    budget.validate();
    smoothing.validate();
  }

  ThresholdKind effective_threshold() const {
    return kind == ExperimentKind::Mitigation ? ThresholdKind::RLo : threshold_kind;
  }

  AttackBudget budget_for(std::size_t dim, std::uint64_t attack_seed) const {
    AttackBudget b = budget;
    b.n_neighbors_total = neighbors ? *neighbors : static_cast<std::uint64_t>(dim) * dim;
    b.seed = attack_seed;
    return b;
  }
};

/// FPCERT_WORKERS if set to a positive integer, else the hardware thread
/// count.
inline std::size_t worker_count_from_env() {
  if (const char* env = std::getenv("FPCERT_WORKERS")) {
    char* end = nullptr;
    unsigned long v = std::strtoul(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n) on `workers` threads. The first exception by
/// index is rethrown after all threads join.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t failed_at = n;
  std::exception_ptr failure;
  auto body = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (i < failed_at) {
          failed_at = i;
          failure = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(body);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

/// CSV table plus a tab-separated copy of the plotted columns.
struct ExperimentOutput {
  std::string csv;
  std::string tsv;
  std::uint64_t invalid_replays = 0;  // successes that failed independent replay
};

inline std::uint64_t trial_seed(std::uint64_t seed, std::size_t dim, std::size_t trial) {
  return SplitMix64::derive(SplitMix64::derive(seed, dim), trial);
}

/// Rates are for reading, so six decimals; the counts carry the exact data.
inline std::string rate_string(std::uint64_t successes, std::uint64_t total) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", total == 0 ? 0.0 : static_cast<double>(successes) / static_cast<double>(total));
  return buf;
}

struct TrialOutcome {
  bool attempted = false;
  bool success = false;
  bool valid = true;
  bool matched = false;
};

inline std::size_t count_if_trials(const std::vector<TrialOutcome>& v, bool TrialOutcome::*field) {
  return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [&](const TrialOutcome& t) { return t.*field; }));
}

/// Random linear models with w, b, x uniform in [-1,1]; rounding search with
/// N = D^2 against R~ (or R_lo for the mitigation).
inline ExperimentOutput run_random_linear(const ExperimentSpec& spec) {
  spec.validate();
  ExperimentOutput out;
  out.csv = "D,trials,successes,rate\n";
  out.tsv = "# D\trate\n";
  const ThresholdKind tk = spec.effective_threshold();
  for (std::size_t dim : spec.dims) {
    std::vector<TrialOutcome> res(spec.trials);
    parallel_for(spec.trials, spec.workers, [&](std::size_t t) {
      std::uint64_t ts = trial_seed(spec.seed, dim, t);
      LinearCase c = gen_random_linear_case(dim, SplitMix64::derive(ts, 0));
      AttackBudget b = spec.budget_for(dim, SplitMix64::derive(ts, 1));
      double threshold =
          tk == ThresholdKind::RTilde ? exact_radius_linear(c.model, c.x) : certify_linear(c.model, c.x).r_lo;
      AttackOutcome o = attack_linear_at(c.model, c.x, threshold, b);
      res[t].attempted = true;
      res[t].success = o.success();
      if (o.success())
        res[t].valid = replay_is_valid(c.x, *o.result, std::nullopt,
                                       [&](std::span<const double> v) -> long { return linear_predict(c.model, v); });
    });
    std::size_t s = count_if_trials(res, &TrialOutcome::success);
    out.invalid_replays += spec.trials - count_if_trials(res, &TrialOutcome::valid);
    out.csv += std::to_string(dim) + "," + std::to_string(spec.trials) + "," + std::to_string(s) + "," +
               rate_string(s, spec.trials) + "\n";
    out.tsv += std::to_string(dim) + "\t" + rate_string(s, spec.trials) + "\n";
  }
  return out;
}

/// Widths of the sound radius interval on the badly scaled case. A row whose
/// radius is not finite is reported with status "overflow" instead of
/// failing the run.
inline ExperimentOutput run_rounding_error(const ExperimentSpec& spec) {
  spec.validate();
  ExperimentOutput out;
  out.csv = "D,r_lo,r_hi,width,r_tilde,status\n";
  out.tsv = "# D\twidth\n";
  for (std::size_t dim : spec.dims) {
    LinearCase c = gen_error_scale_case(dim);
    std::string row = std::to_string(dim) + ",";
    try {
      double rt = exact_radius_linear(c.model, c.x);
      Interval iv = sound_radius_linear(c.model, c.x);
      if (!std::isfinite(rt) || !std::isfinite(iv.hi())) throw Error(ErrorCode::Overflow, "radius overflow");
      double width = iv.hi() - iv.lo();
      row += format_double(iv.lo()) + "," + format_double(iv.hi()) + "," + format_double(width) + "," +
             format_double(rt) + ",ok";
      out.tsv += std::to_string(dim) + "\t" + format_double(width) + "\n";
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Overflow && e.code() != ErrorCode::NonFiniteInput) throw;
      row += ",,,,overflow";
    }
    out.csv += row + "\n";
  }
  return out;
}

/// Binary task for the SVM experiment: the named pair from a dataset, or
/// two Gaussian blobs saturated to the pixel range [0,255].
inline Dataset svm_task_data(const ExperimentSpec& spec, std::size_t dim) {
  if (!spec.dataset.empty()) return binary_subset(load_dataset(spec.dataset), spec.pair_neg, spec.pair_pos);
  Dataset ds = gen_gaussian_blobs(1000 + spec.trials, dim, 2, 60.0, 40.0, SplitMix64::derive(spec.seed, dim), 100.0);
  for (double& v : ds.features.data()) v = std::clamp(std::round(v), 0.0, 255.0);
  for (long& l : ds.labels) l = l == 1 ? 1 : -1;
  ds.domain = Domain{0.0, 255.0};
  return ds;
}

/// Trains an SVM on the first rows and attacks `trials` later rows that it
/// classifies correctly, with the image domain as the clip box.
inline ExperimentOutput run_svm_attack(const ExperimentSpec& spec) {
  spec.validate();
  ExperimentOutput out;
  out.csv = "D,threshold_kind,train_accuracy,attacked,successes,rate\n";
  out.tsv = "# D\trate\n";
  const ThresholdKind tk = spec.effective_threshold();
  for (std::size_t dim : spec.dims) {
    Dataset ds = svm_task_data(spec, dim);
    std::size_t n_train = ds.size() > spec.trials ? ds.size() - spec.trials : ds.size() / 2;
    Dataset train = slice(ds, 0, n_train);
    Dataset test = slice(ds, n_train, spec.trials);
    TrainConfig cfg;
    cfg.seed = SplitMix64::derive(spec.seed, dim);
    LinearTrainResult tr = train_linear_svm(train.features, train.labels, cfg);
    std::vector<TrialOutcome> res(test.size());
    parallel_for(test.size(), spec.workers, [&](std::size_t i) {
      auto x = test.row(i);
      if (linear_predict(tr.model, x) != test.labels[i]) return;
      AttackBudget b = spec.budget_for(test.dim(), trial_seed(spec.seed, dim, i));
      double threshold =
          tk == ThresholdKind::RTilde ? exact_radius_linear(tr.model, x) : certify_linear(tr.model, x).r_lo;
      AttackOutcome o = attack_linear_at(tr.model, x, threshold, b, test.domain);
      res[i].attempted = true;
      res[i].success = o.success();
      if (o.success())
        res[i].valid = replay_is_valid(x, *o.result, test.domain,
                                       [&](std::span<const double> v) -> long { return linear_predict(tr.model, v); });
    });
    std::size_t attacked = count_if_trials(res, &TrialOutcome::attempted);
    std::size_t s = count_if_trials(res, &TrialOutcome::success);
    out.invalid_replays += res.size() - count_if_trials(res, &TrialOutcome::valid);
    out.csv += std::to_string(test.dim()) + "," + to_string(tk) + "," + format_double(tr.log.back().accuracy) + "," +
               std::to_string(attacked) + "," + std::to_string(s) + "," + rate_string(s, attacked) + "\n";
    out.tsv += std::to_string(test.dim()) + "\t" + rate_string(s, attacked) + "\n";
  }
  return out;
}

inline constexpr std::size_t kReluHidden = 16;
inline constexpr std::size_t kReluClasses = 3;
inline constexpr Domain kUnitBox{0.0, 1.0};

/// One random clamped-nonnegative network and one input in [0,1]^D per
/// trial; attack_relu_exact toward the runner-up class.
inline ExperimentOutput run_relu_exact_attack(const ExperimentSpec& spec) {
  spec.validate();
  ExperimentOutput out;
  out.csv = "D,trials,pattern_matched,successes,rate\n";
  out.tsv = "# D\trate\n";
  const std::size_t hidden[] = {kReluHidden};
  for (std::size_t dim : spec.dims) {
    std::vector<TrialOutcome> res(spec.trials);
    parallel_for(spec.trials, spec.workers, [&](std::size_t t) {
      std::uint64_t ts = trial_seed(spec.seed, dim, t);
      ReluNetwork net = gen_random_relu_net(dim, hidden, kReluClasses, SplitMix64::derive(ts, 0), true);
      SplitMix64 g(SplitMix64::derive(ts, 1));
      Vector x(dim);
      for (double& v : x) v = uniform01(g);
      // The [0,1] box keeps PGD on nonnegative inputs, where every unit stays active.
      AttackOutcome o = attack_relu_exact(net, x, spec.budget_for(dim, SplitMix64::derive(ts, 2)), kUnitBox);
      res[t].attempted = true;
      res[t].matched = o.status == AttackStatus::Success || (o.status == AttackStatus::NotFound && o.candidates_tested > 0);
      res[t].success = o.success();
      if (o.success())
        res[t].valid = replay_is_valid(x, *o.result, kUnitBox, [&](std::span<const double> v) -> long {
          return static_cast<long>(relu_predict(net, v));
        });
    });
    std::size_t s = count_if_trials(res, &TrialOutcome::success);
    out.invalid_replays += spec.trials - count_if_trials(res, &TrialOutcome::valid);
    out.csv += std::to_string(dim) + "," + std::to_string(spec.trials) + "," +
               std::to_string(count_if_trials(res, &TrialOutcome::matched)) + "," + std::to_string(s) + "," +
               rate_string(s, spec.trials) + "\n";
    out.tsv += std::to_string(dim) + "\t" + rate_string(s, spec.trials) + "\n";
  }
  return out;
}

/// Fixed two-class Gaussian-blob task (centres 8 apart, unit-2 spread) with a
/// 2x16 ReLU base classifier.
struct SmoothingTask {
  ReluNetwork net;
  Dataset test;
  double train_accuracy = 0.0;
};

inline SmoothingTask make_smoothing_task(std::size_t dim, std::size_t n_test, std::uint64_t seed) {
  Dataset train = gen_gaussian_blobs(500, dim, 2, 8.0, 2.0, SplitMix64::derive(seed, 0));
  TrainConfig cfg;
  cfg.seed = SplitMix64::derive(seed, 1);
  const std::size_t hidden[] = {16, 16};
  MlpTrainResult tr = train_mlp(train.features, train.labels, hidden, 2, cfg);
  Dataset test = gen_gaussian_blobs((n_test + 1) / 2, dim, 2, 8.0, 2.0, SplitMix64::derive(seed, 2));
  return SmoothingTask{std::move(tr.model), slice(test, 0, n_test), tr.log.back().accuracy};
}

inline ExperimentOutput run_smoothing_attack(const ExperimentSpec& spec) {
  spec.validate();
  ExperimentOutput out;
  out.csv = "D,sigma_p,m_samples,inputs,certified,successes,rate\n";
  out.tsv = "# D\trate\n";
  for (std::size_t dim : spec.dims) {
    SmoothingTask task = make_smoothing_task(dim, spec.trials, SplitMix64::derive(spec.seed, dim));
    SmoothingConfig cfg = spec.smoothing;
    cfg.seed = SplitMix64::derive(spec.seed, dim + 1);
    std::vector<TrialOutcome> res(task.test.size());
    parallel_for(task.test.size(), spec.workers, [&](std::size_t i) {
      auto x = task.test.row(i);
      AttackBudget b = spec.budget;
      b.n_neighbors_total = spec.neighbors ? *spec.neighbors : 1000;
      b.seed = trial_seed(spec.seed, dim, i);
      AttackOutcome o = attack_smoothed(task.net, x, cfg, b);
      res[i].attempted = o.status != AttackStatus::AbstainedTarget;
      res[i].success = o.success();
      if (o.success())
        res[i].valid = replay_is_valid(x, *o.result, std::nullopt, [&](std::span<const double> v) -> long {
          auto label = smooth_predict(task.net, v, cfg);
          return label ? static_cast<long>(*label) : o.result->label_before;
        });
    });
    std::size_t certified = count_if_trials(res, &TrialOutcome::attempted);
    std::size_t s = count_if_trials(res, &TrialOutcome::success);
    out.invalid_replays += res.size() - count_if_trials(res, &TrialOutcome::valid);
    out.csv += std::to_string(dim) + "," + format_double(cfg.sigma_p) + "," + std::to_string(cfg.m_samples) + "," +
               std::to_string(res.size()) + "," + std::to_string(certified) + "," + std::to_string(s) + "," +
               rate_string(s, certified) + "\n";
    out.tsv += std::to_string(dim) + "\t" + rate_string(s, certified) + "\n";
  }
  return out;
}

inline ExperimentOutput run_experiment(const ExperimentSpec& spec) {
  switch (spec.kind) {
    case ExperimentKind::RandomLinear:
    case ExperimentKind::Mitigation: return run_random_linear(spec);
    case ExperimentKind::RoundingError: return run_rounding_error(spec);
    case ExperimentKind::SvmAttack: return run_svm_attack(spec);
    case ExperimentKind::ReluExactAttack: return run_relu_exact_attack(spec);
    case ExperimentKind::SmoothingAttack: return run_smoothing_attack(spec);
  }
  throw Error(ErrorCode::InvalidArgument, "unhandled experiment kind");
}

// ---- report rows ------------------------------------------------------------

inline std::string optional_double(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

inline const char* kCertificateHeader = "model_id,input_id,r_tilde,r_lo,r_hi,r_hat\n";

inline std::string certificate_row(const std::string& model_id, std::size_t input_id, const CertificateReport& r) {
  return model_id + "," + std::to_string(input_id) + "," + format_double(r.r_tilde) + "," + format_double(r.r_lo) +
         "," + format_double(r.r_hi) + "," + optional_double(r.r_hat) + "\n";
}

inline const char* kSmoothCertificateHeader = "input_id,sigma_p,m_samples,alpha,label_or_abstain,p_a_lower,radius\n";

inline std::string smooth_certificate_row(std::size_t input_id, const SmoothingConfig& cfg,
                                          const SmoothCertificate& c) {
  return std::to_string(input_id) + "," + format_double(cfg.sigma_p) + "," + std::to_string(cfg.m_samples) + "," +
         format_double(cfg.alpha) + "," + (c.abstained() ? std::string("abstain") : std::to_string(c.label)) + "," +
         format_double(c.p_a_lower) + "," + optional_double(c.radius) + "\n";
}

inline const char* kAttackHeader =
    "model_id,input_id,threshold_kind,threshold,delta_norm,label_before,label_after,candidates_tested,success\n";

inline std::string attack_row(const std::string& model_id, std::size_t input_id, const std::string& threshold_kind,
                              long label_before, const AttackOutcome& o) {
  std::string s = model_id + "," + std::to_string(input_id) + "," + threshold_kind + "," + format_double(o.threshold) +
                  ",";
  if (o.result) {
    s += format_double(o.result->delta_norm) + "," + std::to_string(o.result->label_before) + "," +
         std::to_string(o.result->label_after);
  } else {
    s += "," + std::to_string(label_before) + ",";
  }
  return s + "," + std::to_string(o.candidates_tested) + "," + (o.success() ? "1" : "0") + "\n";
}

// ---- report aggregation -----------------------------------------------------

struct AttackTally {
  std::uint64_t attempts = 0;
  std::uint64_t successes = 0;
};

struct AttackReport {
  std::map<std::pair<std::string, std::string>, AttackTally> by_model;  // (model_id, threshold_kind)
  AttackTally total;
  std::uint64_t rows_read = 0;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

/// Adds every row of an attack CSV to the report. Rows whose success cell is
/// not 0 or 1, or with the wrong number of cells, are schema errors.
inline void accumulate_attack_csv(AttackReport& report, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      if (line + "\n" != kAttackHeader) throw Error(ErrorCode::SchemaError, "not an attack CSV header: " + line);
      header = false;
      continue;
    }
    auto cells = split_csv_line(line);
    if (cells.size() != 9) throw Error(ErrorCode::SchemaError, "attack row needs 9 cells: " + line);
    if (cells[8] != "0" && cells[8] != "1") throw Error(ErrorCode::SchemaError, "success must be 0 or 1: " + line);
    AttackTally& t = report.by_model[{cells[0], cells[2]}];
    bool ok = cells[8] == "1";
    ++t.attempts;
    t.successes += ok;
    ++report.total.attempts;
    report.total.successes += ok;
    ++report.rows_read;
  }
}

inline std::string attack_summary_csv(const AttackReport& report) {
  std::string s = "model_id,threshold_kind,attempts,successes,rate\n";
  AttackTally check;
  for (const auto& [key, t] : report.by_model) {
    s += key.first + "," + key.second + "," + std::to_string(t.attempts) + "," + std::to_string(t.successes) + "," +
         rate_string(t.successes, t.attempts) + "\n";
    check.attempts += t.attempts;
    check.successes += t.successes;
  }
  if (check.attempts != report.total.attempts || check.successes != report.total.successes ||
      check.attempts != report.rows_read)
    throw Error(ErrorCode::InvariantViolation, "report totals do not match the per-row counts");
  s += "TOTAL,all," + std::to_string(report.total.attempts) + "," + std::to_string(report.total.successes) + "," +
       rate_string(report.total.successes, report.total.attempts) + "\n";
  return s;
}

/// Model ids of the form pair_A_B (digits A < B) laid out as the 9 x 9
/// upper triangle: row A in 0..8, column B in 1..9. Cells without data are
/// empty. Threshold kinds are pooled.
inline std::string pairwise_triangle_csv(const AttackReport& report) {
  std::map<std::pair<int, int>, AttackTally> cells;
  for (const auto& [key, t] : report.by_model) {
    int a, b;
    char tail;
    if (std::sscanf(key.first.c_str(), "pair_%d_%d%c", &a, &b, &tail) != 2) continue;
    if (a < 0 || b > 9 || a >= b) continue;
    AttackTally& c = cells[{a, b}];
    c.attempts += t.attempts;
    c.successes += t.successes;
  }
  std::string s = "label";
  for (int b = 1; b <= 9; ++b) s += "," + std::to_string(b);
  s += "\n";
  for (int a = 0; a <= 8; ++a) {
    s += std::to_string(a);
    for (int b = 1; b <= 9; ++b) {
      s += ",";
      auto it = cells.find({a, b});
      if (b > a && it != cells.end()) s += rate_string(it->second.successes, it->second.attempts);
    }
    s += "\n";
  }
  return s;
}

}  // namespace fpcert
