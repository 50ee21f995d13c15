#include "dynpred/harness.hpp"

#include "dynpred/dataset.hpp"
#include "dynpred/parallel.hpp"
#include "dynpred/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

namespace dynpred {

std::vector<int> assign_folds(const Dataset& data, int folds, std::uint64_t seed,
                              int repetition) {
  if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  Rng rng(derive_seed(seed, 0x0f01d5ULL + static_cast<std::uint64_t>(repetition)));
  std::vector<int> ev, cens;
  for (int i = 0; i < data.n(); ++i) {
    (data.subjects[static_cast<std::size_t>(i)].event ? ev : cens).push_back(i);
  }
  rng.shuffle(ev);
  rng.shuffle(cens);
  std::vector<int> fold_of(static_cast<std::size_t>(data.n()), 0);
  int next = 0;
  for (int i : ev) fold_of[static_cast<std::size_t>(i)] = next++ % folds;
  next = 0;
  for (int i : cens) fold_of[static_cast<std::size_t>(i)] = next++ % folds;
  return fold_of;
}

namespace {

struct TaskResult {
  bool attempted = false;   // validation fold non-empty at this landmark
  bool failed = false;
  std::string error;
  double fit_seconds = 0.0;
  // per horizon: brier, tdauc (NaN = undefined); plus the c index
  std::vector<double> brier;
  std::vector<double> tdauc;
  double cindex = kMissing;
};

Dataset subset_subjects(const Dataset& data, const std::vector<int>& keep) {
  Dataset out;
  out.baseline_names = data.baseline_names;
  out.longitudinal_names = data.longitudinal_names;
  out.subjects.reserve(keep.size());
  for (int i : keep) out.subjects.push_back(data.subjects[static_cast<std::size_t>(i)]);
  return out;
}

double mean_ignoring_nan(const std::vector<double>& v) {
  double sum = 0.0;
  int n = 0;
  for (double x : v) {
    if (!std::isnan(x)) {
      sum += x;
      ++n;
    }
  }
  return n == 0 ? kMissing : sum / n;
}

double sd_ignoring_nan(const std::vector<double>& v) {
  std::vector<double> vals;
  for (double x : v) {
    if (!std::isnan(x)) vals.push_back(x);
  }
  if (vals.size() < 2) return kMissing;
  const double m = std::accumulate(vals.begin(), vals.end(), 0.0) / vals.size();
  double ss = 0.0;
  for (double x : vals) ss += (x - m) * (x - m);
  return std::sqrt(ss / (vals.size() - 1));
}

}  // namespace

BenchmarkResult run_benchmark(const Dataset& data,
                              const std::vector<MethodSpec>& methods,
                              const std::vector<double>& landmarks,
                              const std::vector<std::vector<double>>& horizons,
                              const CvPlan& plan, LandmarkMode mode,
                              int n_threads) {
  if (landmarks.size() != horizons.size()) {
    throw ConfigError("one horizon set per landmark required");
  }
  for (std::size_t l = 0; l < landmarks.size(); ++l) {
    if (horizons[l].empty()) throw ConfigError("empty horizon set");
    for (double h : horizons[l]) {
      if (h <= landmarks[l]) throw ConfigError("horizons must exceed their landmark");
    }
  }
  if (plan.repetitions < 1) throw ConfigError("repetitions must be >= 1");

  const int n_methods = static_cast<int>(methods.size());
  const int n_landmarks = static_cast<int>(landmarks.size());
  const int k = plan.folds;
  const int reps = plan.repetitions;

  // fold assignment per repetition, fixed before any task runs
  std::vector<std::vector<int>> fold_of(static_cast<std::size_t>(reps));
  for (int r = 0; r < reps; ++r) fold_of[static_cast<std::size_t>(r)] = assign_folds(data, k, plan.seed, r);

  const std::size_t n_tasks =
      static_cast<std::size_t>(reps) * k * n_landmarks * n_methods;
  std::vector<TaskResult> results(n_tasks);

  auto task_index = [&](int r, int f, int l, int m) {
    return ((static_cast<std::size_t>(r) * k + f) * n_landmarks + l) * n_methods + m;
  };

  parallel_for(n_tasks, n_threads, [&](std::size_t idx) {
    const int m = static_cast<int>(idx % n_methods);
    const int l = static_cast<int>(idx / n_methods % n_landmarks);
    const int f = static_cast<int>(idx / n_methods / n_landmarks % k);
    const int r = static_cast<int>(idx / n_methods / n_landmarks / k);
    TaskResult& out = results[idx];
    const auto& hs = horizons[static_cast<std::size_t>(l)];
    out.brier.assign(hs.size(), kMissing);
    out.tdauc.assign(hs.size(), kMissing);

    std::vector<int> train_ids, valid_ids;
    for (int i = 0; i < data.n(); ++i) {
      (fold_of[static_cast<std::size_t>(r)][static_cast<std::size_t>(i)] == f ? valid_ids : train_ids)
          .push_back(i);
    }
    const Dataset train_data = subset_subjects(data, train_ids);
    const Dataset valid_data = subset_subjects(data, valid_ids);

    // the held-out fold may have nobody at risk at this landmark
    LandmarkSlice valid_slice;
    try {
      valid_slice =
          make_landmark_slice(valid_data, landmarks[static_cast<std::size_t>(l)],
                              LandmarkMode::Strict);
    } catch (const NonEstimableError&) {
      return;  // nothing to score; not a model failure
    }
    out.attempted = true;

    try {
      const auto t0 = std::chrono::steady_clock::now();
      const LandmarkSlice train_slice =
          make_landmark_slice(train_data, landmarks[static_cast<std::size_t>(l)], mode);
      const std::uint64_t task_seed =
          derive_seed(plan.seed, 0xbe9c4ULL + idx);
      const FittedPipeline pipe =
          fit_pipeline(methods[static_cast<std::size_t>(m)], train_slice, task_seed);
      const SurvivalPrediction pred = pipe.predict(valid_slice, hs);
      const auto t1 = std::chrono::steady_clock::now();
      out.fit_seconds = std::chrono::duration<double>(t1 - t0).count();

      Outcomes outcomes;
      for (const auto& s : valid_slice.subjects) {
        outcomes.times.push_back(s.event_time);
        outcomes.events.push_back(s.event);
      }
      const double tau = *std::max_element(hs.begin(), hs.end());
      for (std::size_t t = 0; t < hs.size(); ++t) {
        const MetricResult b =
            brier_score(pred, outcomes, landmarks[static_cast<std::size_t>(l)], hs[t]);
        if (b.defined) out.brier[t] = b.value;
        const MetricResult a =
            td_auc(pred, outcomes, landmarks[static_cast<std::size_t>(l)], hs[t]);
        if (a.defined) out.tdauc[t] = a.value;
      }
      const MetricResult c =
          c_index(pred, outcomes, landmarks[static_cast<std::size_t>(l)], tau);
      if (c.defined) out.cindex = c.value;
    } catch (const std::exception& e) {
      out.failed = true;
      out.error = e.what();
    }
  });

  // keyed aggregation, independent of completion order
  BenchmarkResult bench;
  for (int m = 0; m < n_methods; ++m) {
    for (int l = 0; l < n_landmarks; ++l) {
      const auto& hs = horizons[static_cast<std::size_t>(l)];
      int n_failed = 0;
      int n_attempted = 0;
      std::vector<double> fit_times;
      // repetition-level means per cell
      std::vector<std::vector<double>> rep_brier(hs.size()), rep_tdauc(hs.size());
      std::vector<double> rep_cindex;
      for (int r = 0; r < reps; ++r) {
        std::vector<std::vector<double>> fold_brier(hs.size()), fold_tdauc(hs.size());
        std::vector<double> fold_cindex;
        for (int f = 0; f < k; ++f) {
          const TaskResult& tr = results[task_index(r, f, l, m)];
          if (!tr.attempted) continue;
          ++n_attempted;
          if (tr.failed) {
            ++n_failed;
            std::ostringstream os;
            os << "repetition=" << r + 1 << " fold=" << f + 1
               << " landmark=" << format_double(landmarks[static_cast<std::size_t>(l)])
               << " method=" << methods[static_cast<std::size_t>(m)].name() << ": "
               << tr.error;
            bench.failure_log.push_back(os.str());
            continue;
          }
          fit_times.push_back(tr.fit_seconds);
          for (std::size_t t = 0; t < hs.size(); ++t) {
            fold_brier[t].push_back(tr.brier[t]);
            fold_tdauc[t].push_back(tr.tdauc[t]);
          }
          fold_cindex.push_back(tr.cindex);
        }
        for (std::size_t t = 0; t < hs.size(); ++t) {
          rep_brier[t].push_back(mean_ignoring_nan(fold_brier[t]));
          rep_tdauc[t].push_back(mean_ignoring_nan(fold_tdauc[t]));
        }
        rep_cindex.push_back(mean_ignoring_nan(fold_cindex));
      }
      if (n_attempted > 0 && n_failed == n_attempted) bench.any_method_all_failed = true;
      const double mean_secs = mean_ignoring_nan(fit_times);

      auto push_row = [&](const std::string& metric, double horizon,
                          const std::vector<double>& rep_means) {
        BenchmarkRow row;
        row.method = methods[static_cast<std::size_t>(m)].name();
        row.landmark = landmarks[static_cast<std::size_t>(l)];
        row.horizon = horizon;
        row.metric = metric;
        row.mean = mean_ignoring_nan(rep_means);
        row.sd = sd_ignoring_nan(rep_means);
        row.n_failed = n_failed;
        row.mean_fit_seconds = mean_secs;
        bench.rows.push_back(std::move(row));
      };
      push_row("cindex", kMissing, rep_cindex);
      for (std::size_t t = 0; t < hs.size(); ++t) {
        push_row("tdauc", hs[t], rep_tdauc[t]);
        push_row("brier", hs[t], rep_brier[t]);
      }
    }
  }
  return bench;
}

std::vector<AblationBlock> subsample_ablation(
    const Dataset& data, const std::vector<double>& fractions, AblationAxis axis,
    const std::vector<MethodSpec>& methods, const std::vector<double>& landmarks,
    const std::vector<std::vector<double>>& horizons, const CvPlan& plan,
    std::uint64_t subsample_seed, LandmarkMode mode, int n_threads) {
  std::vector<AblationBlock> blocks;
  for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
    const double f = fractions[fi];
    if (f <= 0.0 || f > 1.0) throw ConfigError("fractions must lie in (0, 1]");
    AblationBlock block;
    block.fraction = f;
    Rng rng(derive_seed(subsample_seed, fi));

    if (axis == AblationAxis::Subjects) {
      const int m = static_cast<int>(std::floor(f * data.n()));
      if (m < 2 * plan.folds) {
        block.skipped = true;
        blocks.push_back(std::move(block));
        continue;
      }
      auto keep = rng.sample_without_replacement(data.n(), m);
      std::sort(keep.begin(), keep.end());
      block.result = run_benchmark(subset_subjects(data, keep), methods, landmarks,
                                   horizons, plan, mode, n_threads);
    } else {
      const int p_total = data.n_baseline() + data.n_longitudinal();
      const int m = std::max(1, static_cast<int>(std::lround(f * p_total)));
      auto keep = rng.sample_without_replacement(p_total, m);
      std::sort(keep.begin(), keep.end());
      std::vector<int> base_keep, long_keep;
      for (int c : keep) {
        if (c < data.n_baseline()) {
          base_keep.push_back(c);
        } else {
          long_keep.push_back(c - data.n_baseline());
        }
      }
      Dataset sub;
      for (int c : base_keep) sub.baseline_names.push_back(data.baseline_names[static_cast<std::size_t>(c)]);
      for (int c : long_keep) sub.longitudinal_names.push_back(data.longitudinal_names[static_cast<std::size_t>(c)]);
      sub.subjects.reserve(data.subjects.size());
      for (const auto& s : data.subjects) {
        SubjectRecord r;
        r.id = s.id;
        r.event_time = s.event_time;
        r.event = s.event;
        for (int c : base_keep) r.baseline.push_back(s.baseline[static_cast<std::size_t>(c)]);
        r.visit_times = s.visit_times;
        r.longitudinal.resize(s.longitudinal.rows(), static_cast<Eigen::Index>(long_keep.size()));
        for (std::size_t j = 0; j < long_keep.size(); ++j) {
          r.longitudinal.col(static_cast<Eigen::Index>(j)) = s.longitudinal.col(long_keep[j]);
        }
        sub.subjects.push_back(std::move(r));
      }
      block.result =
          run_benchmark(sub, methods, landmarks, horizons, plan, mode, n_threads);
    }
    blocks.push_back(std::move(block));
  }
  return blocks;
}

CsvTable results_to_csv(const BenchmarkResult& result) {
  CsvTable t;
  t.header = {"method", "landmark", "horizon", "metric",
              "mean",   "sd",       "n_failed", "mean_fit_seconds"};
  for (const auto& row : result.rows) {
    const double secs = std::isnan(row.mean_fit_seconds)
                            ? kMissing
                            : std::round(row.mean_fit_seconds * 1000.0) / 1000.0;
    t.rows.push_back({row.method, format_double(row.landmark),
                      format_double(row.horizon), row.metric,
                      format_double(row.mean), format_double(row.sd),
                      std::to_string(row.n_failed), format_double(secs)});
  }
  return t;
}

BenchmarkResult results_from_csv(const CsvTable& table) {
  BenchmarkResult out;
  const char* expect[] = {"method", "landmark", "horizon", "metric",
                          "mean",   "sd",       "n_failed", "mean_fit_seconds"};
  if (table.header.size() != 8) throw DataError("results CSV: wrong column count");
  for (int i = 0; i < 8; ++i) {
    if (table.header[static_cast<std::size_t>(i)] != expect[i]) {
      throw DataError("results CSV: unexpected header");
    }
  }
  for (const auto& r : table.rows) {
    BenchmarkRow row;
    row.method = r[0];
    row.landmark = parse_double(r[1]).value_or(kMissing);
    row.horizon = parse_double(r[2]).value_or(kMissing);
    row.metric = r[3];
    row.mean = parse_double(r[4]).value_or(kMissing);
    row.sd = parse_double(r[5]).value_or(kMissing);
    row.n_failed = static_cast<int>(parse_double(r[6]).value_or(0));
    row.mean_fit_seconds = parse_double(r[7]).value_or(kMissing);
    out.rows.push_back(std::move(row));
  }
  return out;
}

CsvTable timing_to_csv(const BenchmarkResult& result) {
  std::vector<std::string> methods;
  std::vector<double> landmarks;
  for (const auto& row : result.rows) {
    if (std::find(methods.begin(), methods.end(), row.method) == methods.end()) {
      methods.push_back(row.method);
    }
    if (std::find(landmarks.begin(), landmarks.end(), row.landmark) == landmarks.end()) {
      landmarks.push_back(row.landmark);
    }
  }
  CsvTable t;
  t.header = {"method"};
  for (double l : landmarks) t.header.push_back("landmark_" + format_double(l));
  t.header.push_back("average");
  for (const auto& m : methods) {
    std::vector<std::string> row{m};
    std::vector<double> secs;
    for (double l : landmarks) {
      double v = kMissing;
      for (const auto& r : result.rows) {
        if (r.method == m && r.landmark == l && !std::isnan(r.mean_fit_seconds)) {
          v = r.mean_fit_seconds;
          break;
        }
      }
      if (!std::isnan(v)) secs.push_back(v);
      row.push_back(format_double(std::isnan(v) ? v : std::round(v * 1000.0) / 1000.0));
    }
    const double avg = secs.empty()
                           ? kMissing
                           : std::accumulate(secs.begin(), secs.end(), 0.0) / secs.size();
    row.push_back(format_double(std::isnan(avg) ? avg : std::round(avg * 1000.0) / 1000.0));
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace dynpred
