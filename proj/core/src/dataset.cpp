#include "dynpred/dataset.hpp"

#include "dynpred/csv.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace dynpred {

std::string LoadReport::summary() const {
  std::ostringstream os;
  os << "subjects read: " << n_read << "\n"
     << "subjects retained: " << n_retained << "\n"
     << "excluded, missing baseline covariate: "
     << excluded_missing_baseline.size() << "\n"
     << "excluded, missing longitudinal value at baseline visit: "
     << excluded_missing_baseline_long.size() << "\n"
     << "excluded, no baseline visit: " << excluded_no_baseline_visit.size()
     << "\n";
  auto list = [&os](const char* label, const std::vector<std::string>& ids) {
    if (ids.empty()) return;
    os << label << ":";
    for (const auto& id : ids) os << ' ' << id;
    os << "\n";
  };
  list("  ids (missing baseline)", excluded_missing_baseline);
  list("  ids (missing longitudinal at baseline)", excluded_missing_baseline_long);
  list("  ids (no baseline visit)", excluded_no_baseline_visit);
  return os.str();
}

namespace {

bool column_is_numeric(const CsvTable& t, int col) {
  for (const auto& row : t.rows) {
    const auto& cell = row[static_cast<std::size_t>(col)];
    if (cell.empty()) continue;
    if (!parse_double(cell)) return false;
  }
  return true;
}

struct BaselineSchema {
  // one entry per output column: source column + optional level for one-hot
  struct Column {
    int source = 0;
    std::string name;
    std::string level;  // empty = numeric passthrough
  };
  std::vector<Column> columns;
};

BaselineSchema make_baseline_schema(const CsvTable& t,
                                    const std::vector<int>& covariate_cols) {
  BaselineSchema schema;
  for (int col : covariate_cols) {
    const auto& name = t.header[static_cast<std::size_t>(col)];
    if (column_is_numeric(t, col)) {
      schema.columns.push_back({col, name, ""});
      continue;
    }
    std::set<std::string> levels;
    for (const auto& row : t.rows) {
      const auto& cell = row[static_cast<std::size_t>(col)];
      if (!cell.empty()) levels.insert(cell);
    }
    // first (lexicographic) level is the reference
    bool first = true;
    for (const auto& level : levels) {
      if (first) {
        first = false;
        continue;
      }
      schema.columns.push_back({col, name + "=" + level, level});
    }
    if (levels.size() == 1) {
      // single-level categorical carries no information; encoded as constant 0
      schema.columns.push_back({col, name + "=" + *levels.begin(), *levels.begin()});
    }
  }
  return schema;
}

}  // namespace

LoadResult load_dataset(const std::string& baseline_csv,
                        const std::string& longitudinal_csv) {
  const CsvTable base = read_csv(baseline_csv);
  const CsvTable lng = read_csv(longitudinal_csv);

  const auto id_col = base.column("id");
  const auto time_col = base.column("event_time");
  const auto event_col = base.column("event_indicator");
  if (!id_col || !time_col || !event_col) {
    throw DataError(baseline_csv +
                    ": header must contain id,event_time,event_indicator");
  }
  std::vector<int> covariate_cols;
  for (int c = 0; c < base.n_cols(); ++c) {
    if (c != *id_col && c != *time_col && c != *event_col) covariate_cols.push_back(c);
  }
  const BaselineSchema schema = make_baseline_schema(base, covariate_cols);

  const auto lid_col = lng.column("id");
  const auto ltime_col = lng.column("time");
  if (!lid_col || !ltime_col) {
    throw DataError(longitudinal_csv + ": header must contain id,time");
  }
  std::vector<int> long_cols;
  std::vector<std::string> long_names;
  for (int c = 0; c < lng.n_cols(); ++c) {
    if (c != *lid_col && c != *ltime_col) {
      long_cols.push_back(c);
      long_names.push_back(lng.header[static_cast<std::size_t>(c)]);
    }
  }
  const int q = static_cast<int>(long_cols.size());

  // group longitudinal rows by subject
  struct Visit {
    double time;
    std::vector<double> values;
    std::size_t row;
  };
  std::unordered_map<std::string, std::vector<Visit>> visits_by_id;
  std::unordered_set<std::string> known_ids;
  for (const auto& row : base.rows) known_ids.insert(row[static_cast<std::size_t>(*id_col)]);

  for (std::size_t r = 0; r < lng.rows.size(); ++r) {
    const auto& row = lng.rows[r];
    const std::string& id = row[static_cast<std::size_t>(*lid_col)];
    if (!known_ids.count(id)) {
      throw DataError(longitudinal_csv + " row " + std::to_string(r + 2) +
                      ": id '" + id + "' not present in baseline file");
    }
    const auto t = parse_double(row[static_cast<std::size_t>(*ltime_col)]);
    if (!t) {
      throw DataError(longitudinal_csv + " row " + std::to_string(r + 2) +
                      ": missing or non-numeric time");
    }
    Visit v;
    v.time = *t;
    v.row = r + 2;
    v.values.reserve(q);
    for (int c : long_cols) {
      const auto val = parse_double(row[static_cast<std::size_t>(c)]);
      v.values.push_back(val ? *val : kMissing);
    }
    visits_by_id[id].push_back(std::move(v));
  }

  LoadResult out;
  out.dataset.longitudinal_names = long_names;
  for (const auto& col : schema.columns) out.dataset.baseline_names.push_back(col.name);
  out.report.n_read = base.n_rows();

  std::unordered_set<std::string> seen_ids;
  for (std::size_t r = 0; r < base.rows.size(); ++r) {
    const auto& row = base.rows[r];
    const std::string& id = row[static_cast<std::size_t>(*id_col)];
    if (!seen_ids.insert(id).second) {
      throw DataError(baseline_csv + " row " + std::to_string(r + 2) +
                      ": duplicate subject id '" + id + "'");
    }
    SubjectRecord subj;
    subj.id = id;
    const auto et = parse_double(row[static_cast<std::size_t>(*time_col)]);
    if (!et || *et < 0.0) {
      throw DataError(baseline_csv + " row " + std::to_string(r + 2) +
                      ": missing or negative event_time");
    }
    subj.event_time = *et;
    const auto& ev = row[static_cast<std::size_t>(*event_col)];
    if (ev != "0" && ev != "1") {
      throw DataError(baseline_csv + " row " + std::to_string(r + 2) +
                      ": event_indicator must be 0 or 1");
    }
    subj.event = (ev == "1");

    // baseline covariates through the schema (one-hot for categoricals)
    bool missing_baseline = false;
    for (const auto& col : schema.columns) {
      const auto& cell = row[static_cast<std::size_t>(col.source)];
      if (cell.empty()) {
        missing_baseline = true;
        break;
      }
      if (col.level.empty()) {
        subj.baseline.push_back(*parse_double(cell));
      } else {
        subj.baseline.push_back(cell == col.level ? 1.0 : 0.0);
      }
    }
    if (missing_baseline) {
      out.report.excluded_missing_baseline.push_back(id);
      continue;
    }

    auto it = visits_by_id.find(id);
    if (it == visits_by_id.end()) {
      out.report.excluded_no_baseline_visit.push_back(id);
      continue;
    }
    auto& vs = it->second;
    std::sort(vs.begin(), vs.end(),
              [](const Visit& a, const Visit& b) { return a.time < b.time; });
    for (std::size_t i = 1; i < vs.size(); ++i) {
      if (vs[i].time == vs[i - 1].time) {
        throw DataError(longitudinal_csv + " row " + std::to_string(vs[i].row) +
                        ": duplicate (id,time) pair for subject '" + id + "'");
      }
    }
    if (vs.front().time != 0.0) {
      out.report.excluded_no_baseline_visit.push_back(id);
      continue;
    }
    bool baseline_long_missing = false;
    for (double v : vs.front().values) {
      if (is_missing(v)) {
        baseline_long_missing = true;
        break;
      }
    }
    if (baseline_long_missing) {
      out.report.excluded_missing_baseline_long.push_back(id);
      continue;
    }
    for (const auto& v : vs) {
      if (v.time >= subj.event_time) {
        throw DataError(longitudinal_csv + " row " + std::to_string(v.row) +
                        ": visit time " + format_double(v.time) +
                        " is not before event_time " +
                        format_double(subj.event_time) + " for subject '" + id +
                        "'");
      }
    }

    subj.visit_times.reserve(vs.size());
    subj.longitudinal.resize(static_cast<Eigen::Index>(vs.size()), q);
    for (std::size_t i = 0; i < vs.size(); ++i) {
      subj.visit_times.push_back(vs[i].time);
      for (int j = 0; j < q; ++j) {
        subj.longitudinal(static_cast<Eigen::Index>(i), j) = vs[i].values[static_cast<std::size_t>(j)];
      }
    }
    out.dataset.subjects.push_back(std::move(subj));
  }
  out.report.n_retained = out.dataset.n();
  return out;
}

void write_dataset(const Dataset& data, const std::string& baseline_csv,
                   const std::string& longitudinal_csv) {
  CsvTable base;
  base.header = {"id", "event_time", "event_indicator"};
  for (const auto& n : data.baseline_names) base.header.push_back(n);
  for (const auto& s : data.subjects) {
    std::vector<std::string> row{s.id, format_double(s.event_time),
                                 s.event ? "1" : "0"};
    for (double v : s.baseline) row.push_back(format_double(v));
    base.rows.push_back(std::move(row));
  }
  write_csv(baseline_csv, base);

  CsvTable lng;
  lng.header = {"id", "time"};
  for (const auto& n : data.longitudinal_names) lng.header.push_back(n);
  for (const auto& s : data.subjects) {
    for (int i = 0; i < s.n_visits(); ++i) {
      std::vector<std::string> row{s.id, format_double(s.visit_times[static_cast<std::size_t>(i)])};
      for (int j = 0; j < data.n_longitudinal(); ++j) {
        row.push_back(format_double(s.longitudinal(i, j)));
      }
      lng.rows.push_back(std::move(row));
    }
  }
  write_csv(longitudinal_csv, lng);
}

LandmarkSlice make_landmark_slice(const Dataset& data, double landmark,
                                  LandmarkMode mode) {
  if (landmark <= 0.0) throw ConfigError("landmark must be positive");
  LandmarkSlice slice;
  slice.landmark = landmark;
  slice.mode = mode;
  slice.baseline_names = data.baseline_names;
  slice.longitudinal_names = data.longitudinal_names;
  for (const auto& s : data.subjects) {
    if (s.event_time <= landmark) continue;
    if (mode == LandmarkMode::Relaxed) {
      slice.subjects.push_back(s);
      continue;
    }
    int keep = 0;
    while (keep < s.n_visits() && s.visit_times[static_cast<std::size_t>(keep)] <= landmark) ++keep;
    if (keep == 0) keep = 1;  // the baseline visit always survives truncation
    SubjectRecord trunc;
    trunc.id = s.id;
    trunc.event_time = s.event_time;
    trunc.event = s.event;
    trunc.baseline = s.baseline;
    trunc.visit_times.assign(s.visit_times.begin(), s.visit_times.begin() + keep);
    trunc.longitudinal = s.longitudinal.topRows(keep);
    slice.subjects.push_back(std::move(trunc));
  }
  if (slice.subjects.empty()) {
    throw NonEstimableError("empty risk set at landmark " + format_double(landmark));
  }
  return slice;
}

AlignResult align_to_grid(const LandmarkSlice& slice,
                          const std::vector<double>& grid, double tolerance) {
  if (grid.empty() || grid.front() != 0.0) {
    throw ConfigError("alignment grid must start at 0");
  }
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (grid[i] <= grid[i - 1]) throw ConfigError("alignment grid must be strictly increasing");
  }
  if (tolerance <= 0.0) {
    double min_gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < grid.size(); ++i) {
      min_gap = std::min(min_gap, grid[i] - grid[i - 1]);
    }
    tolerance = grid.size() > 1 ? min_gap / 2.0 : 0.0;
  }

  AlignResult out;
  out.slice.landmark = slice.landmark;
  out.slice.mode = slice.mode;
  out.slice.baseline_names = slice.baseline_names;
  out.slice.longitudinal_names = slice.longitudinal_names;

  for (const auto& s : slice.subjects) {
    // nearest grid index per visit; -1 = dropped. later visit wins collisions.
    std::map<int, int> chosen;  // grid index -> visit row
    for (int i = 0; i < s.n_visits(); ++i) {
      const double t = s.visit_times[static_cast<std::size_t>(i)];
      auto it = std::lower_bound(grid.begin(), grid.end(), t);
      int best = -1;
      double best_d = std::numeric_limits<double>::infinity();
      if (it != grid.end()) {
        best = static_cast<int>(it - grid.begin());
        best_d = std::abs(*it - t);
      }
      if (it != grid.begin()) {
        const int j = static_cast<int>(it - grid.begin()) - 1;
        const double d = std::abs(t - grid[static_cast<std::size_t>(j)]);
        if (d < best_d) {
          best = j;
          best_d = d;
        }
      }
      if (best < 0 || best_d > tolerance) {
        ++out.dropped_visits;
        continue;
      }
      auto [pos, inserted] = chosen.try_emplace(best, i);
      if (!inserted) {
        pos->second = i;  // later visit wins
        ++out.dropped_visits;
      }
    }
    SubjectRecord snapped;
    snapped.id = s.id;
    snapped.event_time = s.event_time;
    snapped.event = s.event;
    snapped.baseline = s.baseline;
    snapped.longitudinal.resize(static_cast<Eigen::Index>(chosen.size()),
                                s.longitudinal.cols());
    Eigen::Index r = 0;
    for (const auto& [gidx, vrow] : chosen) {
      snapped.visit_times.push_back(grid[static_cast<std::size_t>(gidx)]);
      snapped.longitudinal.row(r++) = s.longitudinal.row(vrow);
    }
    out.slice.subjects.push_back(std::move(snapped));
  }
  return out;
}

double sample_skewness(const std::vector<double>& values) {
  const double n = static_cast<double>(values.size());
  if (values.size() < 3) return kMissing;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double m2 = 0.0, m3 = 0.0;
  for (double v : values) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= n;
  m3 /= n;
  if (m2 <= 0.0) return 0.0;
  const double g1 = m3 / std::pow(m2, 1.5);
  return g1 * std::sqrt(n * (n - 1.0)) / (n - 2.0);
}

TransformSpec fit_transform_spec(const LandmarkSlice& slice) {
  const int q = slice.n_longitudinal();
  TransformSpec spec;
  spec.kind.assign(static_cast<std::size_t>(q), TransformKind::Identity);
  spec.log_offset.assign(static_cast<std::size_t>(q), 0.0);
  for (int j = 0; j < q; ++j) {
    std::vector<double> pooled;
    for (const auto& s : slice.subjects) {
      for (int i = 0; i < s.n_visits(); ++i) {
        const double v = s.longitudinal(i, j);
        if (!is_missing(v)) pooled.push_back(v);
      }
    }
    if (pooled.size() < 3) {
      spec.low_count_covariates.push_back(j);
      continue;
    }
    const double skew = sample_skewness(pooled);
    if (skew > 1.0) {
      spec.kind[static_cast<std::size_t>(j)] = TransformKind::Log;
      const double min_v = *std::min_element(pooled.begin(), pooled.end());
      spec.log_offset[static_cast<std::size_t>(j)] = min_v <= 0.0 ? 1.0 - min_v : 0.0;
    } else if (skew < -1.0) {
      spec.kind[static_cast<std::size_t>(j)] = TransformKind::Cubic;
    }
  }
  return spec;
}

LandmarkSlice apply_transform(const LandmarkSlice& slice, const TransformSpec& spec) {
  if (spec.size() != slice.n_longitudinal()) {
    throw ConfigError("transform spec covariate count mismatch");
  }
  LandmarkSlice out = slice;
  for (auto& s : out.subjects) {
    for (int j = 0; j < out.n_longitudinal(); ++j) {
      const auto kind = spec.kind[static_cast<std::size_t>(j)];
      if (kind == TransformKind::Identity) continue;
      for (int i = 0; i < s.n_visits(); ++i) {
        double& v = s.longitudinal(i, j);
        if (is_missing(v)) continue;
        if (kind == TransformKind::Log) {
          v = std::log(v + spec.log_offset[static_cast<std::size_t>(j)]);
        } else {
          v = v * v * v;
        }
      }
    }
  }
  return out;
}

}  // namespace dynpred
