#pragma once

// Running a configured sweep and writing/reading its artifacts.
//
// A run directory holds
//   config.yaml                 materialized configuration
//   results.csv                 one row per (controller, grid point); deterministic
//   timing.csv                  planning-time statistics per row (wall clock, not reproducible)
//   episodes/pNNN.csv           one line per step of every episode
//   episodes/pNNN_summary.csv   one line per episode
//   episodes/pNNN_timing.csv    planning time per step of every episode
// Timing lives in its own files so that everything else is byte-identical between re-runs.

#include "decplan/config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace decplan {

namespace fs = std::filesystem;

class ArtifactError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentResult {
  ExperimentConfig config;
  double nominal_cost = 0.0;
  std::vector<SweepRow> rows;

  int episodes() const {
    int n = 0;
    for (const auto& r : rows) n += r.result.summary.episodes;
    return n;
  }
  int failures() const {
    int n = 0;
    for (const auto& r : rows) n += r.result.summary.failures;
    return n;
  }
};

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, int workers = 1) {
  const Scenario sc = cfg.scenario.build();
  SweepSpec spec;
  spec.scenario = &sc;
  spec.controllers = cfg.controllers;
  spec.axis = cfg.axis;
  spec.grid = cfg.grid;
  spec.epsilon = cfg.epsilon;
  spec.episodes = cfg.episodes;
  spec.seed_base = cfg.seed_base;
  ExperimentResult out;
  out.config = cfg;
  out.rows = sweep(spec, cfg.solver, workers);
  out.nominal_cost = out.rows.empty() ? 0.0 : out.rows.front().result.summary.nominal_cost;
  return out;
}

/// Fraction of episodes whose closest agent approach stayed at or above r (1 for one agent).
inline double separated_fraction(const std::vector<RolloutRecord>& records, double r) {
  if (records.empty()) return 0.0;
  int ok = 0;
  for (const auto& rec : records) ok += rec.min_distance >= r ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(records.size());
}

namespace detail {

class CsvWriter {
 public:
  explicit CsvWriter(const fs::path& path) : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw ArtifactError("cannot write '" + path.string() + "'");
  }
  CsvWriter& header(std::initializer_list<std::string_view> cols) {
    bool first = true;
    for (auto c : cols) {
      if (!first) out_ << ',';
      out_ << c;
      first = false;
    }
    out_ << '\n';
    return *this;
  }
  CsvWriter& field(std::string_view s) {
    sep();
    out_ << s;
    return *this;
  }
  CsvWriter& field(double v) { return field(format_number(v)); }
  CsvWriter& field(int v) { return field(std::string_view(std::to_string(v))); }
  CsvWriter& field(std::uint64_t v) { return field(std::string_view(std::to_string(v))); }
  CsvWriter& fields(const Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) field(v[i]);
    return *this;
  }
  void end() {
    out_ << '\n';
    open_ = false;
  }
  void close() {
    out_.close();
    if (!out_) throw ArtifactError("failed writing '" + path_.string() + "'");
  }

 private:
  void sep() {
    if (open_) out_ << ',';
    open_ = true;
  }
  std::ofstream out_;
  fs::path path_;
  bool open_ = false;
};

inline std::string point_id(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "p%03zu", i);
  return buf;
}

inline std::string sanitize(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw ArtifactError("cannot write '" + p.string() + "'");
}

}  // namespace detail

/// <output>/<name>-<config hash>
inline fs::path run_directory(const ExperimentConfig& cfg) { return fs::path(cfg.output) / (cfg.name + "-" + config_hash(cfg)); }

inline void write_episode_files(const fs::path& dir, const std::string& id, const SweepRow& row, int agents) {
  using detail::CsvWriter;
  {
    CsvWriter w(dir / (id + ".csv"));
    std::ostringstream h;
    h << "episode,seed,t";
    for (int j = 0; j < agents; ++j) h << ",x" << j << ",y" << j << ",theta" << j << ",phi" << j;
    for (int j = 0; j < agents; ++j) h << ",v" << j << ",omega" << j;
    for (int j = 0; j < agents; ++j) h << ",w_v" << j << ",w_omega" << j;
    h << ",stage_cost,replanned,nonconverged";
    w.field(h.str()).end();
    for (std::size_t e = 0; e < row.result.records.size(); ++e) {
      const auto& r = row.result.records[e];
      for (std::size_t t = 0; t < r.controls.size(); ++t) {
        w.field(static_cast<int>(e)).field(r.seed).field(static_cast<int>(t));
        w.fields(r.states[t]).fields(r.controls[t]).fields(r.noise[t]);
        w.field(r.stage_costs[t]).field(static_cast<int>(r.replanned[t])).field(static_cast<int>(r.nonconverged[t]));
        w.end();
      }
      // final state, no control
      w.field(static_cast<int>(e)).field(r.seed).field(static_cast<int>(r.controls.size()));
      w.fields(r.states.back());
      for (int k = 0; k < 4 * agents; ++k) w.field(std::string_view(""));
      w.field(r.terminal_cost).field(std::string_view("")).field(std::string_view(""));
      w.end();
    }
    w.close();
  }
  {
    CsvWriter w(dir / (id + "_summary.csv"));
    w.header({"episode", "seed", "epsilon", "cost", "terminal_cost", "nominal_cost", "first_plan_cost", "ratio", "replans",
              "solves", "solver_iterations", "nonconverged_steps", "min_distance", "failed", "failure"});
    for (std::size_t e = 0; e < row.result.records.size(); ++e) {
      const auto& r = row.result.records[e];
      int nc = 0;
      for (char f : r.nonconverged) nc += f ? 1 : 0;
      w.field(static_cast<int>(e)).field(r.seed).field(r.epsilon).field(r.cost).field(r.terminal_cost).field(r.nominal_cost);
      w.field(r.first_plan_cost).field(r.ratio).field(r.replans()).field(r.solves).field(r.solver_iterations).field(nc);
      w.field(r.min_distance).field(r.failed ? 1 : 0).field(detail::sanitize(r.failure));
      w.end();
    }
    w.close();
  }
  {
    CsvWriter w(dir / (id + "_timing.csv"));
    w.header({"episode", "t", "plan_time"});
    for (std::size_t e = 0; e < row.result.records.size(); ++e) {
      const auto& r = row.result.records[e];
      for (std::size_t t = 0; t < r.plan_time.size(); ++t) w.field(static_cast<int>(e)).field(static_cast<int>(t)).field(r.plan_time[t]).end();
    }
    w.close();
  }
}

/// Writes all artifacts into `dir` (created; must not exist unless `overwrite`).
inline void write_results(const fs::path& dir, const ExperimentResult& res, bool overwrite = false) {
  using detail::CsvWriter;
  if (fs::exists(dir)) {
    if (!overwrite) throw ArtifactError("output directory '" + dir.string() + "' already exists (use --overwrite)");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
  const auto& cfg = res.config;
  detail::write_text(dir / "config.yaml", save_config(cfg));
  const double r_thresh = cfg.scenario.params.collision.r_thresh;
  const int agents = static_cast<int>(cfg.scenario.agents.size());

  CsvWriter w(dir / "results.csv");
  w.header({"point", "controller", "label", "kind", "control_horizon", "threshold", "trigger", "axis", "value", "epsilon",
            "episodes", "failures", "failure_rate", "nominal_cost", "mean_ratio", "var_ratio", "mean_cost", "var_cost",
            "mean_replans", "sd_replans", "nonconvergence_rate", "mean_solver_iterations", "separated_fraction"});
  CsvWriter tw(dir / "timing.csv");
  tw.header({"point", "label", "value", "epsilon", "mean_plan_time", "total_plan_time"});
  if (cfg.write_episodes) fs::create_directories(dir / "episodes");
  for (std::size_t i = 0; i < res.rows.size(); ++i) {
    const auto& row = res.rows[i];
    const auto& s = row.result.summary;
    const auto& c = row.controller;
    const std::string id = detail::point_id(i);
    double iters = 0.0;
    for (const auto& r : row.result.records) iters += r.solver_iterations;
    iters /= std::max<std::size_t>(1, row.result.records.size());
    w.field(id).field(static_cast<int>(row.controller_index)).field(c.label()).field(to_string(c.kind));
    w.field(c.control_horizon).field(c.threshold).field(to_string(c.trigger)).field(to_string(cfg.axis));
    w.field(row.value).field(row.epsilon).field(s.episodes).field(s.failures).field(s.failure_rate).field(s.nominal_cost);
    w.field(s.mean_ratio).field(s.var_ratio).field(s.mean_cost).field(s.var_cost).field(s.mean_replans).field(s.sd_replans);
    w.field(s.nonconvergence_rate).field(iters).field(separated_fraction(row.result.records, r_thresh));
    w.end();
    tw.field(id).field(c.label()).field(row.value).field(row.epsilon).field(s.mean_plan_time).field(s.total_plan_time).end();
    if (cfg.write_episodes) write_episode_files(dir / "episodes", id, row, agents);
  }
  w.close();
  tw.close();
}

// --- reading back -------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw ArtifactError("missing column '" + name + "'");
  }
  double number(std::size_t row, const std::string& name) const {
    const std::string& s = rows[row][column(name)];
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw ArtifactError("bad number '" + s + "' in column " + name);
    return v;
  }
  const std::string& text(std::size_t row, const std::string& name) const { return rows[row][column(name)]; }
};

inline CsvTable read_csv(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ArtifactError("missing input file '" + p.string() + "'");
  CsvTable t;
  std::string line;
  const auto split = [](const std::string& l) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : l) {
      if (c == ',') {
        out.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    out.push_back(cur);
    return out;
  };
  if (!std::getline(in, line)) throw ArtifactError("empty file '" + p.string() + "'");
  t.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    t.rows.push_back(split(line));
    if (t.rows.back().size() != t.header.size()) throw ArtifactError("ragged row in '" + p.string() + "'");
  }
  return t;
}

/// Writes the plot-ready series files into <dir>/report and returns their paths. Statistics are
/// recomputed from the per-episode files when they exist.
inline std::vector<fs::path> write_report(const fs::path& dir) {
  using detail::CsvWriter;
  if (!fs::is_directory(dir)) throw ArtifactError("results directory '" + dir.string() + "' does not exist");
  if (!fs::exists(dir / "results.csv")) throw ArtifactError("no results.csv in '" + dir.string() + "'");
  const CsvTable results = read_csv(dir / "results.csv");
  const CsvTable timing = read_csv(dir / "timing.csv");
  if (results.rows.empty()) throw ArtifactError("results.csv in '" + dir.string() + "' has no rows");
  const std::string axis = results.text(0, "axis");
  const bool have_episodes = fs::is_directory(dir / "episodes");

  const fs::path out = dir / "report";
  fs::create_directories(out);
  std::vector<fs::path> files{out / ("cost_vs_" + axis + ".csv"), out / ("replans_vs_" + axis + ".csv"),
                              out / "time_vs_step.csv", out / "cost_time_grid.csv"};
  CsvWriter cost(files[0]), replans(files[1]), steps(files[2]), grid(files[3]);
  cost.header({"label", "kind", "control_horizon", "threshold", "epsilon", "episodes", "mean_ratio", "var_ratio", "se_ratio"});
  replans.header({"label", "kind", "control_horizon", "threshold", "epsilon", "mean_replans", "sd_replans"});
  steps.header({"label", "kind", "control_horizon", "threshold", "epsilon", "t", "mean_plan_time"});
  grid.header({"label", "kind", "control_horizon", "threshold", "epsilon", "mean_ratio", "mean_total_plan_time"});

  for (std::size_t i = 0; i < results.rows.size(); ++i) {
    const std::string id = results.text(i, "point");
    const std::string& label = results.text(i, "label");
    const double eps = results.number(i, "epsilon");
    double mean_ratio = results.number(i, "mean_ratio"), var_ratio = results.number(i, "var_ratio");
    double mean_rep = results.number(i, "mean_replans"), sd_rep = results.number(i, "sd_replans");
    int n = static_cast<int>(results.number(i, "episodes"));
    std::vector<double> per_step;
    double total_time = timing.number(i, "total_plan_time") / std::max(1, n);

    if (have_episodes) {
      const CsvTable ep = read_csv(dir / "episodes" / (id + "_summary.csv"));
      std::vector<RolloutRecord> recs(ep.rows.size());
      for (std::size_t k = 0; k < ep.rows.size(); ++k) {
        recs[k].ratio = ep.number(k, "ratio");
        recs[k].cost = ep.number(k, "cost");
        recs[k].failed = ep.number(k, "failed") != 0.0;
        recs[k].replan_steps.assign(static_cast<std::size_t>(ep.number(k, "replans")), 0);
      }
      const CsvTable tt = read_csv(dir / "episodes" / (id + "_timing.csv"));
      for (std::size_t k = 0; k < tt.rows.size(); ++k)
        recs[static_cast<std::size_t>(tt.number(k, "episode"))].plan_time.push_back(tt.number(k, "plan_time"));
      const MonteCarloSummary s = summarize(recs);
      mean_ratio = s.mean_ratio;
      var_ratio = s.var_ratio;
      mean_rep = s.mean_replans;
      sd_rep = s.sd_replans;
      n = s.episodes;
      total_time = s.total_plan_time / std::max(1, n);
      per_step = timing_profile(recs).mean_per_step;
    }
    const int ok = n - static_cast<int>(results.number(i, "failures"));
    const auto key = [&](detail::CsvWriter& w) -> detail::CsvWriter& {
      return w.field(label).field(results.text(i, "kind")).field(results.text(i, "control_horizon"))
          .field(results.text(i, "threshold")).field(eps);
    };
    key(cost).field(n).field(mean_ratio).field(var_ratio);
    cost.field(ok > 0 ? std::sqrt(var_ratio / ok) : std::numeric_limits<double>::quiet_NaN()).end();
    key(replans).field(mean_rep).field(sd_rep).end();
    for (std::size_t t = 0; t < per_step.size(); ++t) key(steps).field(static_cast<int>(t)).field(per_step[t]).end();
    key(grid).field(mean_ratio).field(total_time).end();
  }
  cost.close();
  replans.close();
  steps.close();
  grid.close();
  return files;
}

}  // namespace decplan
