#include "distral/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

namespace distral {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) {
  if (s == "nan" || s == "-nan") return std::numeric_limits<double>::quiet_NaN();
  return std::stod(s);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

}  // namespace

double compute_auc(std::span<const CurvePoint> curve) {
  if (curve.size() < 2) throw std::invalid_argument("compute_auc: need at least two points");
  double area = 0.0;
  for (size_t i = 1; i < curve.size(); ++i) {
    double dx = static_cast<double>(curve[i].env_steps - curve[i - 1].env_steps);
    if (dx <= 0.0) throw std::invalid_argument("compute_auc: env_steps must be strictly increasing");
    area += 0.5 * (curve[i].mean_return + curve[i - 1].mean_return) * dx;
  }
  double span = static_cast<double>(curve.back().env_steps - curve.front().env_steps);
  return area / span;
}

std::vector<CurvePoint> task_eval_curve(const TaskCurve& task) {
  std::vector<CurvePoint> out;
  for (const auto& pt : task.points) out.push_back({pt.env_steps, pt.eval_return, 0.0});
  return out;
}

std::vector<CurvePoint> aggregate_run_curve(const RunRecord& record) {
  std::map<long long, std::vector<double>> pooled;
  for (const auto& task : record.tasks)
    for (const auto& pt : task.points)
      if (std::isfinite(pt.eval_return)) pooled[pt.env_steps].push_back(pt.eval_return);
  std::vector<CurvePoint> out;
  for (const auto& [steps, vals] : pooled) {
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    out.push_back({steps, mean, vals.size() > 1 ? std::sqrt(var / static_cast<double>(vals.size())) : 0.0});
  }
  return out;
}

double run_auc(const RunRecord& record) {
  double sum = 0.0;
  int n = 0;
  for (const auto& task : record.tasks) {
    auto curve = task_eval_curve(task);
    if (curve.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    sum += compute_auc(curve);
    ++n;
  }
  return n > 0 ? sum / n : std::numeric_limits<double>::quiet_NaN();
}

double run_final_score(const RunRecord& record, double window_frac) {
  double sum = 0.0;
  int n = 0;
  for (const auto& task : record.tasks) {
    if (task.points.empty()) return std::numeric_limits<double>::quiet_NaN();
    long long last = task.points.back().env_steps;
    long long cutoff = last - static_cast<long long>(window_frac * static_cast<double>(last));
    double s = 0.0;
    int c = 0;
    for (const auto& pt : task.points)
      if (pt.env_steps >= cutoff && std::isfinite(pt.eval_return)) {
        s += pt.eval_return;
        ++c;
      }
    if (c == 0) return std::numeric_limits<double>::quiet_NaN();
    sum += s / c;
    ++n;
  }
  return n > 0 ? sum / n : std::numeric_limits<double>::quiet_NaN();
}

RobustnessTable build_robustness(std::span<const RunRecord> records, double window_frac) {
  RobustnessTable table;
  for (const auto& r : records) {
    if (!r.complete) continue;
    table.scores[r.algo].push_back(run_final_score(r, window_frac));
  }
  for (auto& [algo, scores] : table.scores)
    std::sort(scores.begin(), scores.end(), [](double a, double b) {
      if (std::isnan(b)) return true;
      if (std::isnan(a)) return false;
      return a > b;
    });
  return table;
}

std::vector<CorridorProb> corridor_policy_probs(const TabularPolicy& pi0, const GridTask& task) {
  GridStateCodec codec(task.layout);
  if (pi0.probs.rows() != codec.n_states())
    throw std::invalid_argument("corridor_policy_probs: policy shape does not match the task's state space");
  std::vector<CorridorProb> out;
  for (const Cell& cell : task.layout.corridor_cells)
    for (int pa : {static_cast<int>(kLeft), static_cast<int>(kRight)}) {
      GridState s;
      s.position = cell;
      s.prev_action = pa;
      s.prev_reward = kPrevStep;
      int idx = codec.encode(s);
      for (int a = 0; a < kGridActions; ++a) out.push_back({cell, pa, a, pi0.probs(idx, a)});
    }
  return out;
}

std::string render_corridor_policy(const TabularPolicy& pi0, const GridTask& task) {
  auto rows = corridor_policy_probs(pi0, task);
  static const char* glyphs[kGridActions] = {"o", "^", "v", "<", ">"};
  std::ostringstream os;
  os << "distilled policy in the corridor (previous reward = step penalty)\n";
  for (int pa : {static_cast<int>(kLeft), static_cast<int>(kRight)}) {
    os << "prev action " << (pa == kLeft ? "left" : "right") << ":\n";
    for (const Cell& cell : task.layout.corridor_cells) {
      os << "  (" << cell.x << "," << cell.y << ")";
      for (int a = 0; a < kGridActions; ++a) {
        double p = 0.0;
        for (const auto& r : rows)
          if (r.cell == cell && r.prev_action == pa && r.action == a) p = r.prob;
        int bucket = static_cast<int>(std::lround(p * 5.0));
        if (bucket <= 0) continue;
        os << ' ';
        for (int k = 0; k < bucket; ++k) os << glyphs[a];
      }
      os << '\n';
    }
  }
  return os.str();
}

namespace {
const char* kCurveHeader = "algo,task_id,hyper_id,seed,env_steps,train_return,eval_return,distilled_eval_return";
}

void write_curves_csv(const std::string& path, std::span<const RunRecord> records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_curves_csv: cannot open " + path);
  out << kCurveHeader << "\n";
  for (const auto& r : records)
    for (const auto& task : r.tasks)
      for (const auto& pt : task.points)
        out << r.algo << ',' << task.task_id << ',' << r.hyper_id << ',' << r.seed << ',' << pt.env_steps << ','
            << fmt_double(pt.train_return) << ',' << fmt_double(pt.eval_return) << ','
            << fmt_double(pt.distilled_eval_return) << "\n";
}

void write_run_csv(const std::string& path, const RunRecord& record) {
  write_curves_csv(path, {&record, 1});
}

void write_robustness_csv(const std::string& path, const RobustnessTable& table) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_robustness_csv: cannot open " + path);
  out << "algo,rank,final_score\n";
  for (const auto& [algo, scores] : table.scores)
    for (size_t i = 0; i < scores.size(); ++i)
      out << algo << ',' << i << ',' << fmt_double(scores[i]) << "\n";
}

void write_corridor_csv(const std::string& path, std::span<const CorridorProb> rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_corridor_csv: cannot open " + path);
  out << "cell_x,cell_y,prev_action,action,probability\n";
  for (const auto& r : rows)
    out << r.cell.x << ',' << r.cell.y << ',' << r.prev_action << ',' << r.action << ',' << fmt_double(r.prob)
        << "\n";
}

std::vector<RunRecord> load_curves_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_curves_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != kCurveHeader)
    throw std::runtime_error("load_curves_csv: unexpected header");

  std::vector<RunRecord> records;
  auto find_record = [&](const std::string& algo, int hyper_id, uint64_t seed) -> RunRecord& {
    for (auto& r : records)
      if (r.algo == algo && r.hyper_id == hyper_id && r.seed == seed) return r;
    RunRecord r;
    r.algo = algo;
    r.hyper_id = hyper_id;
    r.seed = seed;
    records.push_back(std::move(r));
    return records.back();
  };

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 8) throw std::runtime_error("load_curves_csv: malformed row");
    RunRecord& r = find_record(f[0], std::stoi(f[2]), std::stoull(f[3]));
    int task_id = std::stoi(f[1]);
    while (static_cast<int>(r.tasks.size()) <= task_id) {
      TaskCurve tc;
      tc.task_id = static_cast<int>(r.tasks.size());
      r.tasks.push_back(tc);
    }
    EvalPoint pt;
    pt.env_steps = std::stoll(f[4]);
    pt.train_return = parse_double(f[5]);
    pt.eval_return = parse_double(f[6]);
    pt.distilled_eval_return = parse_double(f[7]);
    r.tasks[task_id].points.push_back(pt);
  }
  return records;
}

}  // namespace distral
