#include <stdexcept>

#include "distral/orchestrator.hpp"
#include "json.hpp"

namespace distral {

namespace {
using nlohmann::json;

StalenessMode mode_from_string(const std::string& s) {
  if (s == "serialized") return StalenessMode::serialized;
  if (s == "lock_free") return StalenessMode::lock_free;
  throw std::invalid_argument("plan: workers.mode must be 'serialized' or 'lock_free'");
}
}  // namespace

ExperimentPlan plan_from_json(const std::string& text) {
  json j = json::parse(text);
  ExperimentPlan plan;
  plan.name = j.value("name", plan.name);

  if (j.contains("tasks")) {
    const auto& t = j.at("tasks");
    plan.n_tasks = t.value("n_tasks", plan.n_tasks);
    plan.task_params.room_w = t.value("room_width", plan.task_params.room_w);
    plan.task_params.room_h = t.value("room_height", plan.task_params.room_h);
    plan.task_params.corridor_len = t.value("corridor_length", plan.task_params.corridor_len);
    plan.task_params.discount = t.value("discount", plan.task_params.discount);
    plan.task_params.max_episode_steps = t.value("max_episode_steps", plan.task_params.max_episode_steps);
    plan.task_seed_base = t.value("seed_base", plan.task_seed_base);
    plan.distinct_goals = t.value("distinct_goals", plan.distinct_goals);
  }

  if (!j.contains("algorithms") || !j.at("algorithms").is_array() || j.at("algorithms").empty())
    throw std::invalid_argument("plan: 'algorithms' must be a non-empty array");
  plan.kl_ent_alpha = j.value("kl_ent_alpha", plan.kl_ent_alpha);
  for (const auto& a : j.at("algorithms")) {
    AlgorithmEntry entry;
    std::string name_str;
    if (a.is_string()) {
      name_str = a.get<std::string>();
    } else {
      name_str = a.at("name").get<std::string>();
      entry.label = a.value("label", std::string());
      entry.distill = a.value("distill", true);
    }
    auto name = algorithm_from_string(name_str);
    if (!name) throw std::invalid_argument("plan: unknown algorithm '" + name_str + "'");
    entry.spec = make_algorithm_spec(*name, /*beta=*/5.0, plan.kl_ent_alpha);
    if (entry.label.empty()) entry.label = name_str;
    plan.algorithms.push_back(std::move(entry));
  }

  if (!j.contains("hyper_grid") || j.at("hyper_grid").empty())
    throw std::invalid_argument("plan: 'hyper_grid' must be a non-empty array");
  for (const auto& h : j.at("hyper_grid")) {
    HyperSetting s;
    s.entropy_cost = h.at("entropy_cost").get<double>();
    s.step_size = h.at("step_size").get<double>();
    if (!(s.entropy_cost > 0.0)) throw std::invalid_argument("plan: entropy_cost must be positive");
    if (!(s.step_size > 0.0)) throw std::invalid_argument("plan: step_size must be positive");
    plan.hyper_grid.push_back(s);
  }

  if (!j.contains("seeds") || j.at("seeds").empty())
    throw std::invalid_argument("plan: 'seeds' must be a non-empty array");
  for (const auto& s : j.at("seeds")) plan.seeds.push_back(s.get<uint64_t>());

  plan.budget_steps_per_task = j.value("budget_steps_per_task", plan.budget_steps_per_task);
  if (plan.budget_steps_per_task <= 0) throw std::invalid_argument("plan: budget_steps_per_task must be positive");

  if (j.contains("eval")) {
    plan.eval_every = j.at("eval").value("every", plan.eval_every);
    plan.eval_episodes = j.at("eval").value("episodes", plan.eval_episodes);
  }
  if (j.contains("workers")) {
    const auto& w = j.at("workers");
    plan.workers.workers_per_task = w.value("per_task", plan.workers.workers_per_task);
    plan.workers.batch_len = w.value("batch_len", plan.workers.batch_len);
    if (w.contains("mode")) plan.workers.staleness_mode = mode_from_string(w.at("mode").get<std::string>());
    if (plan.workers.workers_per_task < 1) throw std::invalid_argument("plan: workers.per_task must be >= 1");
  }
  if (j.contains("alternating")) {
    const auto& alt = j.at("alternating");
    plan.rollout_len = alt.value("rollout_len", plan.rollout_len);
    plan.rollouts_per_distill = alt.value("rollouts_per_distill", plan.rollouts_per_distill);
    plan.pseudocount = alt.value("pseudocount", plan.pseudocount);
  }
  plan.value_l2_coeff = j.value("value_l2_coeff", plan.value_l2_coeff);
  plan.normalize_scores = j.value("normalize_scores", plan.normalize_scores);
  plan.final_window_frac = j.value("final_window_frac", plan.final_window_frac);
  return plan;
}

std::string plan_to_json(const ExperimentPlan& plan) {
  json j;
  j["name"] = plan.name;
  j["tasks"] = {{"n_tasks", plan.n_tasks},
                {"room_width", plan.task_params.room_w},
                {"room_height", plan.task_params.room_h},
                {"corridor_length", plan.task_params.corridor_len},
                {"discount", plan.task_params.discount},
                {"max_episode_steps", plan.task_params.max_episode_steps},
                {"seed_base", plan.task_seed_base},
                {"distinct_goals", plan.distinct_goals}};
  j["algorithms"] = json::array();
  for (const auto& a : plan.algorithms)
    j["algorithms"].push_back(
        {{"name", to_string(a.spec.name)}, {"label", a.label}, {"distill", a.distill}});
  j["hyper_grid"] = json::array();
  for (const auto& h : plan.hyper_grid)
    j["hyper_grid"].push_back({{"entropy_cost", h.entropy_cost}, {"step_size", h.step_size}});
  j["seeds"] = plan.seeds;
  j["budget_steps_per_task"] = plan.budget_steps_per_task;
  j["eval"] = {{"every", plan.eval_every}, {"episodes", plan.eval_episodes}};
  j["workers"] = {{"per_task", plan.workers.workers_per_task},
                  {"batch_len", plan.workers.batch_len},
                  {"mode", plan.workers.staleness_mode == StalenessMode::serialized ? "serialized" : "lock_free"}};
  j["alternating"] = {{"rollout_len", plan.rollout_len},
                      {"rollouts_per_distill", plan.rollouts_per_distill},
                      {"pseudocount", plan.pseudocount}};
  j["kl_ent_alpha"] = plan.kl_ent_alpha;
  j["value_l2_coeff"] = plan.value_l2_coeff;
  j["normalize_scores"] = plan.normalize_scores;
  j["final_window_frac"] = plan.final_window_frac;
  return j.dump(2);
}

}  // namespace distral
