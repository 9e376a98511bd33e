#include "distral/serialize.hpp"

#include <stdexcept>

#include "json.hpp"

namespace distral {

namespace {
using nlohmann::json;

json table_json(const Table& t) {
  json rows = json::array();
  for (int s = 0; s < t.rows(); ++s) {
    json row = json::array();
    for (int a = 0; a < t.cols(); ++a) row.push_back(t(s, a));
    rows.push_back(std::move(row));
  }
  return {{"n_states", t.rows()}, {"n_actions", t.cols()}, {"rows", std::move(rows)}};
}

Table table_from(const json& j) {
  int S = j.at("n_states").get<int>();
  int A = j.at("n_actions").get<int>();
  Table t(S, A);
  const auto& rows = j.at("rows");
  if (static_cast<int>(rows.size()) != S) throw std::invalid_argument("table json: row count mismatch");
  for (int s = 0; s < S; ++s) {
    if (static_cast<int>(rows[s].size()) != A) throw std::invalid_argument("table json: column count mismatch");
    for (int a = 0; a < A; ++a) t(s, a) = rows[s][a].get<double>();
  }
  return t;
}
}  // namespace

std::string table_to_json(const Table& t) { return table_json(t).dump(); }

Table table_from_json(const std::string& text) { return table_from(json::parse(text)); }

std::string policy_to_json(const TabularPolicy& p) {
  json j = table_json(p.probs);
  j["kind"] = "policy";
  return j.dump();
}

TabularPolicy policy_from_json(const std::string& text) {
  TabularPolicy p;
  p.probs = table_from(json::parse(text));
  p.validate(1e-6);
  return p;
}

std::string counts_to_json(const VisitationCounts& c) {
  json j = table_json(c.counts);
  j["kind"] = "visitation_counts";
  return j.dump();
}

VisitationCounts counts_from_json(const std::string& text) {
  VisitationCounts c;
  c.counts = table_from(json::parse(text));
  for (double v : c.counts.data())
    if (!(v >= 0.0)) throw std::invalid_argument("counts json: negative count");
  return c;
}

std::string joint_params_to_json(const JointParams& p) {
  json j;
  j["h"] = table_json(p.h);
  j["f"] = json::array();
  for (const auto& f : p.f) j["f"].push_back(table_json(f));
  j["v"] = json::array();
  for (const auto& v : p.v) j["v"].push_back(v);
  return j.dump();
}

JointParams joint_params_from_json(const std::string& text) {
  json j = json::parse(text);
  JointParams p;
  p.h = table_from(j.at("h"));
  for (const auto& f : j.at("f")) p.f.push_back(table_from(f));
  for (const auto& v : j.at("v")) p.v.push_back(v.get<ValueTable>());
  return p;
}

}  // namespace distral
