#pragma once

#include <string>

#include "distral/policy_grad.hpp"
#include "distral/table.hpp"
#include "distral/tabular.hpp"

namespace distral {

// JSON round trips for the state-indexed tables exchanged with other tools.

std::string table_to_json(const Table& t);
Table table_from_json(const std::string& text);

std::string policy_to_json(const TabularPolicy& p);
TabularPolicy policy_from_json(const std::string& text);

std::string counts_to_json(const VisitationCounts& c);
VisitationCounts counts_from_json(const std::string& text);

std::string joint_params_to_json(const JointParams& p);
JointParams joint_params_from_json(const std::string& text);

}  // namespace distral
