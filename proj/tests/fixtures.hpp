#pragma once

#include <string>

#include "cdq/rm_core.hpp"

namespace fixtures {

inline std::string data_path(const std::string& rel) { return std::string(CDQ_DATA_DIR) + "/" + rel; }

inline cdq::RewardMachine load_rm(const std::string& rel) {
  return cdq::parse_reward_machine(cdq::read_file(data_path(rel)));
}

inline cdq::EventSeq seq(const char* s) { return cdq::parse_events(s); }

}  // namespace fixtures

#include "cdq/envs.hpp"

namespace fixtures {

inline cdq::TaskSpec load_task(const std::string& rel) { return cdq::load_task(data_path(rel)); }

// Free-cell index of the tagged cell for agent i.
inline int tagged(const cdq::TeamEnv& env, int agent, const std::string& tag) {
  return env.agent(agent).state_of(*env.grid().find_tag(tag)).value();
}

inline int at(const cdq::TeamEnv& env, int agent, int x, int y) {
  return env.agent(agent).state_of(env.grid().cell(x, y)).value();
}

}  // namespace fixtures
