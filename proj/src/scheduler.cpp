#include "seqft/scheduler.hpp"

#include "seqft/errors.hpp"

namespace seqft {

std::string to_string(FineTuneMode mode) {
  switch (mode) {
    case FineTuneMode::FT_ALL: return "ft_all";
    case FineTuneMode::FT_FC: return "ft_fc";
    case FineTuneMode::SFT: return "sft";
  }
  throw ContractError("unknown fine-tune mode");
}

FineTuneMode mode_from_string(const std::string& token) {
  if (token == "ft_all") return FineTuneMode::FT_ALL;
  if (token == "ft_fc") return FineTuneMode::FT_FC;
  if (token == "sft") return FineTuneMode::SFT;
  throw ConfigError("unknown fine-tune mode '" + token + "' (expected ft_all, ft_fc or sft)");
}

void validate_schedule(const SftSchedule& schedule) {
  if (schedule.n < 1) throw ConfigError("schedule needs n >= 1 epochs");
  if (schedule.x < 1) throw ConfigError("schedule needs x >= 1 epochs per step");
  if (schedule.s < 1) throw ConfigError("schedule needs s >= 1 groups per step");
  if (schedule.m < 1) throw ConfigError("schedule needs m >= 1 layer groups");
}

int step_count(const SftSchedule& schedule) {
  validate_schedule(schedule);
  if (schedule.mode != FineTuneMode::SFT) return 1;
  return static_cast<int>((schedule.m - 2 + schedule.s) / schedule.s) + 1;
}

bool truncated(const SftSchedule& schedule) {
  if (schedule.mode != FineTuneMode::SFT) return false;
  // The final step starts at epoch x*(step_count-1); it must start before n.
  return schedule.n <= schedule.x * (step_count(schedule) - 1);
}

std::set<int> trainable_groups_at_epoch(const SftSchedule& schedule, int epoch) {
  validate_schedule(schedule);
  if (epoch < 0 || epoch >= schedule.n) {
    throw ContractError("epoch " + std::to_string(epoch) + " outside schedule of " +
                        std::to_string(schedule.n) + " epochs");
  }
  std::set<int> trainable;
  int low = schedule.m - 1;
  switch (schedule.mode) {
    case FineTuneMode::FT_ALL: low = 0; break;
    case FineTuneMode::FT_FC: low = schedule.m - 1; break;
    case FineTuneMode::SFT: {
      const int k = epoch / schedule.x;
      const long long unfrozen = static_cast<long long>(k) * schedule.s;
      low = unfrozen >= schedule.m - 1 ? 0 : schedule.m - 1 - static_cast<int>(unfrozen);
      break;
    }
  }
  for (int g = low; g < schedule.m; ++g) trainable.insert(g);
  return trainable;
}

FreezeState freeze_state_at_epoch(const SftSchedule& schedule, int epoch) {
  return FreezeState{epoch, trainable_groups_at_epoch(schedule, epoch)};
}

void apply_freeze_state(Network& network, const FreezeState& state) {
  const int m = static_cast<int>(network.groups.size());
  for (int g : state.trainable) {
    if (g < 0 || g >= m) {
      throw ContractError("freeze state names group " + std::to_string(g) + " but the network has " +
                          std::to_string(m) + " groups");
    }
  }
  for (LayerGroup& group : network.groups) {
    const bool train = state.trainable.count(group.index) > 0;
    for (Tensor& p : group.parameters) {
      p.set_requires_grad(train);
      if (!train) p.drop_grad();
    }
  }
}

std::vector<SchedulePhase> schedule_summary(const SftSchedule& schedule) {
  validate_schedule(schedule);
  std::vector<SchedulePhase> phases;
  for (int epoch = 0; epoch < schedule.n; ++epoch) {
    std::set<int> trainable = trainable_groups_at_epoch(schedule, epoch);
    if (!phases.empty() && phases.back().trainable == trainable) {
      phases.back().last_epoch = epoch;
    } else {
      phases.push_back({epoch, epoch, std::move(trainable)});
    }
  }
  return phases;
}

std::vector<std::string> schedule_summary_text(const SftSchedule& schedule) {
  std::vector<std::string> lines;
  for (const SchedulePhase& phase : schedule_summary(schedule)) {
    lines.push_back("epochs " + std::to_string(phase.first_epoch) + ".." +
                    std::to_string(phase.last_epoch) + ": " +
                    std::to_string(phase.trainable.size()) + " of " + std::to_string(schedule.m) +
                    " groups (" + std::to_string(*phase.trainable.begin()) + ".." +
                    std::to_string(*phase.trainable.rbegin()) + ")");
  }
  return lines;
}

std::vector<std::string> schedule_warnings(const SftSchedule& schedule) {
  std::vector<std::string> warnings;
  if (truncated(schedule)) {
    const int needed = schedule.x * (step_count(schedule) - 1) + 1;
    warnings.push_back("schedule ends before the whole network unfreezes: needs at least " +
                       std::to_string(needed) + " epochs, has " + std::to_string(schedule.n));
  }
  return warnings;
}

}  // namespace seqft
