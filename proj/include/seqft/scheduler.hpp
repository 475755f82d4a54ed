#pragma once

#include <set>
#include <string>
#include <vector>

#include "seqft/model.hpp"

namespace seqft {

enum class FineTuneMode {
  FT_ALL,  // every group trains from epoch 0
  FT_FC,   // only the head group ever trains
  SFT,     // head first, then s more groups every x epochs
};

std::string to_string(FineTuneMode mode);
FineTuneMode mode_from_string(const std::string& token);

/// Unfreezing timetable. Epochs are 0-based and run over [0, n).
struct SftSchedule {
  int n = 1;  // total training epochs
  int x = 1;  // epochs per sequential step
  int s = 1;  // groups unfrozen per step
  int m = 1;  // total layer groups in the network
  FineTuneMode mode = FineTuneMode::SFT;
};

void validate_schedule(const SftSchedule& schedule);

/// Number of distinct trainable sets an SFT run can reach: the head-only
/// step plus ceil((m-1)/s) unfreeze steps. 1 for the other modes.
int step_count(const SftSchedule& schedule);

/// True when n is too small for SFT to reach the fully unfrozen network.
bool truncated(const SftSchedule& schedule);

struct FreezeState {
  int epoch = 0;
  std::set<int> trainable;
};

/// Set of group indices that train during `epoch`.
///
/// SFT: with k = floor(epoch / x), the set is {max(0, m-1-k*s) .. m-1};
/// it grows toward the input and never re-freezes a group.
std::set<int> trainable_groups_at_epoch(const SftSchedule& schedule, int epoch);

FreezeState freeze_state_at_epoch(const SftSchedule& schedule, int epoch);

/// Sets requires_grad true exactly for parameters in the state's trainable
/// groups, false (and no gradient buffer) for everything else. Applying a
/// state overwrites whatever state was applied before.
void apply_freeze_state(Network& network, const FreezeState& state);

/// Maximal run of epochs sharing one trainable set.
struct SchedulePhase {
  int first_epoch = 0;
  int last_epoch = 0;  // inclusive
  std::set<int> trainable;
};

std::vector<SchedulePhase> schedule_summary(const SftSchedule& schedule);

/// One line per phase, e.g. "epochs 5..9: 2 of 7 groups (5..6)".
std::vector<std::string> schedule_summary_text(const SftSchedule& schedule);

/// Non-fatal oddities worth surfacing, currently just truncation.
std::vector<std::string> schedule_warnings(const SftSchedule& schedule);

}  // namespace seqft
