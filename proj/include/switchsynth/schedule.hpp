#pragma once

#include <cstddef>
#include <vector>

namespace switchsynth {

/// One dwell interval of a time-triggered switching sequence.
struct ScheduleEntry {
  int mode = 0;
  double dwell = 0.0;  // s
};

using Schedule = std::vector<ScheduleEntry>;

/// T_end: sum of dwell times.
double schedule_end(const Schedule& schedule);

/// Absolute start time of every segment.
std::vector<double> segment_starts(const Schedule& schedule);

/// Index of the segment active at time t. Switch instants belong to the
/// segment that starts there; t ≥ T_end maps to the last segment.
std::size_t segment_at(const Schedule& schedule, double t);

}  // namespace switchsynth
