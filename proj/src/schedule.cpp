#include "switchsynth/schedule.hpp"

#include "switchsynth/core.hpp"

namespace switchsynth {

double schedule_end(const Schedule& schedule) {
  double t = 0.0;
  for (const auto& e : schedule) t += e.dwell;
  return t;
}

std::vector<double> segment_starts(const Schedule& schedule) {
  std::vector<double> starts;
  starts.reserve(schedule.size());
  double t = 0.0;
  for (const auto& e : schedule) {
    starts.push_back(t);
    t += e.dwell;
  }
  return starts;
}

std::size_t segment_at(const Schedule& schedule, double t) {
  if (schedule.empty()) throw Error(ErrorCode::InvalidArgument, "empty schedule");
  double end = 0.0;
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    end += schedule[i].dwell;
    if (t < end - tol::kTime) return i;
  }
  return schedule.size() - 1;
}

}  // namespace switchsynth
