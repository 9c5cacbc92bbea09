#include "mimnet/training_log.hpp"

#include <cstdio>

#include "mimnet/text.hpp"

namespace mimnet {

std::string format_epoch_record(const EpochRecord& r) {
  char wall[32];
  std::snprintf(wall, sizeof wall, "%.3f", r.wall_ms);
  return "stage=" + r.stage + " epoch=" + std::to_string(r.epoch) + " loss=" + format_number(r.loss) +
         " mae=" + format_number(r.mae) + " rmse=" + format_number(r.rmse) + " wall_ms=" + wall;
}

}  // namespace mimnet
