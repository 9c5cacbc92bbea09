#pragma once

#include <cstddef>
#include <functional>
#include <string>

namespace mimnet {

/// One training epoch; loss/MAE/RMSE are measured on each batch before its update.
struct EpochRecord {
  std::string stage;
  std::size_t epoch = 0;
  double loss = 0.0;
  double mae = 0.0;
  double rmse = 0.0;
  double wall_ms = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// `stage=<s> epoch=<n> loss=<v> mae=<v> rmse=<v> wall_ms=<v>`
std::string format_epoch_record(const EpochRecord& record);

}  // namespace mimnet
