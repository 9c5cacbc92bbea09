#pragma once

#include <string>

namespace mimnet {

/// Shortest decimal text that parses back to exactly `v`.
std::string format_number(double v);

}  // namespace mimnet
