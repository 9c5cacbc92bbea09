#include "mimnet/text.hpp"

#include <charconv>

namespace mimnet {

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace mimnet
