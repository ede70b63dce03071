#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace pcfuse {

/// Expands a printf-style per-frame path such as "masks/%06d.pfm".
inline std::string format_frame_path(const std::string& tmpl, int frame) {
  const int n = std::snprintf(nullptr, 0, tmpl.c_str(), frame);
  if (n < 0) throw std::invalid_argument("bad path template: " + tmpl);
  std::string out(static_cast<std::size_t>(n), '\0');
  std::snprintf(out.data(), out.size() + 1, tmpl.c_str(), frame);
  return out;
}

}  // namespace pcfuse
