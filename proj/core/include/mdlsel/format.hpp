#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mdlsel {

/// Shortest decimal text that parses back to the same double.
std::string fmt_real(double v);
std::vector<std::string> split_csv(std::string_view line);

/// Canonical 64-bit FNV-1a digest in hex.
std::string digest_hex(std::string_view text);

}  // namespace mdlsel
