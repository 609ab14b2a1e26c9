#pragma once

namespace lbsf {

inline constexpr const char* kToolVersion = "0.1.0";

} // namespace lbsf
