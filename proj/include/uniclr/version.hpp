#ifndef UNICLR_VERSION_HPP
#define UNICLR_VERSION_HPP

namespace uniclr {

inline constexpr const char* kToolName = "uniclr";
inline constexpr const char* kToolVersion = "1.0.0";

}  // namespace uniclr

#endif
