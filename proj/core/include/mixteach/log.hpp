#pragma once

#include <string_view>

namespace mixteach::log {

enum class Level { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3, kOff = 4 };

// Lines below this level are dropped. Defaults to kInfo.
void SetLevel(Level level);
Level GetLevel();

// Writes "<level>: <message>\n" to stderr as a single write.
void Write(Level level, std::string_view message);

inline void Debug(std::string_view m) { Write(Level::kDebug, m); }
inline void Info(std::string_view m) { Write(Level::kInfo, m); }
inline void Warn(std::string_view m) { Write(Level::kWarn, m); }
inline void Error(std::string_view m) { Write(Level::kError, m); }

}  // namespace mixteach::log
