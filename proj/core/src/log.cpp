#include "mixteach/log.hpp"

#include <atomic>
#include <cstdio>
#include <string>

namespace mixteach::log {
namespace {

std::atomic<Level> g_level{Level::kInfo};

const char* Prefix(Level level) {
  switch (level) {
    case Level::kDebug: return "debug";
    case Level::kInfo: return "info";
    case Level::kWarn: return "warn";
    case Level::kError: return "error";
    case Level::kOff: break;
  }
  return "";
}

}  // namespace

void SetLevel(Level level) { g_level.store(level); }
Level GetLevel() { return g_level.load(); }

void Write(Level level, std::string_view message) {
  if (level < g_level.load() || level == Level::kOff) return;
  std::string line = Prefix(level);
  line += ": ";
  line.append(message);
  line += '\n';
  std::fwrite(line.data(), 1, line.size(), stderr);
}

}  // namespace mixteach::log
