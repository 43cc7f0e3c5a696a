#pragma once

#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace panelvar {

// Error taxonomy mirrored by the CLI exit codes: DataError -> 2,
// SamplerError -> 3, DiagnosticError -> 4.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SamplerError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DiagnosticError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

// Level comes from the PANELVAR_LOG environment variable
// (error|warn|info|debug); default warn.
inline LogLevel log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("PANELVAR_LOG");
    if (!env) return LogLevel::Warn;
    std::string s(env);
    if (s == "error") return LogLevel::Error;
    if (s == "info") return LogLevel::Info;
    if (s == "debug") return LogLevel::Debug;
    return LogLevel::Warn;
  }();
  return level;
}

inline void log_msg(LogLevel lvl, const std::string& msg) {
  if (lvl > log_level()) return;
  static const char* tag[] = {"error", "warn", "info", "debug"};
  std::fprintf(stderr, "[%s] %s\n", tag[static_cast<int>(lvl)], msg.c_str());
}

inline void log_error(const std::string& m) { log_msg(LogLevel::Error, m); }
inline void log_warn(const std::string& m) { log_msg(LogLevel::Warn, m); }
inline void log_info(const std::string& m) { log_msg(LogLevel::Info, m); }
inline void log_debug(const std::string& m) { log_msg(LogLevel::Debug, m); }

}  // namespace panelvar
