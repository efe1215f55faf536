#pragma once

#include <functional>
#include <string>
#include <utility>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace sparsent::diag {

using WarningSink = std::function<void(const std::string&)>;

// stdout carries command output (CSV, CoNLL), so diagnostics go to stderr.
inline spdlog::logger& logger() {
  static auto log = spdlog::stderr_color_mt("sparsent");
  return *log;
}

inline WarningSink& warning_sink() {
  static WarningSink sink = [](const std::string& msg) { logger().warn("{}", msg); };
  return sink;
}

inline void warn(const std::string& msg) { warning_sink()(msg); }

// Swaps the sink for the lifetime of the guard (tests use it to capture warnings).
class ScopedSink {
 public:
  explicit ScopedSink(WarningSink sink) : previous_(std::exchange(warning_sink(), std::move(sink))) {}
  ~ScopedSink() { warning_sink() = std::move(previous_); }
  ScopedSink(const ScopedSink&) = delete;
  ScopedSink& operator=(const ScopedSink&) = delete;

 private:
  WarningSink previous_;
};

}  // namespace sparsent::diag
