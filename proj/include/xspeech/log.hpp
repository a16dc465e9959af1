#pragma once

#include <memory>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace xspeech {

/// Shared logger; writes to stderr so data files and stdout stay clean.
inline spdlog::logger& log() {
  static const std::shared_ptr<spdlog::logger> instance = [] {
    auto existing = spdlog::get("xspeech");
    return existing ? existing : spdlog::stderr_color_mt("xspeech");
  }();
  return *instance;
}

}  // namespace xspeech
