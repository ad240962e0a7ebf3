#include "stepattn/sample.hpp"

#include <iostream>
#include <mutex>
#include <stdexcept>

#include "stepattn/log.hpp"

namespace stepattn {

std::string_view to_string(Population p) {
  switch (p) {
    case Population::kSighted: return "sighted";
    case Population::kCane: return "cane";
    case Population::kDog: return "dog";
    case Population::kNotApplicable: break;
  }
  return "n/a";
}

std::string_view to_string(Regularity r) {
  switch (r) {
    case Regularity::kRegular: return "regular";
    case Regularity::kSemiRegular: return "semi-regular";
    case Regularity::kNotApplicable: break;
  }
  return "n/a";
}

Population parse_population(std::string_view s) {
  if (s == "sighted") return Population::kSighted;
  if (s == "cane") return Population::kCane;
  if (s == "dog") return Population::kDog;
  if (s == "n/a" || s.empty()) return Population::kNotApplicable;
  throw std::invalid_argument("unknown population '" + std::string(s) + "'");
}

Regularity parse_regularity(std::string_view s) {
  if (s == "regular") return Regularity::kRegular;
  if (s == "semi-regular") return Regularity::kSemiRegular;
  if (s == "n/a" || s.empty()) return Regularity::kNotApplicable;
  throw std::invalid_argument("unknown regularity '" + std::string(s) + "'");
}

namespace {

std::mutex g_log_mutex;

LogSink& sink() {
  static LogSink s = [](LogLevel level, const std::string& msg) {
    std::cerr << (level == LogLevel::kWarning ? "warning: " : "") << msg << '\n';
  };
  return s;
}

void emit(LogLevel level, const std::string& msg) {
  std::lock_guard lock(g_log_mutex);
  if (sink()) sink()(level, msg);
}

}  // namespace

LogSink set_log_sink(LogSink s) {
  std::lock_guard lock(g_log_mutex);
  LogSink previous = std::move(sink());
  sink() = std::move(s);
  return previous;
}

void log_info(const std::string& msg) { emit(LogLevel::kInfo, msg); }
void log_warning(const std::string& msg) { emit(LogLevel::kWarning, msg); }

}  // namespace stepattn
