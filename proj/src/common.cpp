#include "peripatos/common.hpp"

#include <atomic>
#include <charconv>
#include <cstdlib>
#include <iostream>
#include <mutex>

#include <fmt/format.h>

#include "peripatos/log.hpp"

namespace peripatos {

Window Window::seconds(std::int64_t s) {
  if (s <= 0) throw Error(fmt::format("window length must be positive, got {}", s));
  return Window(s);
}

std::int64_t Window::length() const {
  if (!length_) throw Error("unbounded window has no length");
  return *length_;
}

Window Window::parse(std::string_view text) {
  if (text == "6w") return six_weeks();
  if (text == "6m") return six_months();
  if (text == "none" || text == "unbounded") return unbounded();
  if (text.size() >= 2) {
    const char unit = text.back();
    std::int64_t n = 0;
    const auto digits = text.substr(0, text.size() - 1);
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), n);
    if (ec == std::errc{} && ptr == digits.data() + digits.size()) {
      switch (unit) {
        case 'w': return days(7 * n);
        case 'd': return days(n);
        case 'h': return hours(n);
        case 's': return seconds(n);
        default: break;
      }
    }
  }
  throw Error(fmt::format("unrecognised window '{}'", text));
}

std::string Window::label() const {
  if (!length_) return "none";
  if (*length_ == 42 * kSecondsPerDay) return "6w";
  if (*length_ == 182 * kSecondsPerDay) return "6m";
  if (*length_ % kSecondsPerDay == 0) return fmt::format("{}d", *length_ / kSecondsPerDay);
  return fmt::format("{}s", *length_);
}

bool nested_in(const Window& inner, const Window& outer) {
  if (!outer.bounded()) return true;
  if (!inner.bounded()) return false;
  return inner.length() <= outer.length();
}

namespace log {
namespace {

Level initial_level() {
  const char* env = std::getenv("PERIPATOS_LOG_LEVEL");
  if (!env) return Level::warning;
  const std::string_view v(env);
  if (v == "debug") return Level::debug;
  if (v == "info") return Level::info;
  if (v == "error") return Level::error;
  if (v == "silent") return Level::silent;
  return Level::warning;
}

std::atomic<Level>& current() {
  static std::atomic<Level> lvl{initial_level()};
  return lvl;
}

void emit(Level lvl, std::string_view tag, std::string_view message) {
  if (lvl < current().load()) return;
  static std::mutex mu;
  std::lock_guard lock(mu);
  std::cerr << "[peripatos] " << tag << ": " << message << '\n';
}

}  // namespace

void set_level(Level lvl) { current().store(lvl); }
Level level() { return current().load(); }

void debug(std::string_view m) { emit(Level::debug, "debug", m); }
void info(std::string_view m) { emit(Level::info, "info", m); }
void warning(std::string_view m) { emit(Level::warning, "warning", m); }
void error(std::string_view m) { emit(Level::error, "error", m); }

}  // namespace log
}  // namespace peripatos
