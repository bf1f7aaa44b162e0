#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace peripatos {

/// Raised for malformed inputs, violated preconditions, and unrecoverable
/// numerical failures anywhere in the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Seconds since the Unix epoch, UTC.
using Timestamp = std::int64_t;

inline constexpr std::int64_t kSecondsPerHour = 3600;
inline constexpr std::int64_t kSecondsPerDay = 86400;

/// A forward-looking time span measured from an anchor event. An unbounded
/// window admits every non-negative delay.
class Window {
 public:
  static Window seconds(std::int64_t s);
  static Window hours(std::int64_t h) { return seconds(h * kSecondsPerHour); }
  static Window days(std::int64_t d) { return seconds(d * kSecondsPerDay); }
  static Window six_weeks() { return days(42); }
  /// 26 weeks.
  static Window six_months() { return days(182); }
  static Window unbounded() { return Window{}; }

  /// Accepts "6w", "6m", "none"/"unbounded", or "<n>d" / "<n>h" / "<n>s".
  static Window parse(std::string_view text);

  bool bounded() const { return length_.has_value(); }
  std::int64_t length() const;

  /// True when an event `delay` seconds after the anchor falls inside.
  bool admits(std::int64_t delay) const {
    return delay >= 0 && (!length_ || delay <= *length_);
  }

  /// Short label used in artifact names: "6w", "6m", "none", "<n>d" or "<n>s".
  std::string label() const;

  friend bool operator==(const Window&, const Window&) = default;

 private:
  Window() = default;
  explicit Window(std::int64_t s) : length_(s) {}
  std::optional<std::int64_t> length_;
};

/// Window containment, used for monotonicity arguments: every delay admitted
/// by `inner` is admitted by `outer`.
bool nested_in(const Window& inner, const Window& outer);

}  // namespace peripatos
