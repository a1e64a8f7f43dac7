#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace scmcf {

/// Two values are treated as the same domain element when they differ by at
/// most this much. Finite-domain results are snapped to the declared value.
inline constexpr double kValueTolerance = 1e-9;

/// Value set of a variable: an ordered finite list, the real line, or a
/// bounded interval. Labelled finite domains store the label index as the
/// numeric value and keep the labels for parsing and rendering.
class Domain {
 public:
  enum class Kind { Finite, Real, Interval };

  static Domain finite(std::vector<double> values);
  static Domain labelled(std::vector<std::string> labels);
  static Domain boolean();
  static Domain real();
  static Domain interval(double lo, double hi);

  Kind kind() const noexcept { return kind_; }
  bool is_finite() const noexcept { return kind_ == Kind::Finite; }
  bool is_real_line() const noexcept { return kind_ == Kind::Real; }

  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  bool has_labels() const noexcept { return !labels_.empty(); }
  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }

  bool contains(double value) const;
  /// Position of `value` in a finite domain (within kValueTolerance).
  std::optional<std::size_t> index_of(double value) const;
  /// Declared value closest to `value` for finite domains; identity otherwise.
  double snap(double value) const;

  std::string format_value(double value) const;
  /// Accepts a number, or a label for labelled domains.
  std::optional<double> parse_value(std::string_view text) const;

  bool operator==(const Domain& other) const = default;

 private:
  Kind kind_ = Kind::Real;
  std::vector<double> values_;
  std::vector<std::string> labels_;
  double lo_ = 0.0;
  double hi_ = 0.0;
};

/// Shortest text that reads back to the same double, capped at 12
/// significant digits.
std::string format_number(double value);

}  // namespace scmcf
