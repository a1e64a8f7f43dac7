#include "scmcf/domain.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

#include "scmcf/error.hpp"

namespace scmcf {

Domain Domain::finite(std::vector<double> values) {
  if (values.empty()) {
    throw Error(ErrorKind::DomainMismatch, "finite domain must be nonempty");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw Error(ErrorKind::DomainMismatch, "finite domain values must be finite numbers");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (std::abs(values[i] - values[j]) <= kValueTolerance) {
        throw Error(ErrorKind::DomainMismatch,
                    "duplicate value " + format_number(values[i]) + " in finite domain");
      }
    }
  }
  Domain d;
  d.kind_ = Kind::Finite;
  d.values_ = std::move(values);
  return d;
}

Domain Domain::labelled(std::vector<std::string> labels) {
  if (labels.empty()) {
    throw Error(ErrorKind::DomainMismatch, "finite domain must be nonempty");
  }
  std::set<std::string> seen;
  for (const auto& label : labels) {
    if (!seen.insert(label).second) {
      throw Error(ErrorKind::DomainMismatch, "duplicate label '" + label + "' in finite domain");
    }
  }
  Domain d;
  d.kind_ = Kind::Finite;
  d.values_.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) d.values_[i] = static_cast<double>(i);
  d.labels_ = std::move(labels);
  return d;
}

Domain Domain::boolean() { return finite({0.0, 1.0}); }

Domain Domain::real() { return Domain{}; }

Domain Domain::interval(double lo, double hi) {
  if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw Error(ErrorKind::DomainMismatch, "interval domain requires finite lo < hi");
  }
  Domain d;
  d.kind_ = Kind::Interval;
  d.lo_ = lo;
  d.hi_ = hi;
  return d;
}

bool Domain::contains(double value) const {
  switch (kind_) {
    case Kind::Finite: return index_of(value).has_value();
    case Kind::Real: return std::isfinite(value);
    case Kind::Interval:
      return value >= lo_ - kValueTolerance && value <= hi_ + kValueTolerance;
  }
  return false;
}

std::optional<std::size_t> Domain::index_of(double value) const {
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (std::abs(values_[i] - value) <= kValueTolerance) return i;
  }
  return std::nullopt;
}

double Domain::snap(double value) const {
  if (kind_ != Kind::Finite) return value;
  if (auto i = index_of(value)) return values_[*i];
  return value;
}

std::string Domain::format_value(double value) const {
  if (has_labels()) {
    if (auto i = index_of(value)) return labels_[*i];
  }
  return format_number(value);
}

std::optional<double> Domain::parse_value(std::string_view text) const {
  if (has_labels()) {
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (labels_[i] == text) return values_[i];
    }
  }
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

std::string format_number(double value) {
  if (value == 0.0) return "0";  // folds -0
  char buf[64];
  auto shortest = std::to_chars(buf, buf + sizeof(buf), value);
  std::string text(buf, shortest.ptr);
  std::size_t digits = 0;
  bool in_exponent = false;
  for (char c : text) {
    if (c == 'e' || c == 'E') in_exponent = true;
    if (!in_exponent && c >= '0' && c <= '9') ++digits;
  }
  // Leading zeros of numbers like 0.001 are not significant; the cap only
  // matters for long mantissas so a loose count is fine.
  if (digits <= 12) return text;
  auto capped = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general, 12);
  return std::string(buf, capped.ptr);
}

}  // namespace scmcf
