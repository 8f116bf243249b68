#pragma once

#include <charconv>
#include <cmath>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace gemlearn {

/// Currency amount in fixed-point hundredths. Sums are exact, so replayed
/// logs and reimplementations agree bit for bit.
class Cost {
public:
    constexpr Cost() = default;
    static constexpr Cost from_cents(std::int64_t cents) { return Cost(cents); }

    /// Parses a nonnegative decimal with at most two significant fractional
    /// digits ("3", "2.5", "1.00", "0.250"). Returns nullopt otherwise.
    static std::optional<Cost> parse(std::string_view s) {
        if (s.empty()) return std::nullopt;
        bool negative = false;
        if (s.front() == '-' || s.front() == '+') {
            negative = s.front() == '-';
            s.remove_prefix(1);
        }
        const auto dot = s.find('.');
        const std::string_view whole = s.substr(0, dot);
        std::string_view frac = dot == std::string_view::npos ? std::string_view{} : s.substr(dot + 1);
        if (whole.empty() && frac.empty()) return std::nullopt;
        if (dot != std::string_view::npos && frac.empty() && whole.empty()) return std::nullopt;
        std::int64_t units = 0;
        if (!whole.empty()) {
            auto [p, ec] = std::from_chars(whole.data(), whole.data() + whole.size(), units);
            if (ec != std::errc{} || p != whole.data() + whole.size()) return std::nullopt;
        }
        while (frac.size() > 2 && frac.back() == '0') frac.remove_suffix(1);
        if (frac.size() > 2) return std::nullopt;
        std::int64_t cents = 0;
        for (std::size_t i = 0; i < 2; ++i) {
            cents *= 10;
            if (i < frac.size()) {
                if (frac[i] < '0' || frac[i] > '9') return std::nullopt;
                cents += frac[i] - '0';
            }
        }
        if (units > (INT64_MAX - cents) / 100) return std::nullopt;
        const std::int64_t total = units * 100 + cents;
        return Cost(negative ? -total : total);
    }

    constexpr std::int64_t cents() const noexcept { return cents_; }
    double value() const noexcept { return static_cast<double>(cents_) / 100.0; }

    /// Always two fractional digits: "3.00".
    std::string str() const {
        const std::int64_t a = cents_ < 0 ? -cents_ : cents_;
        std::string out = cents_ < 0 ? "-" : "";
        out += std::to_string(a / 100);
        out += '.';
        const auto frac = a % 100;
        out += static_cast<char>('0' + frac / 10);
        out += static_cast<char>('0' + frac % 10);
        return out;
    }

    constexpr Cost& operator+=(Cost o) noexcept {
        cents_ += o.cents_;
        return *this;
    }
    friend constexpr Cost operator+(Cost a, Cost b) noexcept { return a += b; }
    friend constexpr auto operator<=>(Cost, Cost) = default;

private:
    constexpr explicit Cost(std::int64_t cents) : cents_(cents) {}
    std::int64_t cents_ = 0;
};

}  // namespace gemlearn
