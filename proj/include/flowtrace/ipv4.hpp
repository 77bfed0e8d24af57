#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace flowtrace {

struct Ipv4Addr {
  std::uint32_t value = 0;

  constexpr Ipv4Addr() = default;
  constexpr explicit Ipv4Addr(std::uint32_t v) : value(v) {}
  constexpr Ipv4Addr(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d)
      : value((std::uint32_t{a} << 24) | (std::uint32_t{b} << 16) | (std::uint32_t{c} << 8) | d) {}

  std::string to_string() const;
  static std::optional<Ipv4Addr> parse(std::string_view text);

  friend constexpr auto operator<=>(Ipv4Addr, Ipv4Addr) = default;
};

// A route element: an address, or a star (nullopt) when no response came back.
using Hop = std::optional<Ipv4Addr>;

struct Ipv4Prefix {
  Ipv4Addr base;
  int length = 32;

  bool contains(Ipv4Addr a) const;
  static std::optional<Ipv4Prefix> parse(std::string_view text);
};

}  // namespace flowtrace

template <>
struct std::hash<flowtrace::Ipv4Addr> {
  std::size_t operator()(flowtrace::Ipv4Addr a) const noexcept { return std::hash<std::uint32_t>{}(a.value); }
};
