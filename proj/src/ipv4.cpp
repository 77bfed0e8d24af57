#include "flowtrace/ipv4.hpp"

#include <charconv>

#include <fmt/format.h>

namespace flowtrace {

std::string Ipv4Addr::to_string() const {
  return fmt::format("{}.{}.{}.{}", value >> 24, (value >> 16) & 0xFF, (value >> 8) & 0xFF, value & 0xFF);
}

std::optional<Ipv4Addr> Ipv4Addr::parse(std::string_view text) {
  std::uint32_t result = 0;
  const char* p = text.data();
  const char* end = text.data() + text.size();
  for (int i = 0; i < 4; ++i) {
    unsigned octet = 0;
    auto [next, ec] = std::from_chars(p, end, octet);
    if (ec != std::errc{} || next == p || octet > 255 || next - p > 3) return std::nullopt;
    result = (result << 8) | octet;
    p = next;
    if (i < 3) {
      if (p == end || *p != '.') return std::nullopt;
      ++p;
    }
  }
  if (p != end) return std::nullopt;
  return Ipv4Addr{result};
}

bool Ipv4Prefix::contains(Ipv4Addr a) const {
  if (length == 0) return true;
  const std::uint32_t mask = length >= 32 ? 0xFFFFFFFFu : ~((1u << (32 - length)) - 1);
  return (a.value & mask) == (base.value & mask);
}

std::optional<Ipv4Prefix> Ipv4Prefix::parse(std::string_view text) {
  if (text == "default") return Ipv4Prefix{Ipv4Addr{}, 0};
  auto slash = text.find('/');
  auto addr = Ipv4Addr::parse(text.substr(0, slash));
  if (!addr) return std::nullopt;
  int len = 32;
  if (slash != std::string_view::npos) {
    auto digits = text.substr(slash + 1);
    auto [next, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), len);
    if (ec != std::errc{} || next != digits.data() + digits.size() || len < 0 || len > 32) return std::nullopt;
  }
  return Ipv4Prefix{*addr, len};
}

}  // namespace flowtrace
