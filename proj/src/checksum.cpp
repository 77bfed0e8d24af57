#include "flowtrace/checksum.hpp"

namespace flowtrace {

std::uint32_t checksum_accumulate(std::span<const std::uint8_t> octets, std::uint32_t sum) {
  std::size_t i = 0;
  for (; i + 1 < octets.size(); i += 2) {
    sum += (std::uint32_t{octets[i]} << 8) | octets[i + 1];
    // keep headroom for very long inputs
    if (sum & 0x80000000u) sum = (sum & 0xFFFF) + (sum >> 16);
  }
  if (i < octets.size()) sum += std::uint32_t{octets[i]} << 8;
  return sum;
}

std::uint16_t checksum_fold(std::uint32_t sum) {
  while (sum >> 16) sum = (sum & 0xFFFF) + (sum >> 16);
  return static_cast<std::uint16_t>(sum);
}

std::uint16_t internet_checksum(std::span<const std::uint8_t> octets) {
  return static_cast<std::uint16_t>(~checksum_fold(checksum_accumulate(octets)));
}

std::uint32_t pseudo_header_sum(Ipv4Addr src, Ipv4Addr dst, std::uint8_t protocol, std::uint16_t length) {
  std::uint32_t sum = 0;
  sum += src.value >> 16;
  sum += src.value & 0xFFFF;
  sum += dst.value >> 16;
  sum += dst.value & 0xFFFF;
  sum += protocol;
  sum += length;
  return sum;
}

std::uint16_t ones_add(std::uint16_t a, std::uint16_t b) {
  return checksum_fold(std::uint32_t{a} + b);
}

std::uint16_t ones_sub(std::uint16_t a, std::uint16_t b) {
  return ones_add(a, static_cast<std::uint16_t>(~b));
}

}  // namespace flowtrace
