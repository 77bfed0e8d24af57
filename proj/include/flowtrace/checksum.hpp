#pragma once

#include <cstdint>
#include <span>

#include "flowtrace/ipv4.hpp"

namespace flowtrace {

// Adds the octets to `sum` as big-endian 16-bit words. An odd trailing octet
// is treated as if followed by a zero octet.
std::uint32_t checksum_accumulate(std::span<const std::uint8_t> octets, std::uint32_t sum = 0);

// Folds carries back into the low 16 bits (end-around carry).
std::uint16_t checksum_fold(std::uint32_t sum);

// One's-complement of the one's-complement sum of the octets.
std::uint16_t internet_checksum(std::span<const std::uint8_t> octets);

// Sum of the IPv4 pseudo-header used by UDP and TCP checksums.
std::uint32_t pseudo_header_sum(Ipv4Addr src, Ipv4Addr dst, std::uint8_t protocol, std::uint16_t length);

std::uint16_t ones_add(std::uint16_t a, std::uint16_t b);
std::uint16_t ones_sub(std::uint16_t a, std::uint16_t b);

}  // namespace flowtrace
