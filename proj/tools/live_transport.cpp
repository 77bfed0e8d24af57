#include "live_transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include <fmt/format.h>

#include "flowtrace/error.hpp"

namespace flowtrace {

namespace {

[[noreturn]] void fail(const char* what) {
  throw Error(Errc::transport_failure, fmt::format("{}: {}", what, std::strerror(errno)));
}

sockaddr_in to_sockaddr(Ipv4Addr a) {
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_addr.s_addr = htonl(a.value);
  return sa;
}

}  // namespace

RawSocketTransport::RawSocketTransport(Ipv4Addr destination)
    : destination_(destination), start_(std::chrono::steady_clock::now()) {
  // Learn the source address the kernel would pick for this destination.
  int probe = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (probe < 0) fail("socket");
  sockaddr_in sa = to_sockaddr(destination);
  sa.sin_port = htons(33434);
  if (::connect(probe, reinterpret_cast<sockaddr*>(&sa), sizeof sa) < 0) {
    ::close(probe);
    fail("connect");
  }
  sockaddr_in local{};
  socklen_t len = sizeof local;
  ::getsockname(probe, reinterpret_cast<sockaddr*>(&local), &len);
  ::close(probe);
  source_ = Ipv4Addr{ntohl(local.sin_addr.s_addr)};

  send_fd_ = ::socket(AF_INET, SOCK_RAW, IPPROTO_RAW);
  if (send_fd_ < 0) fail("raw send socket (needs CAP_NET_RAW)");
  int on = 1;
  ::setsockopt(send_fd_, IPPROTO_IP, IP_HDRINCL, &on, sizeof on);
  recv_fd_ = ::socket(AF_INET, SOCK_RAW, IPPROTO_ICMP);
  if (recv_fd_ < 0) {
    ::close(send_fd_);
    fail("raw icmp socket");
  }
}

RawSocketTransport::~RawSocketTransport() {
  if (send_fd_ >= 0) ::close(send_fd_);
  if (recv_fd_ >= 0) ::close(recv_fd_);
}

Micros RawSocketTransport::now() {
  return std::chrono::duration_cast<Micros>(std::chrono::steady_clock::now() - start_);
}

void RawSocketTransport::send(const ProbePacket& probe) {
  sockaddr_in sa = to_sockaddr(destination_);
  if (::sendto(send_fd_, probe.octets.data(), probe.octets.size(), 0, reinterpret_cast<sockaddr*>(&sa), sizeof sa) <
      0)
    fail("sendto");
}

std::optional<Received> RawSocketTransport::receive(Micros deadline) {
  std::vector<std::uint8_t> buf(1500);
  for (;;) {
    const auto left = deadline - now();
    if (left.count() < 0) return std::nullopt;
    pollfd p{recv_fd_, POLLIN, 0};
    const int ms = static_cast<int>((left.count() + 999) / 1000);
    const int rc = ::poll(&p, 1, ms);
    if (rc < 0) {
      if (errno == EINTR) continue;
      fail("poll");
    }
    if (rc == 0) return std::nullopt;
    const ssize_t n = ::recv(recv_fd_, buf.data(), buf.size(), 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail("recv");
    }
    buf.resize(static_cast<std::size_t>(n));
    return Received{std::move(buf), now()};
  }
}

}  // namespace flowtrace
