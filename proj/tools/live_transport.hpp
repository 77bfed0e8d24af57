#pragma once

#include "flowtrace/probing.hpp"

namespace flowtrace {

// Raw IPv4 sockets: probes go out with IP_HDRINCL, responses come back on an
// ICMP socket. Needs CAP_NET_RAW.
class RawSocketTransport : public Transport {
 public:
  explicit RawSocketTransport(Ipv4Addr destination);
  ~RawSocketTransport() override;

  Ipv4Addr source_address() const override { return source_; }
  Micros now() override;
  void send(const ProbePacket& probe) override;
  std::optional<Received> receive(Micros deadline) override;

 private:
  int send_fd_ = -1;
  int recv_fd_ = -1;
  Ipv4Addr source_;
  Ipv4Addr destination_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace flowtrace
