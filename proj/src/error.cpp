#include "flowtrace/error.hpp"

namespace flowtrace {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::probe_id_zero: return "probe_id_zero";
    case Errc::payload_too_short: return "payload_too_short";
    case Errc::unsupported_protocol: return "unsupported_protocol";
    case Errc::truncated_header: return "truncated_header";
    case Errc::not_icmp: return "not_icmp";
    case Errc::transport_failure: return "transport_failure";
    case Errc::config_invalid: return "config_invalid";
    case Errc::malformed_line: return "malformed_line";
    case Errc::out_of_range: return "out_of_range";
    case Errc::parse_error: return "parse_error";
    case Errc::validation_error: return "validation_error";
    case Errc::destination_mismatch: return "destination_mismatch";
  }
  return "unknown";
}

}  // namespace flowtrace
