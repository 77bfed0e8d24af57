#pragma once

#include <stdexcept>
#include <string>

namespace flowtrace {

enum class Errc {
  probe_id_zero,
  payload_too_short,
  unsupported_protocol,
  truncated_header,
  not_icmp,
  transport_failure,
  config_invalid,
  malformed_line,
  out_of_range,
  parse_error,
  validation_error,
  destination_mismatch,
};

const char* errc_name(Errc code);

// All library failures surface as this exception; `code()` names the
// contract error, `what()` carries the human-readable detail.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(std::string(errc_name(code)) + ": " + detail), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace flowtrace
