#pragma once

// Delivery interface shared by the simulator and the TCP transport.

#include <cstdint>
#include <vector>

#include "dissent/common.hpp"

namespace dissent {

struct Envelope {
  MemberId from = 0;
  MemberId to = 0;
  Bytes frame;  // serialized Frame, no length prefix
  // Measurement metadata, never on the wire. transport_depth counts hops;
  // protocol_depths has one entry per protocol frame carried (one for a
  // direct frame, one per inner frame of a bundle or forward).
  std::uint32_t transport_depth = 0;
  std::vector<std::uint32_t> protocol_depths;

  std::size_t wire_size() const { return frame.size() + 4; }
};

class Link {
 public:
  virtual ~Link() = default;
  virtual void send(Envelope e) = 0;
  // Fires Node::on_timer(token) after delay_us on the same ordered inbox.
  virtual void schedule(std::uint64_t delay_us, std::uint64_t token) = 0;
  virtual std::uint64_t now_us() const = 0;
};

}  // namespace dissent
