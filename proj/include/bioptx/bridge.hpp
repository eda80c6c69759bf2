#ifndef BIOPTX_BRIDGE_HPP_
#define BIOPTX_BRIDGE_HPP_

#include <iosfwd>
#include <memory>
#include <string>
#include <string_view>

#include "bioptx/env.hpp"
#include "bioptx/serialize.hpp"

namespace bioptx {

inline constexpr char kBridgeProtocol[] = "bioptx/1";

// Newline-delimited JSON front end to one environment. Requests are
// {"cmd": "handshake" | "reset" | "step" | "log" | "close", ...}; every
// reply carries "ok" and, on failure, "error". A failed request leaves the
// episode untouched.
class Bridge {
 public:
  Bridge(std::shared_ptr<const LabelVolume> volume, EnvConfig cfg, std::string case_id = "");

  Json handle(const Json& request);
  // One request line in, one reply line out (without the newline).
  std::string handle_line(std::string_view line);
  // Serves until "close" or end of input.
  void serve(std::istream& in, std::ostream& out);

  bool closed() const { return closed_; }
  const BiopsyEnv& env() const { return env_; }

 private:
  BiopsyEnv env_;
  bool handshaken_ = false;
  bool closed_ = false;
};

}  // namespace bioptx

#endif  // BIOPTX_BRIDGE_HPP_
