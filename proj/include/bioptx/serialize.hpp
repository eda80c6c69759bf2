#ifndef BIOPTX_SERIALIZE_HPP_
#define BIOPTX_SERIALIZE_HPP_

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bioptx/env.hpp"
#include "json.hpp"

namespace bioptx {

using Json = nlohmann::json;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

// Row-major (channel, v, u) pixels, eight per byte, most significant bit first.
std::vector<std::uint8_t> pack_bits(const std::vector<std::uint8_t>& pixels);
std::vector<std::uint8_t> unpack_bits(const std::vector<std::uint8_t>& packed, std::size_t n);

Json to_json(const Observation& obs);
Observation observation_from_json(const Json& j);
Json to_json(const StepInfo& info);
Json to_json(const StepResult& r);

// Keys are sorted, so dump() of these objects is canonical.
Json to_json(const EpisodeLog& log);
EpisodeLog episode_from_json(const Json& j);
std::string canonical(const EpisodeLog& log);

// JSON-lines: one "episode" header record followed by one "step" record per
// step. Several episodes may follow each other in one stream.
void write_jsonl(std::ostream& out, const EpisodeLog& log);
std::vector<EpisodeLog> read_jsonl(std::istream& in);

}  // namespace bioptx

#endif  // BIOPTX_SERIALIZE_HPP_
