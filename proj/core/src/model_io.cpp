#include <cstring>
#include <fstream>

#include "json.hpp"
#include "recalnet/model.hpp"

namespace recalnet {

static_assert(sizeof(double) == 8, "params file assumes 8-byte doubles");

// Layout on disk: u64 little-endian header length, JSON header, then the flat
// parameter values as raw little-endian doubles. Offsets count doubles.

namespace {

void write_u64_le(std::ostream& os, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64_le(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

bool host_is_little_endian() {
  const std::uint16_t probe = 1;
  unsigned char b;
  std::memcpy(&b, &probe, 1);
  return b == 1;
}

void write_doubles_le(std::ostream& os, const Vector& values) {
  if (host_is_little_endian()) {
    os.write(reinterpret_cast<const char*>(values.data()),
             static_cast<std::streamsize>(values.size() * 8));
    return;
  }
  for (double d : values) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    write_u64_le(os, bits);
  }
}

void read_doubles_le(std::istream& is, Vector& values) {
  if (host_is_little_endian()) {
    is.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(values.size() * 8));
    return;
  }
  for (double& d : values) {
    std::uint64_t bits = read_u64_le(is);
    std::memcpy(&d, &bits, 8);
  }
}

}  // namespace

void save_params(const ParamSet& params, const std::string& path) {
  ParamLayout layout = layout_of(params);
  nlohmann::json header;
  header["params"] = nlohmann::json::array();
  for (const auto& e : layout.entries)
    header["params"].push_back(
        {{"name", e.name}, {"shape", e.shape}, {"offset", e.offset}});
  header["total"] = layout.total;

  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(msg("save_params: cannot open ", path));
  const std::string header_text = header.dump();
  write_u64_le(os, header_text.size());
  os.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  Vector flat = flatten(params);
  write_doubles_le(os, flat);
  if (!os) throw Error(msg("save_params: write failed for ", path));
}

ParamSet load_params(const std::string& path, const ModelConfig& config) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(msg("load_params: cannot open ", path));
  std::uint64_t header_len = read_u64_le(is);
  if (!is) throw ParseError(msg("load_params: truncated header in ", path));
  std::string header_text(header_len, '\0');
  is.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (!is) throw ParseError(msg("load_params: truncated header in ", path));

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(msg("load_params: bad header in ", path, ": ", e.what()));
  }

  ParamSet params = make_zero_params(config);
  ParamLayout layout = layout_of(params);
  if (header.value("total", std::uint64_t{0}) != layout.total)
    throw ParseError(msg("load_params: file holds ",
                         header.value("total", std::uint64_t{0}),
                         " values but the config needs ", layout.total));
  const auto& listed = header.at("params");
  if (listed.size() != layout.entries.size())
    throw ParseError(msg("load_params: file lists ", listed.size(),
                         " tensors but the config needs ",
                         layout.entries.size()));
  for (std::size_t i = 0; i < layout.entries.size(); ++i) {
    const auto& e = layout.entries[i];
    const auto& j = listed[i];
    if (j.at("name").get<std::string>() != e.name ||
        j.at("shape").get<std::vector<std::size_t>>() != e.shape ||
        j.at("offset").get<std::size_t>() != e.offset)
      throw ParseError(msg("load_params: tensor ", i, " (",
                           j.at("name").get<std::string>(),
                           ") does not match the config layout entry ", e.name));
  }

  Vector flat(layout.total);
  read_doubles_le(is, flat);
  if (!is) throw ParseError(msg("load_params: truncated values in ", path));
  unflatten(params, flat);
  return params;
}

}  // namespace recalnet
