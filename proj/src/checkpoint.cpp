#include "rondo/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "rondo/errors.hpp"

namespace rondo {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'R', 'O', 'N', 'D', 'O', 'C', 'K', 'P'};

nlohmann::json shape_to_json(const NetworkShape& s) {
  return {{"input_channels", s.input_channels}, {"input_size", s.input_size},
          {"conv1_filters", s.conv1_filters},   {"conv1_kernel", s.conv1_kernel},
          {"conv1_stride", s.conv1_stride},     {"conv2_filters", s.conv2_filters},
          {"conv2_kernel", s.conv2_kernel},     {"conv2_stride", s.conv2_stride},
          {"hidden", s.hidden},                 {"nonvisual", s.nonvisual}};
}

NetworkShape shape_from_json(const nlohmann::json& j) {
  NetworkShape s;
  s.input_channels = j.at("input_channels").get<int>();
  s.input_size = j.at("input_size").get<int>();
  s.conv1_filters = j.at("conv1_filters").get<int>();
  s.conv1_kernel = j.at("conv1_kernel").get<int>();
  s.conv1_stride = j.at("conv1_stride").get<int>();
  s.conv2_filters = j.at("conv2_filters").get<int>();
  s.conv2_kernel = j.at("conv2_kernel").get<int>();
  s.conv2_stride = j.at("conv2_stride").get<int>();
  s.hidden = j.at("hidden").get<int>();
  s.nonvisual = j.at("nonvisual").get<int>();
  return s;
}

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& is, const std::string& what) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError(what + ": truncated checkpoint");
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& file, const Checkpoint& c) {
  if (c.params.size() != c.shape.param_count()) throw ContractError("checkpoint: parameter count does not match shape");
  nlohmann::json h;
  h["role"] = c.role == AgentRole::Active ? "active" : "passive";
  h["shape"] = shape_to_json(c.shape);
  h["param_count"] = c.params.size();
  h["optimizer_count"] = c.optimizer.size();
  h["version"] = c.version;
  h["master_seed"] = c.master_seed;
  h["validation_reaches"] = c.validation_reaches;
  h["validation_steps"] = c.validation_steps;
  h["counters"] = c.counters;
  const std::string header = h.dump();

  const auto tmp = std::filesystem::path(file.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write checkpoint " + tmp.string());
    os.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(os, kCheckpointFormat);
    put<std::uint64_t>(os, header.size());
    os.write(header.data(), static_cast<std::streamsize>(header.size()));
    os.write(reinterpret_cast<const char*>(c.params.data()), static_cast<std::streamsize>(c.params.size() * 8));
    os.write(reinterpret_cast<const char*>(c.optimizer.data()), static_cast<std::streamsize>(c.optimizer.size() * 8));
    if (!os) throw IoError("failed writing checkpoint " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, file, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + file.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + file.string());
  const std::string where = file.string();
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw IoError(where + ": not a checkpoint file");
  const auto format = get<std::uint32_t>(is, where);
  if (format != kCheckpointFormat) {
    throw IoError(where + ": unsupported checkpoint format " + std::to_string(format));
  }
  const auto hlen = get<std::uint64_t>(is, where);
  if (hlen > (1u << 20)) throw IoError(where + ": implausible header length");
  std::string header(hlen, '\0');
  if (!is.read(header.data(), static_cast<std::streamsize>(hlen))) throw IoError(where + ": truncated header");

  Checkpoint c;
  std::size_t np = 0, no = 0;
  try {
    const auto h = nlohmann::json::parse(header);
    const std::string role = h.at("role").get<std::string>();
    if (role != "active" && role != "passive") throw IoError(where + ": bad role '" + role + "'");
    c.role = role == "active" ? AgentRole::Active : AgentRole::Passive;
    c.shape = shape_from_json(h.at("shape"));
    np = h.at("param_count").get<std::size_t>();
    no = h.at("optimizer_count").get<std::size_t>();
    c.version = h.at("version").get<std::uint64_t>();
    c.master_seed = h.at("master_seed").get<std::uint64_t>();
    c.validation_reaches = h.at("validation_reaches").get<double>();
    c.validation_steps = h.at("validation_steps").get<double>();
    c.counters = h.at("counters").get<std::map<std::string, std::int64_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(where + ": bad checkpoint header: " + e.what());
  }
  c.shape.validate();
  if (np != c.shape.param_count()) throw IoError(where + ": parameter count does not match the stored shape");
  if (no != 0 && no != np) throw IoError(where + ": optimizer state size mismatch");
  c.params.resize(np);
  c.optimizer.resize(no);
  if (!is.read(reinterpret_cast<char*>(c.params.data()), static_cast<std::streamsize>(np * 8)) ||
      !is.read(reinterpret_cast<char*>(c.optimizer.data()), static_cast<std::streamsize>(no * 8))) {
    throw IoError(where + ": truncated tensor data");
  }
  return c;
}

std::string file_hash(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw IoError("cannot open " + file.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (is.read(buf, sizeof buf) || is.gcount() > 0) {
    for (std::streamsize i = 0; i < is.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace rondo
