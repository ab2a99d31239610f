#include "statfem/chain_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace statfem {

namespace {

constexpr char kMagic[4] = {'S', 'F', 'E', 'M'};

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>(bytes[sizeof(T) - 1 - i]));
  } else {
    out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
  }
}

template <typename T>
T get_le(const std::string& data, std::size_t& pos) {
  if (pos + sizeof(T) > data.size()) throw std::runtime_error("read_chain: truncated file");
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, data.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  }
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  pos += sizeof(T);
  return value;
}

}  // namespace

void write_chain(const std::filesystem::path& path, const ChainRecord& record,
                 nlohmann::json metadata) {
  const std::size_t k = record.n_samples();
  std::string out;
  out.reserve(24 + record.samples.size() * 8);
  out.append(kMagic, 4);
  put_le<std::uint32_t>(out, kChainFileVersion);
  put_le<std::uint64_t>(out, k);
  put_le<std::uint64_t>(out, record.dim);
  put_le<std::uint32_t>(out, kDtypeFloat64);
  for (double v : record.samples) put_le<double>(out, v);

  metadata["accept_rate"] = record.accept_rate;
  metadata["eta_final"] = record.eta_final;
  metadata["eta_trace"] = record.eta_trace;
  metadata["theta_keys"] = record.theta_keys;
  metadata["wall_seconds"] = record.wall_seconds;
  out += metadata.dump();

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw std::runtime_error("write_chain: cannot open " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw std::runtime_error("write_chain: write failed for " + path.string());
}

ChainFileData read_chain(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("read_chain: cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());

  std::size_t pos = 0;
  if (data.size() < 4 || std::memcmp(data.data(), kMagic, 4) != 0) {
    throw std::runtime_error("read_chain: bad magic in " + path.string());
  }
  pos = 4;
  const auto version = get_le<std::uint32_t>(data, pos);
  if (version != kChainFileVersion) {
    throw std::runtime_error("read_chain: unsupported version " + std::to_string(version));
  }
  const auto k = get_le<std::uint64_t>(data, pos);
  const auto d = get_le<std::uint64_t>(data, pos);
  const auto dtype = get_le<std::uint32_t>(data, pos);
  if (dtype != kDtypeFloat64) {
    throw std::runtime_error("read_chain: unsupported dtype tag " + std::to_string(dtype));
  }
  if (pos + k * d * 8 > data.size()) throw std::runtime_error("read_chain: truncated payload");

  ChainFileData out;
  out.record.dim = static_cast<std::size_t>(d);
  out.record.samples.resize(static_cast<std::size_t>(k * d));
  for (double& v : out.record.samples) v = get_le<double>(data, pos);

  try {
    out.metadata = nlohmann::json::parse(data.substr(pos));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("read_chain: metadata parse failure: " + std::string(e.what()));
  }
  out.record.accept_rate = out.metadata.value("accept_rate", 0.0);
  out.record.eta_final = out.metadata.value("eta_final", 0.0);
  out.record.wall_seconds = out.metadata.value("wall_seconds", 0.0);
  if (out.metadata.contains("eta_trace")) {
    out.record.eta_trace = out.metadata["eta_trace"].get<std::vector<double>>();
  }
  if (out.metadata.contains("theta_keys")) {
    out.record.theta_keys = out.metadata["theta_keys"].get<std::vector<std::uint64_t>>();
  }
  return out;
}

}  // namespace statfem
