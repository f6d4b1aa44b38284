#include "partedit/checkpoint.hpp"

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace partedit {

namespace {

constexpr std::string_view kMagic = "PARTEDIT-CHECKPOINT";

static_assert(std::endian::native == std::endian::little,
              "checkpoint weights are stored little-endian");

}  // namespace

std::string serialize_checkpoint(nlohmann::ordered_json header,
                                 const std::vector<nn::NamedParameter>& params) {
  auto layout = nlohmann::ordered_json::array();
  std::size_t count = 0;
  for (const auto& p : params) {
    layout.push_back({{"name", p.name}, {"rows", p.tensor.rows()}, {"cols", p.tensor.cols()}});
    count += p.tensor.size();
  }
  header["format_version"] = kCheckpointFormatVersion;
  header["weight_count"] = count;
  header["layout"] = std::move(layout);

  std::string out(kMagic);
  out += ' ' + std::to_string(kCheckpointFormatVersion) + '\n';
  out += header.dump() + '\n';
  for (const auto& p : params) {
    const auto v = p.tensor.values();
    out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
  }
  return out;
}

CheckpointData parse_checkpoint(std::string_view bytes) {
  const auto first = bytes.find('\n');
  if (first == std::string_view::npos || bytes.substr(0, kMagic.size()) != kMagic) {
    throw CheckpointError("not a checkpoint file");
  }
  const int version = std::stoi(std::string(bytes.substr(kMagic.size() + 1, first - kMagic.size() - 1)));
  if (version != kCheckpointFormatVersion) {
    throw CheckpointError("unsupported checkpoint format version " + std::to_string(version));
  }
  const auto second = bytes.find('\n', first + 1);
  if (second == std::string_view::npos) throw CheckpointError("truncated checkpoint header");
  CheckpointData data;
  try {
    data.header = nlohmann::ordered_json::parse(bytes.substr(first + 1, second - first - 1));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("bad checkpoint header: ") + e.what());
  }
  const auto count = data.header.at("weight_count").get<std::size_t>();
  const auto payload = bytes.substr(second + 1);
  if (payload.size() != count * sizeof(double)) {
    throw CheckpointError("checkpoint payload holds " + std::to_string(payload.size()) +
                          " bytes, expected " + std::to_string(count * sizeof(double)));
  }
  data.weights.resize(count);
  std::memcpy(data.weights.data(), payload.data(), payload.size());
  return data;
}

void load_weights(const CheckpointData& data, const std::vector<nn::NamedParameter>& params) {
  const auto& layout = data.header.at("layout");
  if (layout.size() != params.size()) throw CheckpointError("checkpoint layout size mismatch");
  std::size_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& entry = layout[i];
    auto tensor = params[i].tensor;
    if (entry.at("name").get<std::string>() != params[i].name ||
        entry.at("rows").get<std::size_t>() != tensor.rows() ||
        entry.at("cols").get<std::size_t>() != tensor.cols()) {
      throw CheckpointError("checkpoint block " + std::to_string(i) + " does not match " +
                            params[i].name);
    }
    auto dst = tensor.mutable_values();
    std::copy_n(data.weights.begin() + static_cast<std::ptrdiff_t>(offset), dst.size(), dst.begin());
    offset += dst.size();
  }
}

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xF];
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string file_sha256(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace partedit
