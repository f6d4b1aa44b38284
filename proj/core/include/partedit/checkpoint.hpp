#pragma once

// Checkpoint layout (all models):
//   line 1: "PARTEDIT-CHECKPOINT <format version>"
//   line 2: JSON header: kind, dims, seed, training metadata, and "layout",
//           the ordered list of {name, rows, cols} weight blocks
//   rest:   every weight block in layout order, row-major, IEEE-754 binary64
//           little-endian

#include "partedit/nn.hpp"

#include <filesystem>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace partedit {

inline constexpr int kCheckpointFormatVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointData {
  nlohmann::ordered_json header;
  std::vector<double> weights;
};

std::string serialize_checkpoint(nlohmann::ordered_json header,
                                 const std::vector<nn::NamedParameter>& params);
CheckpointData parse_checkpoint(std::string_view bytes);

/// Copies weights into params after checking the layout matches by name and shape.
void load_weights(const CheckpointData& data, const std::vector<nn::NamedParameter>& params);

std::string sha256_hex(std::string_view bytes);
std::string file_sha256(const std::filesystem::path& path);
std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file, then renames over path.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace partedit
