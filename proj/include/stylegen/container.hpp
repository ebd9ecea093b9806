#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace stylegen {

using Json = nlohmann::json;

// Binary container shared by corpus, store, embedding and checkpoint files:
//
//   [u64 little-endian header length][header JSON][payload bytes]
//
// The header always carries "magic", "version" and "payload_bytes".
struct Container {
  Json header;
  std::vector<std::byte> payload;
};

enum class DType { kF32, kF64, kU16 };

const char* dtype_name(DType t);
DType dtype_from_name(const std::string& name);
std::size_t dtype_size(DType t);

void write_container(const std::filesystem::path& path, Container container);

// Validates magic, version and payload length. Version mismatch throws
// VersionError, short payload TruncationError, unparsable header
// CorruptionError.
Container read_container(const std::filesystem::path& path, const std::string& magic,
                         int version);

// Serialized bytes of a container; write_container stores exactly these.
std::vector<std::byte> container_bytes(const Container& container);

// Named matrices laid out back to back in the payload. The header gets an
// "arrays" list of {name, dtype, rows, cols, offset}.
class TensorWriter {
 public:
  void add(const std::string& name, const Eigen::MatrixXd& m, DType dtype);
  void add_u16(const std::string& name, std::span<const std::uint16_t> values);
  // Moves the payload and array table into the container.
  void finish(Container& out);

 private:
  Json table_ = Json::array();
  std::vector<std::byte> payload_;
};

class TensorReader {
 public:
  explicit TensorReader(const Container& c);

  bool has(const std::string& name) const;
  // Throws ShapeError when the stored shape differs from (rows, cols).
  Eigen::MatrixXd read(const std::string& name, Eigen::Index rows, Eigen::Index cols) const;
  Eigen::MatrixXd read_any(const std::string& name) const;
  std::vector<std::uint16_t> read_u16(const std::string& name) const;

 private:
  const Json& entry(const std::string& name) const;
  const Container& c_;
};

std::uint64_t fnv1a64(std::span<const std::byte> bytes);
std::uint64_t file_hash(const std::filesystem::path& path);

}  // namespace stylegen
