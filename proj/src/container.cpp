#include "stylegen/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "stylegen/errors.hpp"

namespace stylegen {

static_assert(std::endian::native == std::endian::little,
              "payload encoding assumes a little-endian host");

namespace {

constexpr std::uint64_t kMaxHeaderBytes = 1ull << 30;

template <typename T>
void append_raw(std::vector<std::byte>& out, const T& value) {
  const auto* p = reinterpret_cast<const std::byte*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

}  // namespace

const char* dtype_name(DType t) {
  switch (t) {
    case DType::kF32: return "f32";
    case DType::kF64: return "f64";
    case DType::kU16: return "u16";
  }
  return "?";
}

DType dtype_from_name(const std::string& name) {
  if (name == "f32") return DType::kF32;
  if (name == "f64") return DType::kF64;
  if (name == "u16") return DType::kU16;
  throw CorruptionError("unknown dtype '" + name + "'");
}

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::kF32: return 4;
    case DType::kF64: return 8;
    case DType::kU16: return 2;
  }
  return 0;
}

std::vector<std::byte> container_bytes(const Container& container) {
  Json header = container.header;
  header["payload_bytes"] = container.payload.size();
  const std::string text = header.dump();
  std::vector<std::byte> out;
  out.reserve(8 + text.size() + container.payload.size());
  append_raw(out, static_cast<std::uint64_t>(text.size()));
  const auto* tp = reinterpret_cast<const std::byte*>(text.data());
  out.insert(out.end(), tp, tp + text.size());
  out.insert(out.end(), container.payload.begin(), container.payload.end());
  return out;
}

void write_container(const std::filesystem::path& path, Container container) {
  const auto bytes = container_bytes(container);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

Container read_container(const std::filesystem::path& path, const std::string& magic,
                         int version) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  std::vector<char> raw((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());

  if (raw.size() < 8) throw TruncationError("'" + path.string() + "' is shorter than its length prefix");
  std::uint64_t header_len = 0;
  std::memcpy(&header_len, raw.data(), 8);
  if (header_len > kMaxHeaderBytes) throw CorruptionError("implausible header length in '" + path.string() + "'");
  if (raw.size() < 8 + header_len) throw TruncationError("'" + path.string() + "' ends inside its header");

  Container c;
  try {
    c.header = Json::parse(raw.begin() + 8, raw.begin() + 8 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const Json::exception& e) {
    throw CorruptionError("unparsable header in '" + path.string() + "': " + e.what());
  }
  if (!c.header.is_object() || !c.header.contains("magic") || !c.header["magic"].is_string())
    throw CorruptionError("'" + path.string() + "' has no magic string");
  if (c.header["magic"] != magic)
    throw CorruptionError("'" + path.string() + "' has magic '" + c.header["magic"].get<std::string>() +
                          "', expected '" + magic + "'");
  const int found = c.header.value("version", -1);
  if (found != version)
    throw VersionError("'" + path.string() + "' has format version " + std::to_string(found) +
                       ", this build reads version " + std::to_string(version));

  const std::uint64_t declared = c.header.value("payload_bytes", std::uint64_t{0});
  const std::uint64_t available = raw.size() - 8 - header_len;
  if (available < declared)
    throw TruncationError("'" + path.string() + "' payload truncated: " + std::to_string(available) + " of " +
                          std::to_string(declared) + " bytes");
  if (available > declared)
    throw CorruptionError("'" + path.string() + "' has " + std::to_string(available - declared) +
                          " trailing bytes");
  const auto* start = reinterpret_cast<const std::byte*>(raw.data()) + 8 + header_len;
  c.payload.assign(start, start + declared);
  return c;
}

void TensorWriter::add(const std::string& name, const Eigen::MatrixXd& m, DType dtype) {
  table_.push_back({{"name", name},
                    {"dtype", dtype_name(dtype)},
                    {"rows", m.rows()},
                    {"cols", m.cols()},
                    {"offset", payload_.size()}});
  // Row-major order on disk regardless of Eigen storage.
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (dtype == DType::kF32) {
        append_raw(payload_, static_cast<float>(m(r, c)));
      } else if (dtype == DType::kF64) {
        append_raw(payload_, m(r, c));
      } else {
        throw ParameterError("matrices are stored as f32 or f64");
      }
    }
  }
}

void TensorWriter::add_u16(const std::string& name, std::span<const std::uint16_t> values) {
  table_.push_back({{"name", name},
                    {"dtype", "u16"},
                    {"rows", values.size()},
                    {"cols", 1},
                    {"offset", payload_.size()}});
  for (std::uint16_t v : values) append_raw(payload_, v);
}

void TensorWriter::finish(Container& out) {
  out.header["arrays"] = std::move(table_);
  out.payload = std::move(payload_);
  table_ = Json::array();
  payload_.clear();
}

TensorReader::TensorReader(const Container& c) : c_(c) {
  if (!c_.header.contains("arrays") || !c_.header["arrays"].is_array())
    throw CorruptionError("container has no array table");
}

bool TensorReader::has(const std::string& name) const {
  for (const auto& e : c_.header["arrays"])
    if (e.value("name", "") == name) return true;
  return false;
}

const Json& TensorReader::entry(const std::string& name) const {
  for (const auto& e : c_.header["arrays"])
    if (e.value("name", "") == name) return e;
  throw ShapeError("array '" + name + "' missing from container");
}

Eigen::MatrixXd TensorReader::read_any(const std::string& name) const {
  const Json& e = entry(name);
  const auto rows = e.at("rows").get<Eigen::Index>();
  const auto cols = e.at("cols").get<Eigen::Index>();
  const DType dt = dtype_from_name(e.at("dtype").get<std::string>());
  const auto offset = e.at("offset").get<std::size_t>();
  const std::size_t need = static_cast<std::size_t>(rows * cols) * dtype_size(dt);
  if (offset + need > c_.payload.size())
    throw TruncationError("array '" + name + "' extends past the payload");
  Eigen::MatrixXd m(rows, cols);
  const std::byte* p = c_.payload.data() + offset;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index col = 0; col < cols; ++col) {
      if (dt == DType::kF32) {
        float v;
        std::memcpy(&v, p, 4);
        p += 4;
        m(r, col) = v;
      } else if (dt == DType::kF64) {
        double v;
        std::memcpy(&v, p, 8);
        p += 8;
        m(r, col) = v;
      } else {
        throw CorruptionError("array '" + name + "' is not a float matrix");
      }
    }
  }
  return m;
}

Eigen::MatrixXd TensorReader::read(const std::string& name, Eigen::Index rows, Eigen::Index cols) const {
  const Json& e = entry(name);
  const auto r = e.at("rows").get<Eigen::Index>();
  const auto c = e.at("cols").get<Eigen::Index>();
  if (r != rows || c != cols)
    throw ShapeError("array '" + name + "' has shape " + std::to_string(r) + "x" + std::to_string(c) +
                     ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
  return read_any(name);
}

std::vector<std::uint16_t> TensorReader::read_u16(const std::string& name) const {
  const Json& e = entry(name);
  if (e.at("dtype") != "u16") throw CorruptionError("array '" + name + "' is not u16");
  const auto n = e.at("rows").get<std::size_t>();
  const auto offset = e.at("offset").get<std::size_t>();
  if (offset + 2 * n > c_.payload.size()) throw TruncationError("array '" + name + "' extends past the payload");
  std::vector<std::uint16_t> out(n);
  std::memcpy(out.data(), c_.payload.data() + offset, 2 * n);
  return out;
}

std::uint64_t fnv1a64(std::span<const std::byte> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::byte b : bytes) {
    h ^= static_cast<std::uint64_t>(b);
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t file_hash(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  std::vector<char> raw((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return fnv1a64(std::as_bytes(std::span<const char>(raw)));
}

}  // namespace stylegen
