#include "mmpt/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "mmpt/errors.hpp"

namespace mmpt {

using nlohmann::json;

static const char kMagic[4] = {'M', 'M', 'P', 'T'};

template <typename T>
static void write_le(std::ostream& out, T v) {
  unsigned char buf[sizeof(T)];
  for (size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
static T read_le(std::istream& in) {
  unsigned char buf[sizeof(T)];
  in.read(reinterpret_cast<char*>(buf), sizeof(T));
  T v = 0;
  for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
  return v;
}

static void write_f64_le(std::ostream& out, double d) {
  uint64_t bits;
  std::memcpy(&bits, &d, sizeof bits);
  write_le<uint64_t>(out, bits);
}

static double read_f64_le(std::istream& in) {
  uint64_t bits = read_le<uint64_t>(in);
  double d;
  std::memcpy(&d, &bits, sizeof d);
  return d;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  json header;
  header["tensors"] = json::array();
  uint64_t offset = 0;
  for (const auto& [name, tensor] : ckpt.tensors) {
    json entry;
    entry["name"] = name;
    entry["shape"] = tensor.shape();
    entry["offset"] = offset;
    header["tensors"].push_back(entry);
    offset += tensor.numel() * sizeof(double);
  }
  header["meta"] = ckpt.meta;
  std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::DataError, "cannot write checkpoint: " + path);
  out.write(kMagic, 4);
  write_le<uint32_t>(out, kCheckpointVersion);
  write_le<uint64_t>(out, header_text.size());
  out.write(header_text.data(), static_cast<long>(header_text.size()));
  for (const auto& [name, tensor] : ckpt.tensors)
    for (double d : tensor.value()) write_f64_le(out, d);
  if (!out) throw Error(ErrorKind::DataError, "checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::DataError, "cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw Error(ErrorKind::BadCheckpoint, "bad checkpoint magic");
  uint32_t version = read_le<uint32_t>(in);
  if (version != kCheckpointVersion)
    throw Error(ErrorKind::BadCheckpoint,
                "unsupported checkpoint version " + std::to_string(version));
  uint64_t header_len = read_le<uint64_t>(in);
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<long>(header_len));
  if (!in) throw Error(ErrorKind::BadCheckpoint, "truncated checkpoint header");
  json header = json::parse(header_text, nullptr, false);
  if (header.is_discarded() || !header.contains("tensors"))
    throw Error(ErrorKind::BadCheckpoint, "malformed checkpoint header");

  Checkpoint ckpt;
  if (header.contains("meta"))
    for (auto& [k, v] : header["meta"].items()) ckpt.meta[k] = v.get<std::string>();

  std::streampos payload_start = in.tellg();
  for (const auto& entry : header["tensors"]) {
    std::string name = entry["name"].get<std::string>();
    std::vector<size_t> shape = entry["shape"].get<std::vector<size_t>>();
    uint64_t offset = entry["offset"].get<uint64_t>();
    size_t count = 1;
    for (size_t d : shape) count *= d;
    in.seekg(payload_start + static_cast<std::streamoff>(offset));
    std::vector<double> values(count);
    for (size_t i = 0; i < count; ++i) values[i] = read_f64_le(in);
    if (!in) throw Error(ErrorKind::BadCheckpoint, "truncated checkpoint payload");
    ckpt.tensors.emplace(name, Tensor::parameter(std::move(shape), std::move(values)));
  }
  return ckpt;
}

}  // namespace mmpt
