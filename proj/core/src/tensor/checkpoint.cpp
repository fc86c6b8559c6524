// SPDX-License-Identifier: Apache-2.0
#include "infillgen/tensor/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "infillgen/binary_io.hpp"
#include "infillgen/error.hpp"

namespace infillgen::tensor {
namespace {

constexpr char kMagic[8] = {'I', 'N', 'F', 'L', 'C', 'K', 'P', 'T'};
constexpr std::uint8_t kDtypeFloat64 = 1;

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw DataError("checkpoint: cannot open " + path.string() + " for writing");
  io::BinaryWriter out(file);
  out.bytes(kMagic, sizeof kMagic);
  out.u32(Checkpoint::kVersion);

  out.u32(static_cast<std::uint32_t>(checkpoint.metadata.size()));
  for (const auto& [key, value] : checkpoint.metadata) {
    out.string(key);
    out.string(value);
  }

  out.u32(static_cast<std::uint32_t>(checkpoint.tensors.size()));
  std::uint64_t offset = 0;
  for (const auto& [name, t] : checkpoint.tensors) {
    out.string(name);
    out.u8(kDtypeFloat64);
    out.u8(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) out.u64(d);
    out.u64(offset);
    offset += t.numel() * sizeof(double);
  }

  io::Fnv1a hash;
  for (const auto& [name, t] : checkpoint.tensors) {
    out.bytes(t.raw(), t.numel() * sizeof(double));
    hash.update(t.raw(), t.numel() * sizeof(double));
  }
  out.u64(hash.digest());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw DataError("checkpoint: cannot open " + path.string());
  io::BinaryReader in(file);
  char magic[sizeof kMagic];
  in.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw DataError("checkpoint: " + path.string() + " is not a checkpoint file");
  }
  const std::uint32_t version = in.u32();
  if (version != Checkpoint::kVersion) {
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  }

  Checkpoint checkpoint;
  const std::uint32_t meta_count = in.u32();
  for (std::uint32_t i = 0; i < meta_count; ++i) {
    std::string key = in.string();
    checkpoint.metadata[std::move(key)] = in.string();
  }

  struct Entry {
    std::string name;
    Shape shape;
  };
  std::vector<Entry> manifest;
  const std::uint32_t count = in.u32();
  std::uint64_t expected_offset = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    e.name = in.string();
    if (in.u8() != kDtypeFloat64) throw DataError("checkpoint: unsupported dtype in " + e.name);
    const std::uint8_t rank = in.u8();
    for (std::uint8_t d = 0; d < rank; ++d) e.shape.push_back(in.u64());
    if (in.u64() != expected_offset) throw DataError("checkpoint: bad payload offset for " + e.name);
    expected_offset += shape_numel(e.shape) * sizeof(double);
    manifest.push_back(std::move(e));
  }

  io::Fnv1a hash;
  for (Entry& e : manifest) {
    Tensor t(e.shape);
    in.bytes(t.raw(), t.numel() * sizeof(double));
    hash.update(t.raw(), t.numel() * sizeof(double));
    checkpoint.tensors.emplace_back(std::move(e.name), std::move(t));
  }
  if (in.u64() != hash.digest()) throw DataError("checkpoint: payload checksum mismatch");
  return checkpoint;
}

}  // namespace infillgen::tensor
