// SPDX-License-Identifier: Apache-2.0

#include "pcseg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <iomanip>
#include <limits>
#include <sstream>

#include "pcseg/dataset.hpp"
#include "pcseg/errors.hpp"

namespace pcseg {

namespace {

constexpr char kMagic[8] = {'P', 'C', 'S', 'E', 'G', 'C', 'K', 'P'};
constexpr std::size_t kHeaderBytes = 8 + 4 + 8;
constexpr std::size_t kTrailerBytes = 8;
// Sanity bound on any single count field; rejects garbage before allocating.
constexpr std::uint32_t kMaxCount = 1u << 26;

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::byte*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::byte>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::byte>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  std::vector<std::byte>& bytes() { return bytes_; }

 private:
  std::vector<std::byte> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::byte> bytes) : bytes_(bytes) {}

  std::span<const std::byte> take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw TruncatedFile("checkpoint ends unexpectedly");
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint32_t u32() {
    const auto b = take(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | std::to_integer<std::uint32_t>(b[i]);
    return v;
  }
  std::uint64_t u64() {
    const auto b = take(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | std::to_integer<std::uint64_t>(b[i]);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::uint32_t count() {
    const std::uint32_t n = u32();
    if (n > kMaxCount) throw CheckpointError("implausible count in checkpoint");
    return n;
  }
  std::string str() {
    const auto b = take(count());
    return std::string(reinterpret_cast<const char*>(b.data()), b.size());
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::byte> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t fnv1a64(std::span<const std::byte> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::byte b : bytes) {
    h ^= std::to_integer<std::uint64_t>(b);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::byte> serialize_checkpoint(const Checkpoint& ckpt) {
  const Architecture& arch = ckpt.params.arch;
  arch.validate();
  if (arch.output_dim != ckpt.catalog.size()) {
    throw CatalogMismatchError("output width does not match catalog size");
  }
  ByteWriter w;
  w.raw(kMagic, sizeof(kMagic));
  w.u32(kCheckpointVersion);
  w.u64(0);  // total size, patched below
  w.u32(arch.input_dim);
  w.u32(static_cast<std::uint32_t>(arch.encoder.size()));
  for (auto v : arch.encoder) w.u32(v);
  w.u32(static_cast<std::uint32_t>(arch.decoder.size()));
  for (auto v : arch.decoder) w.u32(v);
  w.u32(arch.output_dim);
  for (float s : arch.feature_scale) w.f32(s);

  w.u32(static_cast<std::uint32_t>(ckpt.catalog.size()));
  for (const auto& name : ckpt.catalog.names()) w.str(name);

  w.u32(ckpt.provenance.phase);
  w.u32(ckpt.provenance.epoch);
  w.u64(ckpt.provenance.seed);
  w.u64(ckpt.provenance.parent_checksum);

  w.u32(static_cast<std::uint32_t>(ckpt.params.tensors.size()));
  for (const Tensor& t : ckpt.params.tensors) {
    w.u32(t.rows);
    w.u32(t.cols);
  }
  for (const Tensor& t : ckpt.params.tensors) {
    for (float v : t.data) w.f32(v);
  }

  auto& bytes = w.bytes();
  const std::uint64_t total = bytes.size() + kTrailerBytes;
  for (int i = 0; i < 8; ++i) bytes[12 + i] = static_cast<std::byte>(total >> (8 * i));
  const std::uint64_t sum = fnv1a64(bytes);
  w.u64(sum);
  return std::move(w.bytes());
}

Checkpoint deserialize_checkpoint(std::span<const std::byte> bytes) {
  if (bytes.size() < sizeof(kMagic)) throw TruncatedFile("checkpoint shorter than its magic");
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw BadMagic("not a checkpoint file (bad magic)");
  }
  if (bytes.size() < kHeaderBytes) throw TruncatedFile("checkpoint header is incomplete");
  ByteReader header(bytes.subspan(sizeof(kMagic)));
  const std::uint32_t version = header.u32();
  if (version != kCheckpointVersion) {
    throw VersionMismatch("checkpoint version " + std::to_string(version) +
                          ", expected " + std::to_string(kCheckpointVersion));
  }
  const std::uint64_t total = header.u64();
  if (bytes.size() < total || total < kHeaderBytes + kTrailerBytes) {
    throw TruncatedFile("checkpoint has " + std::to_string(bytes.size()) +
                        " bytes, header declares " + std::to_string(total));
  }
  if (bytes.size() > total) throw ChecksumError("trailing bytes after checkpoint");
  const auto body = bytes.first(total - kTrailerBytes);
  ByteReader trailer(bytes.subspan(total - kTrailerBytes));
  if (trailer.u64() != fnv1a64(body)) throw ChecksumError("checkpoint checksum mismatch");

  ByteReader r(body.subspan(kHeaderBytes));
  Checkpoint ckpt{ModelParams{}, ClassCatalog::kitti_default(), Provenance{}};
  Architecture& arch = ckpt.params.arch;
  arch.input_dim = r.u32();
  arch.encoder.resize(r.count());
  for (auto& v : arch.encoder) v = r.u32();
  arch.decoder.resize(r.count());
  for (auto& v : arch.decoder) v = r.u32();
  arch.output_dim = r.u32();
  if (arch.input_dim > 4) throw CheckpointError("invalid input_dim in checkpoint");
  arch.feature_scale.resize(arch.input_dim);
  for (float& s : arch.feature_scale) s = r.f32();

  std::vector<std::string> names(r.count());
  for (auto& n : names) n = r.str();
  try {
    ckpt.catalog = ClassCatalog(std::move(names));
    arch.validate();
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("invalid checkpoint: ") + e.what());
  }

  ckpt.provenance.phase = r.u32();
  ckpt.provenance.epoch = r.u32();
  ckpt.provenance.seed = r.u64();
  ckpt.provenance.parent_checksum = r.u64();

  ckpt.params.tensors.resize(r.count());
  for (Tensor& t : ckpt.params.tensors) {
    t.rows = r.count();
    t.cols = r.count();
  }
  for (Tensor& t : ckpt.params.tensors) {
    t.data.resize(std::size_t{t.rows} * t.cols);
    for (float& v : t.data) v = r.f32();
  }
  if (r.remaining() != 0) throw CheckpointError("unexpected bytes before checksum");
  const ModelParams reference = init_params(arch, 0);
  for (std::size_t k = 0; k < reference.tensors.size(); ++k) {
    if (k >= ckpt.params.tensors.size() ||
        ckpt.params.tensors[k].rows != reference.tensors[k].rows ||
        ckpt.params.tensors[k].cols != reference.tensors[k].cols) {
      throw CheckpointError("tensor shapes do not match the architecture");
    }
  }
  if (ckpt.params.tensors.size() != reference.tensors.size()) {
    throw CheckpointError("tensor count does not match the architecture");
  }
  if (arch.output_dim != ckpt.catalog.size()) {
    throw CheckpointError("output width does not match catalog size");
  }
  return ckpt;
}

std::uint64_t checkpoint_checksum(const Checkpoint& ckpt) {
  const auto bytes = serialize_checkpoint(ckpt);
  ByteReader r(std::span<const std::byte>(bytes).last(kTrailerBytes));
  return r.u64();
}

std::string describe_checkpoint(const Checkpoint& ckpt) {
  const Architecture& a = ckpt.params.arch;
  std::ostringstream out;
  auto list = [&](const auto& v) {
    for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << v[i];
  };
  out << "format_version: " << kCheckpointVersion << "\n";
  out << "input_dim: " << a.input_dim << "\n";
  out << "encoder: ";
  list(a.encoder);
  out << "\ndecoder: ";
  list(a.decoder);
  out << "\noutput_dim: " << a.output_dim << "\n";
  out << "feature_scale: ";
  list(a.feature_scale);
  out << "\ncatalog: ";
  list(ckpt.catalog.names());
  out << "\nparameters: " << ckpt.params.parameter_count() << "\n";
  out << "phase: " << ckpt.provenance.phase << "\n";
  out << "epoch: " << ckpt.provenance.epoch << "\n";
  out << "seed: " << ckpt.provenance.seed << "\n";
  out << std::hex << std::setfill('0');
  out << "parent_checksum: " << std::setw(16) << ckpt.provenance.parent_checksum << "\n";
  out << "checksum: " << std::setw(16) << checkpoint_checksum(ckpt) << "\n";
  return out.str();
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_checkpoint(ckpt));
  std::filesystem::path sidecar = path;
  sidecar += ".txt";
  write_file_atomic(sidecar, describe_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file_bytes(path));
}

}  // namespace pcseg
