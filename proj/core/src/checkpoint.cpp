// SPDX-License-Identifier: Apache-2.0
#include "iclmimo/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "iclmimo/errors.hpp"

namespace iclmimo {

namespace {

constexpr char kMagic[8] = {'I', 'C', 'L', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kMaxRank = 8;

// The build targets little-endian hosts; raw writes are the wire format.
static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

template <typename T>
void put(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& is, const std::string& what) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw CheckpointError("checkpoint truncated reading " + what);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("checkpoint: cannot open " + path + " for writing");
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kVersion);
  for (const NamedTensor& t : tensors) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<std::uint32_t>(os, 2);
    put<std::uint64_t>(os, t.rows);
    put<std::uint64_t>(os, t.cols);
    os.write(reinterpret_cast<const char*>(t.value.data()),
             static_cast<std::streamsize>(t.value.size() * sizeof(double)));
  }
  if (!os) throw CheckpointError("checkpoint: write failed for " + path);
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError("checkpoint: bad magic in " + path);
  const auto version = get<std::uint32_t>(is, "version");
  if (version != kVersion)
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));

  std::vector<NamedTensor> tensors;
  while (true) {
    std::uint32_t name_len;
    is.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
    if (is.eof()) break;
    if (!is) throw CheckpointError("checkpoint truncated reading name length");
    NamedTensor t;
    t.name.resize(name_len);
    is.read(t.name.data(), name_len);
    if (!is) throw CheckpointError("checkpoint truncated reading name");
    const auto rank = get<std::uint32_t>(is, t.name + " rank");
    if (rank != 2 || rank > kMaxRank)
      throw CheckpointError("checkpoint: tensor " + t.name + " has unsupported rank " +
                            std::to_string(rank));
    t.rows = static_cast<std::size_t>(get<std::uint64_t>(is, t.name + " dim 0"));
    t.cols = static_cast<std::size_t>(get<std::uint64_t>(is, t.name + " dim 1"));
    if (t.rows == 0 || t.cols == 0)
      throw CheckpointError("checkpoint: tensor " + t.name + " has a zero dimension");
    t.value.resize(t.rows * t.cols);
    is.read(reinterpret_cast<char*>(t.value.data()),
            static_cast<std::streamsize>(t.value.size() * sizeof(double)));
    if (!is) throw CheckpointError("checkpoint truncated reading " + t.name + " payload");
    tensors.push_back(std::move(t));
  }
  return tensors;
}

void load_into_model(IclModel& model, const std::string& path) {
  const std::vector<NamedTensor> loaded = load_checkpoint(path);
  std::vector<NamedTensor>& params = model.params();
  for (NamedTensor& dst : params) {
    const NamedTensor* src = nullptr;
    for (const NamedTensor& t : loaded)
      if (t.name == dst.name) {
        src = &t;
        break;
      }
    if (src == nullptr)
      throw CheckpointError("checkpoint: missing tensor " + dst.name + " in " + path);
    if (src->rows != dst.rows || src->cols != dst.cols)
      throw ShapeError("checkpoint: tensor " + dst.name + " is " + std::to_string(src->rows) +
                       "x" + std::to_string(src->cols) + ", model expects " +
                       std::to_string(dst.rows) + "x" + std::to_string(dst.cols));
    dst.value = src->value;
  }
}

}  // namespace iclmimo
