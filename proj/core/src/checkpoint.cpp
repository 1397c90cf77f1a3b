#include "sseg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

namespace sseg {

namespace {

constexpr char kMagic[5] = {'S', 'S', 'E', 'G', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_i32(std::ostream& out, std::int32_t v) { write_u32(out, static_cast<std::uint32_t>(v)); }

void write_f32(std::ostream& out, float v) { write_u32(out, std::bit_cast<std::uint32_t>(v)); }

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw io_error("checkpoint truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::int32_t read_i32(std::istream& in) { return static_cast<std::int32_t>(read_u32(in)); }

float read_f32(std::istream& in) { return std::bit_cast<float>(read_u32(in)); }

}  // namespace

void save_checkpoint(const std::string& path, const UNetConfig& config,
                     const ParameterSet& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open checkpoint for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_i32(out, config.levels);
  write_i32(out, config.base_channels);
  write_i32(out, config.downsample == DownsampleMode::MaxPool ? 0 : 1);
  write_i32(out, config.num_classes);
  write_i32(out, config.in_channels);
  write_u32(out, static_cast<std::uint32_t>(params.count()));
  for (std::size_t i = 0; i < params.count(); ++i) {
    const auto& item = params.item(i);
    write_u32(out, static_cast<std::uint32_t>(item.name.size()));
    out.write(item.name.data(), static_cast<std::streamsize>(item.name.size()));
    write_u32(out, static_cast<std::uint32_t>(item.value.rank()));
    for (int d = 0; d < item.value.rank(); ++d) write_i32(out, item.value.dim(d));
    for (float v : item.value) write_f32(out, v);
  }
  if (!out) throw io_error("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open checkpoint: " + path);
  char magic[5];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw config_error("not a checkpoint file (bad magic): " + path);

  Checkpoint ckpt;
  ckpt.config.levels = read_i32(in);
  ckpt.config.base_channels = read_i32(in);
  const std::int32_t mode = read_i32(in);
  if (mode != 0 && mode != 1) throw config_error("checkpoint has invalid downsample mode");
  ckpt.config.downsample = mode == 0 ? DownsampleMode::MaxPool : DownsampleMode::StridedConv;
  ckpt.config.num_classes = read_i32(in);
  ckpt.config.in_channels = read_i32(in);
  validate(ckpt.config);

  const std::uint32_t records = read_u32(in);
  for (std::uint32_t r = 0; r < records; ++r) {
    const std::uint32_t name_len = read_u32(in);
    if (name_len > 4096) throw config_error("checkpoint parameter name too long");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw io_error("checkpoint truncated");
    const std::uint32_t rank = read_u32(in);
    if (rank == 0 || rank > 8) throw config_error("checkpoint parameter rank invalid");
    std::vector<int> shape(rank);
    std::size_t total = 1;
    for (auto& d : shape) {
      d = read_i32(in);
      if (d <= 0) throw config_error("checkpoint parameter dimension invalid");
      total *= static_cast<std::size_t>(d);
    }
    std::vector<float> data(total);
    for (auto& v : data) v = read_f32(in);
    ckpt.params.add(std::move(name), Tensor::from_data(std::move(shape), std::move(data)));
  }
  return ckpt;
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open file for hashing: " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<std::uint8_t>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (got < static_cast<std::streamsize>(sizeof(buf))) break;
  }
  return h;
}

}  // namespace sseg
