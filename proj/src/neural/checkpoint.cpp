#include "evoquer/neural/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace evoquer::neural {

namespace {

constexpr char kMagic[4] = {'E', 'V', 'Q', 'C'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in, const fs::path& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) fail(ErrorKind::format, "truncated checkpoint: " + path.string());
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const fs::path& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::runtime, "cannot write checkpoint: " + path.string());
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(checkpoint.header_json.size()));
  out.write(checkpoint.header_json.data(),
            static_cast<std::streamsize>(checkpoint.header_json.size()));
  put_u32(out, static_cast<std::uint32_t>(checkpoint.blocks.size()));
  for (const auto& [name, mat] : checkpoint.blocks) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, 2);
    put_u32(out, static_cast<std::uint32_t>(mat.rows()));
    put_u32(out, static_cast<std::uint32_t>(mat.cols()));
    for (int r = 0; r < mat.rows(); ++r)
      for (int c = 0; c < mat.cols(); ++c) {
        const double d = mat(r, c);
        out.write(reinterpret_cast<const char*>(&d), sizeof(double));
      }
  }
  if (!out) fail(ErrorKind::runtime, "short checkpoint write: " + path.string());
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::runtime, "cannot open checkpoint: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
    fail(ErrorKind::format, "bad checkpoint magic: " + path.string());
  const std::uint32_t version = get_u32(in, path);
  if (version != kVersion)
    fail(ErrorKind::format, "unsupported checkpoint version: " + path.string());

  Checkpoint checkpoint;
  const std::uint32_t header_len = get_u32(in, path);
  checkpoint.header_json.resize(header_len);
  in.read(checkpoint.header_json.data(), header_len);
  if (static_cast<std::uint32_t>(in.gcount()) != header_len)
    fail(ErrorKind::format, "truncated checkpoint header: " + path.string());

  const std::uint32_t n_blocks = get_u32(in, path);
  for (std::uint32_t i = 0; i < n_blocks; ++i) {
    const std::uint32_t name_len = get_u32(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (static_cast<std::uint32_t>(in.gcount()) != name_len)
      fail(ErrorKind::format, "truncated block name: " + path.string());
    const std::uint32_t rank = get_u32(in, path);
    if (rank != 2) fail(ErrorKind::format, "unsupported block rank: " + path.string());
    const std::uint32_t rows = get_u32(in, path);
    const std::uint32_t cols = get_u32(in, path);
    Mat mat(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c) {
        double d = 0.0;
        in.read(reinterpret_cast<char*>(&d), sizeof(double));
        if (in.gcount() != sizeof(double))
          fail(ErrorKind::format, "truncated block payload: " + path.string());
        mat(r, c) = d;
      }
    checkpoint.blocks[name] = std::move(mat);
  }
  return checkpoint;
}

}  // namespace evoquer::neural
