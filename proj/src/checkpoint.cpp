#include "langtrack/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace langtrack {

namespace {

constexpr char kMagic[8] = {'L', 'T', 'C', 'K', 'P', 'T', '0', '1'};

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f64_le(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64_le(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

void write_f32_le(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

float read_f32_le(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : entries)
    if (n == name) return &t;
  return nullptr;
}

void save_checkpoint(const std::string& path, const std::string& manifest,
                     const std::vector<std::pair<std::string, const Tensor*>>& entries,
                     bool float32) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os.write(kMagic, 8);
  write_u32(os, static_cast<std::uint32_t>(manifest.size()));
  os.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
  write_u32(os, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    os.put(float32 ? 1 : 0);
    write_u32(os, static_cast<std::uint32_t>(t->ndim()));
    for (int i = 0; i < t->ndim(); ++i)
      write_u32(os, static_cast<std::uint32_t>(t->dim(i)));
    for (std::int64_t i = 0; i < t->size(); ++i) {
      if (float32)
        write_f32_le(os, static_cast<float>((*t)[i]));
      else
        write_f64_le(os, (*t)[i]);
    }
  }
  if (!os) throw std::runtime_error("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error(path + " is not a weight checkpoint");
  Checkpoint ck;
  const std::uint32_t mlen = read_u32(is);
  ck.manifest.resize(mlen);
  is.read(ck.manifest.data(), mlen);
  const std::uint32_t count = read_u32(is);
  ck.entries.reserve(count);
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::uint32_t nlen = read_u32(is);
    std::string name(nlen, '\0');
    is.read(name.data(), nlen);
    const int dtype = is.get();
    const std::uint32_t ndim = read_u32(is);
    std::vector<int> shape(ndim);
    for (std::uint32_t i = 0; i < ndim; ++i)
      shape[i] = static_cast<int>(read_u32(is));
    Tensor t(shape);
    for (std::int64_t i = 0; i < t.size(); ++i)
      t[i] = dtype == 1 ? static_cast<double>(read_f32_le(is)) : read_f64_le(is);
    if (!is) throw std::runtime_error("checkpoint: truncated tensor " + name);
    ck.entries.emplace_back(std::move(name), std::move(t));
  }
  return ck;
}

}  // namespace langtrack
