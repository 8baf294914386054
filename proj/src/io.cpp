#include "dst2r/io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>

namespace dst2r {

static_assert(std::endian::native == std::endian::little,
              "dten i/o assumes a little-endian host");
static_assert(sizeof(double) == 8 && std::numeric_limits<double>::is_iec559,
              "dten i/o assumes ieee-754 binary64");

namespace {
constexpr char kMagic[5] = {'D', 'T', 'E', 'N', '1'};
}

void write_dten(const std::string& path, const DenseTensor& t) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw io_error("write_dten: cannot open " + path);
  f.write(kMagic, sizeof(kMagic));
  const std::uint32_t order = static_cast<std::uint32_t>(t.order());
  f.write(reinterpret_cast<const char*>(&order), sizeof(order));
  for (std::size_t d : t.shape().dims()) {
    const std::uint32_t e = static_cast<std::uint32_t>(d);
    f.write(reinterpret_cast<const char*>(&e), sizeof(e));
  }
  f.write(reinterpret_cast<const char*>(t.data().data()),
          static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!f) throw io_error("write_dten: short write to " + path);
}

DenseTensor read_dten(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("read_dten: cannot open " + path);
  char magic[sizeof(kMagic)];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw io_error("read_dten: bad magic in " + path);
  std::uint32_t order = 0;
  f.read(reinterpret_cast<char*>(&order), sizeof(order));
  if (!f || order == 0) throw io_error("read_dten: bad order in " + path);
  std::vector<std::size_t> dims(order);
  for (std::uint32_t k = 0; k < order; ++k) {
    std::uint32_t e = 0;
    f.read(reinterpret_cast<char*>(&e), sizeof(e));
    if (!f || e == 0) throw io_error("read_dten: bad extent in " + path);
    dims[k] = e;
  }
  DenseTensor t((Shape(dims)));
  f.read(reinterpret_cast<char*>(t.data().data()),
         static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (static_cast<std::size_t>(f.gcount()) != t.size() * sizeof(double))
    throw io_error("read_dten: truncated data in " + path);
  return t;
}

}  // namespace dst2r
