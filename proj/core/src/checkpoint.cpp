#include "htan/checkpoint.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <istream>
#include <ostream>

#include "htan/errors.hpp"

namespace htan {

namespace {

template <class U>
void put_le(std::ostream& out, U v) {
  std::array<char, sizeof(U)> buf{};
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(buf.data(), buf.size());
}

template <class U>
U get_le(std::istream& in, const char* what) {
  std::array<unsigned char, sizeof(U)> buf{};
  in.read(reinterpret_cast<char*>(buf.data()), buf.size());
  if (!in) throw FormatError(std::string("truncated container while reading ") + what);
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void write_container(std::ostream& out, const TensorBundle& bundle) {
  out.write(kContainerMagic.data(), static_cast<std::streamsize>(kContainerMagic.size()));
  put_le<std::uint32_t>(out, kContainerVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(bundle.size()));
  for (const auto& [name, t] : bundle) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_le<std::uint64_t>(out, d);
    for (double v : t.values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw FormatError("failed writing tensor container");
}

TensorBundle read_container(std::istream& in) {
  std::string magic(kContainerMagic.size(), '\0');
  in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (!in || magic != kContainerMagic) throw FormatError("bad magic string: not an HTANSPD container");
  const auto version = get_le<std::uint32_t>(in, "format version");
  if (version != kContainerVersion) {
    throw FormatError("unsupported format version " + std::to_string(version) + " (expected " +
                      std::to_string(kContainerVersion) + ")");
  }
  const auto count = get_le<std::uint32_t>(in, "tensor count");
  TensorBundle bundle;
  bundle.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto name_len = get_le<std::uint32_t>(in, "name length");
    if (name_len > (1u << 20)) throw FormatError("implausible tensor name length " + std::to_string(name_len));
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw FormatError("truncated container while reading tensor name");
    const auto rank = get_le<std::uint32_t>(in, "rank");
    if (rank == 0 || rank > 8) throw FormatError("tensor '" + name + "' has unsupported rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(get_le<std::uint64_t>(in, "dimension"));
    for (auto d : shape) {
      if (d == 0 || d > (1ull << 32)) throw FormatError("tensor '" + name + "' has invalid dimension");
    }
    std::vector<double> values(shape_size(shape));
    for (auto& v : values) v = std::bit_cast<double>(get_le<std::uint64_t>(in, "tensor values"));
    bundle.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
  }
  return bundle;
}

void save_container(const std::filesystem::path& path, const TensorBundle& bundle) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::ios_base::failure("cannot open " + path.string() + " for writing");
  write_container(out, bundle);
}

TensorBundle load_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::ios_base::failure("cannot open " + path.string());
  return read_container(in);
}

const Tensor& find_tensor(const TensorBundle& bundle, std::string_view name) {
  for (const auto& nt : bundle) {
    if (nt.name == name) return nt.tensor;
  }
  throw FormatError("missing tensor '" + std::string(name) + "'");
}

}  // namespace htan
