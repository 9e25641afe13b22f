#include "utged/numeric/serialize.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_map>

#include "utged/error.hpp"

namespace utged::num {

namespace {

template <class U>
void put_le(std::ostream& out, U v) {
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes, sizeof(U));
}

template <class U>
U get_le(std::istream& in) {
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) throw FormatError("truncated tensor file");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

void write_tensors(std::ostream& out, const ParameterList& tensors) {
  out.write(kTensorMagic.data(), static_cast<std::streamsize>(kTensorMagic.size()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_le<std::uint64_t>(out, d);
    for (double v : t.values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw FormatError("failed writing tensor block");
}

ParameterList read_tensors(std::istream& in) {
  char magic[6];
  if (!in.read(magic, 6) || std::string_view(magic, 6) != kTensorMagic) {
    throw FormatError("not a UTGED1 tensor file");
  }
  const auto count = get_le<std::uint32_t>(in);
  ParameterList out;
  out.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = get_le<std::uint32_t>(in);
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw FormatError("truncated tensor name");
    const auto rank = get_le<std::uint32_t>(in);
    if (rank > 8) throw FormatError("implausible tensor rank for " + name);
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(get_le<std::uint64_t>(in));
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = std::bit_cast<double>(get_le<std::uint64_t>(in));
    out.push_back({std::move(name), Tensor::from(std::move(shape), std::move(values))});
  }
  return out;
}

void save_tensors(const std::filesystem::path& path, const ParameterList& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  write_tensors(out, tensors);
}

ParameterList load_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_tensors(in);
}

void assign_by_name(const ParameterList& dst, const ParameterList& src, std::string_view prefix) {
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const auto& t : src) by_name[t.name] = &t.tensor;
  for (const auto& [name, t] : dst) {
    const std::string key = std::string(prefix) + name;
    auto it = by_name.find(key);
    if (it == by_name.end()) throw FormatError("tensor '" + key + "' missing");
    if (it->second->shape() != t.shape()) {
      throw FormatError("tensor '" + key + "' has shape " + shape_to_string(it->second->shape()) + ", expected " +
                        shape_to_string(t.shape()));
    }
    auto src_values = it->second->values();
    auto dst_values = Tensor(t).values();
    std::copy(src_values.begin(), src_values.end(), dst_values.begin());
  }
}

ParameterList strip_prefix(const ParameterList& src, std::string_view prefix) {
  ParameterList out;
  for (const auto& t : src) {
    if (t.name.starts_with(prefix)) out.push_back({t.name.substr(prefix.size()), t.tensor});
  }
  return out;
}

ParameterList with_prefix(const ParameterList& src, std::string_view prefix) {
  ParameterList out;
  for (const auto& t : src) out.push_back({std::string(prefix) + t.name, t.tensor});
  return out;
}

}  // namespace utged::num
