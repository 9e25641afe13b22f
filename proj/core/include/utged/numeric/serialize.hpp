#pragma once

#include <filesystem>
#include <iosfwd>
#include <string_view>

#include "utged/numeric/tensor.hpp"

// Binary tensor blocks, little-endian:
//   "UTGED1" | u32 count | count x (u32 name_len | name | u32 rank |
//   rank x u64 dim | numel x f64 value)
namespace utged::num {

inline constexpr std::string_view kTensorMagic = "UTGED1";

void write_tensors(std::ostream& out, const ParameterList& tensors);
ParameterList read_tensors(std::istream& in);

void save_tensors(const std::filesystem::path& path, const ParameterList& tensors);
ParameterList load_tensors(const std::filesystem::path& path);

// Copies values into `dst` from the entries of `src` named prefix + dst.name.
// Throws FormatError on a missing name or a shape mismatch.
void assign_by_name(const ParameterList& dst, const ParameterList& src, std::string_view prefix = "");

// Entries of `src` whose names start with prefix, with the prefix removed.
ParameterList strip_prefix(const ParameterList& src, std::string_view prefix);
ParameterList with_prefix(const ParameterList& src, std::string_view prefix);

}  // namespace utged::num
