#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include "rtslab/diffnum/mlp.hpp"

namespace rtslab::diffnum {

inline constexpr std::string_view kMlpMagic = "RTSL-MLP";
inline constexpr std::uint32_t kMlpFormatVersion = 1;

// Network body without file header; used when an Mlp is embedded in a larger record.
//   u32 n_dims | u64 dims[n_dims] | u8 hidden | u8 output | per layer: f32 W[in*out], f32 b[out]
void write_mlp(std::ostream& os, const Mlp& net);
Mlp read_mlp(std::istream& is, const std::string& source);

// Standalone checkpoint: magic | u32 version | string metadata | network body.
void save_checkpoint(const Mlp& net, const std::filesystem::path& path, std::string_view metadata = {});
Mlp load_checkpoint(const std::filesystem::path& path, std::string* metadata = nullptr);

}  // namespace rtslab::diffnum
