#include "rtslab/diffnum/checkpoint.hpp"

#include <fstream>

#include "rtslab/binary_io.hpp"
#include "rtslab/errors.hpp"

namespace rtslab::diffnum {

void write_mlp(std::ostream& os, const Mlp& net) {
  io::BinaryWriter w(os);
  w.pod(static_cast<std::uint32_t>(net.layer_dims().size()));
  for (std::size_t d : net.layer_dims()) w.pod(static_cast<std::uint64_t>(d));
  w.pod(static_cast<std::uint8_t>(net.hidden_activation()));
  w.pod(static_cast<std::uint8_t>(net.output_activation()));
  for (const Layer& layer : net.layers()) {
    w.floats(layer.weight.data());
    w.floats(layer.bias.data());
  }
}

Mlp read_mlp(std::istream& is, const std::string& source) {
  io::BinaryReader r(is, source);
  const auto n_dims = r.pod<std::uint32_t>();
  if (n_dims < 2 || n_dims > 64) {
    throw FormatError(source + ": implausible layer count " + std::to_string(n_dims));
  }
  std::vector<std::size_t> dims;
  for (std::uint32_t i = 0; i < n_dims; ++i) {
    const auto d = r.pod<std::uint64_t>();
    if (d == 0 || d > (1u << 20)) throw FormatError(source + ": implausible layer width");
    dims.push_back(static_cast<std::size_t>(d));
  }
  const auto hidden = r.pod<std::uint8_t>();
  const auto output = r.pod<std::uint8_t>();
  if (hidden > 2 || output > 2) throw FormatError(source + ": unknown activation tag");
  std::vector<Layer> layers;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Layer layer{Tensor::matrix(dims[l], dims[l + 1]), Tensor({dims[l + 1]})};
    r.floats(layer.weight.data());
    r.floats(layer.bias.data());
    layers.push_back(std::move(layer));
  }
  return Mlp(std::move(dims), static_cast<Activation>(hidden), static_cast<Activation>(output),
             std::move(layers));
}

void save_checkpoint(const Mlp& net, const std::filesystem::path& path, std::string_view metadata) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  io::BinaryWriter w(os);
  w.bytes(kMlpMagic);
  w.pod(kMlpFormatVersion);
  w.string(metadata);
  write_mlp(os, net);
  if (!os) throw FormatError("failed writing " + path.string());
}

Mlp load_checkpoint(const std::filesystem::path& path, std::string* metadata) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  io::BinaryReader r(is, path.string());
  r.expect_magic(kMlpMagic);
  const auto version = r.pod<std::uint32_t>();
  if (version != kMlpFormatVersion) {
    throw FormatError(path.string() + ": checkpoint format version " + std::to_string(version) +
                      ", this build reads version " + std::to_string(kMlpFormatVersion));
  }
  std::string meta = r.string();
  if (metadata) *metadata = std::move(meta);
  return read_mlp(is, path.string());
}

}  // namespace rtslab::diffnum
