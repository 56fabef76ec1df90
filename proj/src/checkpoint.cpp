// Checkpoint layout (all integers little-endian):
//   8 bytes  magic "STCDHAE\0"
//   u32      format version (1)
//   u32 x 8  mask_size, channels, box_dims, latent, box_hidden, branches,
//            learn_uncertainty, number of conv layers
//   u32 x L  conv channels
//   u64      parameter count
//   f64 x n  parameters in declaration order (log-variances last)
#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "stclust/dhae.hpp"

namespace stclust {

namespace {

constexpr std::array<char, 8> kMagic{'S', 'T', 'C', 'D', 'H', 'A', 'E', '\0'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::ostream& os, T v) {
    std::array<unsigned char, sizeof(T)> bytes{};
    std::memcpy(bytes.data(), &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
    std::array<unsigned char, sizeof(T)> bytes{};
    if (!is.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) throw Error("checkpoint: truncated file");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    T v;
    std::memcpy(&v, bytes.data(), sizeof(T));
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const DhaeParams& p) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("checkpoint: cannot open '" + path + "' for writing");
    const DhaeConfig& c = p.config();
    os.write(kMagic.data(), kMagic.size());
    put_le<std::uint32_t>(os, kVersion);
    for (int v : {c.mask_size, c.channels, c.box_dims, c.latent, c.box_hidden, static_cast<int>(c.branches),
                  c.learn_uncertainty ? 1 : 0, static_cast<int>(c.conv_channels.size())})
        put_le<std::uint32_t>(os, static_cast<std::uint32_t>(v));
    for (int ch : c.conv_channels) put_le<std::uint32_t>(os, static_cast<std::uint32_t>(ch));
    put_le<std::uint64_t>(os, p.values().size());
    for (double v : p.values()) put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
    if (!os) throw Error("checkpoint: write failed for '" + path + "'");
}

DhaeParams load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("checkpoint: cannot open '" + path + "'");
    std::array<char, 8> magic{};
    if (!is.read(magic.data(), magic.size()) || magic != kMagic) throw Error("checkpoint: bad magic in '" + path + "'");
    const auto version = get_le<std::uint32_t>(is);
    if (version != kVersion) throw Error("checkpoint: unsupported version " + std::to_string(version));
    DhaeConfig c;
    c.mask_size = static_cast<int>(get_le<std::uint32_t>(is));
    c.channels = static_cast<int>(get_le<std::uint32_t>(is));
    c.box_dims = static_cast<int>(get_le<std::uint32_t>(is));
    c.latent = static_cast<int>(get_le<std::uint32_t>(is));
    c.box_hidden = static_cast<int>(get_le<std::uint32_t>(is));
    const auto branches = get_le<std::uint32_t>(is);
    if (branches > 2) throw Error("checkpoint: bad branch mode");
    c.branches = static_cast<Branches>(branches);
    c.learn_uncertainty = get_le<std::uint32_t>(is) != 0;
    const auto layers = get_le<std::uint32_t>(is);
    if (layers == 0 || layers > 16) throw Error("checkpoint: bad conv layer count");
    c.conv_channels.clear();
    for (std::uint32_t i = 0; i < layers; ++i) c.conv_channels.push_back(static_cast<int>(get_le<std::uint32_t>(is)));
    DhaeParams p(c);
    const auto n = get_le<std::uint64_t>(is);
    if (n != p.values().size()) throw Error("checkpoint: parameter count does not match config");
    for (double& v : p.values()) v = std::bit_cast<double>(get_le<std::uint64_t>(is));
    return p;
}

}  // namespace stclust
