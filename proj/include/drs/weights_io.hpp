#pragma once

// Binary weight files.
//
// Single net ("DRSW"):
//   magic "DRSW" | u32 version (LE) | u32 header length (LE) | UTF-8 header
//   | f64 LE parameters: per layer, weights row-major then biases.
// The header is "layers=13,32,1\nactivation=tanh\n".
//
// Bundle ("DRSC"): several nets plus a JSON metadata header:
//   magic "DRSC" | u32 version | u32 header length | JSON text | u32 net count
//   | that many DRSW records back to back.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "drs/error.hpp"
#include "drs/nn.hpp"

namespace drs {

inline constexpr std::uint32_t kWeightFormatVersion = 1;
inline constexpr std::uint32_t kBundleFormatVersion = 1;
inline constexpr std::uint32_t kMaxHeaderBytes = 1u << 20;

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b.data(), 4);
}

inline void put_f64(std::ostream& os, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b.data(), 8);
}

inline void read_exact(std::istream& is, char* dst, std::size_t n, const char* what) {
  is.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n)
    throw FormatError(std::string("weight file truncated while reading ") + what);
}

inline std::uint32_t get_u32(std::istream& is, const char* what) {
  std::array<unsigned char, 4> b{};
  read_exact(is, reinterpret_cast<char*>(b.data()), 4, what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline double get_f64(std::istream& is) {
  std::array<unsigned char, 8> b{};
  read_exact(is, reinterpret_cast<char*>(b.data()), 8, "parameters");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

inline void expect_magic(std::istream& is, const char (&magic)[5]) {
  std::array<char, 4> m{};
  read_exact(is, m.data(), 4, "magic");
  if (std::memcmp(m.data(), magic, 4) != 0)
    throw FormatError(std::string("bad magic, expected '") + magic + "'");
}

inline std::string get_header(std::istream& is) {
  const std::uint32_t len = get_u32(is, "header length");
  if (len > kMaxHeaderBytes) throw FormatError("header length " + std::to_string(len) + " is implausible");
  std::string header(len, '\0');
  read_exact(is, header.data(), len, "header");
  return header;
}

inline std::vector<int> parse_sizes(const std::string& text) {
  std::vector<int> sizes;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(item, &used);
      if (used != item.size() || v < 1) throw std::invalid_argument(item);
      sizes.push_back(v);
    } catch (const std::exception&) {
      throw FormatError("bad layer size '" + item + "' in weight header");
    }
  }
  return sizes;
}

}  // namespace detail

inline void write_weights(std::ostream& os, const DenseNet& net) {
  std::string header = "layers=";
  for (std::size_t i = 0; i < net.layer_sizes().size(); ++i) {
    if (i) header += ',';
    header += std::to_string(net.layer_sizes()[i]);
  }
  header += "\nactivation=" + to_string(net.hidden_activation()) + "\n";

  os.write("DRSW", 4);
  detail::put_u32(os, kWeightFormatVersion);
  detail::put_u32(os, static_cast<std::uint32_t>(header.size()));
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& layer : net.layers()) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) detail::put_f64(os, layer.weight(r, c));
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) detail::put_f64(os, layer.bias(i));
  }
}

inline DenseNet read_weights(std::istream& is) {
  detail::expect_magic(is, "DRSW");
  const std::uint32_t version = detail::get_u32(is, "version");
  if (version != kWeightFormatVersion)
    throw FormatError("unsupported weight file version " + std::to_string(version));
  const std::string header = detail::get_header(is);

  std::vector<int> sizes;
  std::string activation;
  std::stringstream hs(header);
  std::string line;
  while (std::getline(hs, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("malformed weight header line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "layers")
      sizes = detail::parse_sizes(value);
    else if (key == "activation")
      activation = value;
    else
      throw FormatError("unknown weight header key '" + key + "'");
  }
  if (sizes.size() < 2) throw FormatError("weight header lacks a valid layer list");
  Activation act;
  try {
    act = activation_from_string(activation);
  } catch (const ConfigError&) {
    throw FormatError("weight header has unknown activation '" + activation + "'");
  }

  DenseNet net = DenseNet::zeros(sizes, act);
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    auto& layer = net.layer(l);
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = detail::get_f64(is);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = detail::get_f64(is);
  }
  return net;
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  return os;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "' for reading");
  return is;
}

inline void expect_eof(std::istream& is) {
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after weight data");
}

}  // namespace detail

inline void save_weights(const DenseNet& net, const std::filesystem::path& path) {
  auto os = detail::open_out(path);
  write_weights(os, net);
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

inline DenseNet load_weights(const std::filesystem::path& path) {
  auto is = detail::open_in(path);
  DenseNet net = read_weights(is);
  detail::expect_eof(is);
  return net;
}

struct WeightBundle {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<DenseNet> nets;
};

inline void save_bundle(const WeightBundle& bundle, const std::filesystem::path& path) {
  auto os = detail::open_out(path);
  const std::string header = bundle.meta.dump();
  os.write("DRSC", 4);
  detail::put_u32(os, kBundleFormatVersion);
  detail::put_u32(os, static_cast<std::uint32_t>(header.size()));
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  detail::put_u32(os, static_cast<std::uint32_t>(bundle.nets.size()));
  for (const auto& net : bundle.nets) write_weights(os, net);
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

inline WeightBundle load_bundle(const std::filesystem::path& path) {
  auto is = detail::open_in(path);
  detail::expect_magic(is, "DRSC");
  const std::uint32_t version = detail::get_u32(is, "version");
  if (version != kBundleFormatVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  WeightBundle bundle;
  try {
    bundle.meta = nlohmann::json::parse(detail::get_header(is));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  const std::uint32_t count = detail::get_u32(is, "net count");
  if (count > 4096) throw FormatError("implausible net count " + std::to_string(count));
  for (std::uint32_t i = 0; i < count; ++i) bundle.nets.push_back(read_weights(is));
  detail::expect_eof(is);
  return bundle;
}

}  // namespace drs
