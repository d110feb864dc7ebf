// Copyright 2026 The ECCT Simulator Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecct/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace ecct::nn {
namespace {

constexpr const char* kMagic = "ECCTNET 1";

std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffULL) << (8 * (7 - i));
    return r;
  }
  return v;
}

void put_u64(std::ostream& out, std::uint64_t v) {
  v = to_le(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint64_t get_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw InputError("truncated checkpoint");
  return to_le(v);
}

}  // namespace

void write_le_doubles(std::ostream& out, std::span<const double> values) {
  for (double d : values) put_u64(out, std::bit_cast<std::uint64_t>(d));
}

void read_le_doubles(std::istream& in, std::span<double> values) {
  for (double& d : values) d = std::bit_cast<double>(get_u64(in));
}

void write_checkpoint(std::ostream& out, const DenseNetd& net) {
  out << kMagic << '\n' << net.input_dim() << ' ' << net.depth();
  for (const auto& l : net.layers()) out << ' ' << l.out() << ':' << to_string(l.activation);
  out << '\n';
  const VectorXd flat = net.serialize_params();
  put_u64(out, static_cast<std::uint64_t>(flat.size()));
  write_le_doubles(out, std::span<const double>(flat.data(), static_cast<std::size_t>(flat.size())));
}

void write_checkpoint(const std::filesystem::path& path, const DenseNetd& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  write_checkpoint(out, net);
}

DenseNetd read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw InputError("not a checkpoint file");
  if (!std::getline(in, line)) throw InputError("checkpoint header missing");
  std::istringstream header(line);
  Index input_dim = 0;
  std::size_t depth = 0;
  header >> input_dim >> depth;
  std::vector<LayerSpec> specs;
  for (std::size_t i = 0; i < depth; ++i) {
    std::string tok;
    header >> tok;
    const auto colon = tok.find(':');
    if (colon == std::string::npos) throw InputError("malformed layer descriptor '" + tok + "'");
    specs.push_back({static_cast<Index>(std::stoll(tok.substr(0, colon))),
                     activation_from_string(tok.substr(colon + 1))});
  }
  DenseNetd net(input_dim, specs);
  const std::uint64_t count = get_u64(in);
  if (count != static_cast<std::uint64_t>(net.parameter_count()))
    throw ShapeError("checkpoint parameter count does not match its architecture");
  std::vector<double> flat(count);
  read_le_doubles(in, flat);
  net.deserialize_params(std::span<const double>(flat));
  return net;
}

DenseNetd read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace ecct::nn
