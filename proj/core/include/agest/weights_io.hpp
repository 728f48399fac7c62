#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "agest/network.hpp"

// Binary weight container. Layout (all integers little-endian):
//
//   "AGEW"                  4 bytes magic
//   version                 u32 (currently 1)
//   blob_count              u32
//   per blob:
//     name_length           u16
//     name                  UTF-8, "<layer>.weight" or "<layer>.bias"
//     rank                  u8
//     dims                  rank x u32
//     values                product(dims) x IEEE-754 float32, row-major
//
// Blobs are written in layer order, weight before bias.
namespace agest {

inline constexpr std::uint32_t kWeightFormatVersion = 1;

std::vector<std::uint8_t> serialize_weights(const NetworkGraph& graph);
void save_weights(const NetworkGraph& graph, std::ostream& out);
void save_weights(const NetworkGraph& graph, const std::string& path);

// Returns a copy of `spec` with every parameterized layer's blobs loaded.
// Every blob is checked against the spec before the result is returned.
NetworkGraph load_weights(const NetworkGraph& spec, std::span<const std::uint8_t> bytes);
NetworkGraph load_weights(const NetworkGraph& spec, std::istream& in);
NetworkGraph load_weights(const NetworkGraph& spec, const std::string& path);

}  // namespace agest
