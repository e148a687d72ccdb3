#pragma once

#include <string>

#include "vsr/tensor.hpp"

namespace vsr {

// RTEN tensor file: magic "RTEN", little-endian u32 rank, rank u32 dims, then
// product(dims) little-endian IEEE-754 f32 values. Values round through f32 on
// save and widen to f64 on load.
void save_rten(const std::string& path, const Tensor& t);
Tensor load_rten(const std::string& path);

// Writes content to a temp file in the same directory and renames it over
// `path`, so readers never observe a partial file.
void write_file_atomic(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

}  // namespace vsr
