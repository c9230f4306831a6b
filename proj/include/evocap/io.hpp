#pragma once

#include <filesystem>
#include <string>

#include "evocap/tensor.hpp"

// Raw row-major arrays with a JSON sidecar:
//   <stem>.f32 or <stem>.f64  +  <stem>.json {"shape":[N,d],"dtype":"f32","order":"row-major"}
// Little-endian IEEE-754 payload, no header.

namespace evocap::io {

enum class DType { f32, f64 };

// `stem` is the path without extension.
void write_array(const std::filesystem::path& stem, const Matrix& m, DType dtype);
// Reads <stem>.json and the payload it describes.
Matrix read_array(const std::filesystem::path& stem);
bool array_exists(const std::filesystem::path& stem);

// Accepts "x/y/name", "x/y/name.json", "x/y/name.f32" and returns "x/y/name".
std::filesystem::path array_stem(const std::filesystem::path& p);

std::string read_text(const std::filesystem::path& p);
// Writes atomically enough for our purposes: truncate + write + close.
void write_text(const std::filesystem::path& p, const std::string& text);

}  // namespace evocap::io
