#include "evocap/io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "evocap/errors.hpp"

namespace evocap::io {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "array files are little-endian");

namespace {

const char* extension(DType d) { return d == DType::f32 ? ".f32" : ".f64"; }

fs::path with_suffix(const fs::path& stem, const char* ext) {
  fs::path p = stem;
  p += ext;
  return p;
}

}  // namespace

fs::path array_stem(const fs::path& p) {
  const auto ext = p.extension();
  if (ext == ".json" || ext == ".f32" || ext == ".f64") {
    fs::path s = p;
    s.replace_extension();
    return s;
  }
  return p;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw LoadError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot write " + p.string());
  out << text;
  if (!out) throw LoadError("short write to " + p.string());
}

void write_array(const fs::path& stem, const Matrix& m, DType dtype) {
  json side = {{"shape", {m.rows(), m.cols()}},
               {"dtype", dtype == DType::f32 ? "f32" : "f64"},
               {"order", "row-major"}};
  write_text(with_suffix(stem, ".json"), side.dump() + "\n");

  std::ofstream out(with_suffix(stem, extension(dtype)), std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot write " + with_suffix(stem, extension(dtype)).string());
  if (dtype == DType::f64) {
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  } else {
    std::vector<float> buf(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) buf[i] = static_cast<float>(m[i]);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw LoadError("short write to " + stem.string());
}

bool array_exists(const fs::path& stem) { return fs::exists(with_suffix(array_stem(stem), ".json")); }

Matrix read_array(const fs::path& path) {
  const fs::path stem = array_stem(path);
  json side;
  try {
    side = json::parse(read_text(with_suffix(stem, ".json")));
  } catch (const json::exception& e) {
    throw LoadError("bad sidecar for " + stem.string() + ": " + e.what());
  }
  if (!side.contains("shape") || !side["shape"].is_array() || side["shape"].size() != 2)
    throw LoadError("sidecar for " + stem.string() + " needs a 2-d shape");
  const auto rows = side["shape"][0].get<std::size_t>();
  const auto cols = side["shape"][1].get<std::size_t>();
  const std::string dtype = side.value("dtype", "f32");
  if (side.value("order", "row-major") != "row-major") throw LoadError(stem.string() + ": only row-major supported");
  DType dt;
  if (dtype == "f32") {
    dt = DType::f32;
  } else if (dtype == "f64") {
    dt = DType::f64;
  } else {
    throw LoadError(stem.string() + ": unsupported dtype " + dtype);
  }
  const fs::path payload = with_suffix(stem, extension(dt));
  const std::string bytes = read_text(payload);
  const std::size_t width = dt == DType::f32 ? sizeof(float) : sizeof(double);
  if (bytes.size() != rows * cols * width)
    throw LoadError(payload.string() + ": expected " + std::to_string(rows * cols * width) + " bytes, found " +
                    std::to_string(bytes.size()));
  Matrix m(rows, cols);
  if (dt == DType::f64) {
    std::memcpy(m.data(), bytes.data(), bytes.size());
  } else {
    for (std::size_t i = 0; i < m.size(); ++i) {
      float f;
      std::memcpy(&f, bytes.data() + i * sizeof(float), sizeof(float));
      m[i] = f;
    }
  }
  return m;
}

}  // namespace evocap::io
