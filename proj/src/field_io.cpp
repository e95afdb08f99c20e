#include "bodil/field_io.hpp"

#include <cstdint>
#include <fstream>

#include <nlohmann/json.hpp>

namespace bodil {

using nlohmann::json;

int64_t RawField::size() const {
  int64_t n = 1;
  for (int s : shape) n *= s;
  return n;
}

namespace {

void write_impl(const std::string& path, const std::vector<int>& shape,
                const std::vector<std::string>& axes, const std::vector<double>& values) {
  int64_t expected = 1;
  for (int s : shape) expected *= s;
  if (int64_t(values.size()) != expected)
    throw std::runtime_error("write_field_file: value count does not match shape for " + path);

  json header;
  header["shape"] = shape;
  header["dtype"] = "f64";
  header["order"] = "row-major";
  header["axes"] = axes;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("write_field_file: cannot open " + path);
  out << header.dump() << '\n';
  out.write(reinterpret_cast<const char*>(values.data()),
            std::streamsize(values.size() * sizeof(double)));
  if (!out) throw std::runtime_error("write_field_file: short write to " + path);
}

} // namespace

void write_field_file(const std::string& path, const RawField& raw) {
  write_impl(path, raw.shape, raw.axes, raw.values);
}

void write_field_file(const std::string& path, const Field& field) {
  std::vector<std::string> axes;
  for (const Axis& a : field.grid->axes()) axes.push_back(a.name);
  write_impl(path, field.grid->shape(), axes, field.values);
}

void write_matrix_field(const std::string& path, int rows, int cols,
                        const std::vector<double>& row_major_values) {
  write_impl(path, {rows, cols}, {"i", "j"}, row_major_values);
}

RawField read_field_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_field_file: cannot open " + path);

  std::string header_line;
  if (!std::getline(in, header_line))
    throw std::runtime_error("read_field_file: missing header line in " + path);

  json header;
  try {
    header = json::parse(header_line);
  } catch (const json::exception& e) {
    throw std::runtime_error("read_field_file: malformed JSON header in " + path + ": " + e.what());
  }

  if (!header.contains("dtype") || header["dtype"] != "f64")
    throw std::runtime_error("read_field_file: unsupported dtype in " + path + " (expected \"f64\")");
  if (!header.contains("order") || header["order"] != "row-major")
    throw std::runtime_error("read_field_file: unsupported order in " + path + " (expected \"row-major\")");
  if (!header.contains("shape") || !header["shape"].is_array())
    throw std::runtime_error("read_field_file: header lacks a shape array in " + path);

  RawField raw;
  for (const auto& v : header["shape"]) {
    int n = v.get<int>();
    if (n <= 0) throw std::runtime_error("read_field_file: non-positive shape entry in " + path);
    raw.shape.push_back(n);
  }
  if (header.contains("axes"))
    for (const auto& v : header["axes"]) raw.axes.push_back(v.get<std::string>());

  raw.values.resize(size_t(raw.size()));
  in.read(reinterpret_cast<char*>(raw.values.data()),
          std::streamsize(raw.values.size() * sizeof(double)));
  if (in.gcount() != std::streamsize(raw.values.size() * sizeof(double)))
    throw std::runtime_error("read_field_file: payload shorter than header shape in " + path);
  char extra;
  if (in.read(&extra, 1))
    throw std::runtime_error("read_field_file: trailing bytes after payload in " + path);
  return raw;
}

} // namespace bodil
