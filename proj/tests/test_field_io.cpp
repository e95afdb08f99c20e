#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "bodil/field_io.hpp"
#include "bodil/rng.hpp"

using namespace bodil;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/bodil_io_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

} // namespace

TEST_CASE("field files round trip bit-exactly") {
  TempFile tmp("roundtrip.field");
  RawField out;
  out.shape = {3, 4, 5};
  out.axes = {"t", "y", "x"};
  RngStream rng(11, StreamPurpose::Scratch);
  out.values.resize(60);
  for (double& v : out.values) v = rng.normal() * 1e3;
  // values that straddle formatting pitfalls
  out.values[0] = -0.0;
  out.values[1] = 1e-300;
  out.values[2] = -1.7976931348623157e308;
  out.values[3] = 5e-324;

  write_field_file(tmp.path, out);
  RawField in = read_field_file(tmp.path);
  CHECK(in.shape == out.shape);
  CHECK(in.axes == out.axes);
  REQUIRE(in.values.size() == out.values.size());
  for (size_t i = 0; i < in.values.size(); i++) {
    // bit equality, not numeric equality: distinguishes -0.0 from 0.0
    CHECK(std::memcmp(&in.values[i], &out.values[i], sizeof(double)) == 0);
  }
}

TEST_CASE("the header line is one-line JSON with the agreed keys") {
  TempFile tmp("header.field");
  RawField out;
  out.shape = {2, 3};
  out.axes = {"i", "j"};
  out.values = {1, 2, 3, 4, 5, 6};
  write_field_file(tmp.path, out);

  std::ifstream f(tmp.path, std::ios::binary);
  std::string header;
  std::getline(f, header);
  CHECK(header.find("\"shape\":[2,3]") != std::string::npos);
  CHECK(header.find("\"dtype\":\"f64\"") != std::string::npos);
  CHECK(header.find("\"order\":\"row-major\"") != std::string::npos);
  CHECK(header.find("\"axes\":[\"i\",\"j\"]") != std::string::npos);

  // payload starts right after the newline and is exactly 6 doubles
  std::vector<char> rest((std::istreambuf_iterator<char>(f)),
                         std::istreambuf_iterator<char>());
  CHECK(rest.size() == 6 * sizeof(double));
}

TEST_CASE("grid-attached fields persist axis names") {
  TempFile tmp("gridfield.field");
  Field f(make_grid_ptr({{"t", 1.0, 2, false}, {"x", 1.0, 3, true}}));
  f.values = {0, 1, 2, 3, 4, 5};
  write_field_file(tmp.path, f);
  RawField in = read_field_file(tmp.path);
  CHECK(in.shape == std::vector<int>{2, 3});
  CHECK(in.axes == std::vector<std::string>{"t", "x"});
  CHECK(in.values == std::vector<double>{0, 1, 2, 3, 4, 5});
}

TEST_CASE("matrix convenience writes [rows, cols] with i,j axes") {
  TempFile tmp("matrix.field");
  write_matrix_field(tmp.path, 2, 2, {1.0, 0.5, 0.5, 2.0});
  RawField in = read_field_file(tmp.path);
  CHECK(in.shape == std::vector<int>{2, 2});
  CHECK(in.axes == std::vector<std::string>{"i", "j"});
  CHECK(in.values[1] == 0.5);
}

TEST_CASE("malformed files are rejected with specific errors") {
  TempFile tmp("bad.field");

  SUBCASE("truncated payload") {
    RawField out;
    out.shape = {4};
    out.axes = {"x"};
    out.values = {1, 2, 3, 4};
    write_field_file(tmp.path, out);
    // chop the last 8 bytes off
    std::ifstream in(tmp.path, std::ios::binary);
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    std::ofstream cut(tmp.path, std::ios::binary | std::ios::trunc);
    cut.write(all.data(), std::streamsize(all.size() - 8));
    cut.close();
    CHECK_THROWS_AS(read_field_file(tmp.path), std::runtime_error);
  }

  SUBCASE("trailing bytes") {
    RawField out;
    out.shape = {2};
    out.axes = {"x"};
    out.values = {1, 2};
    write_field_file(tmp.path, out);
    std::ofstream app(tmp.path, std::ios::binary | std::ios::app);
    double extra = 9.0;
    app.write(reinterpret_cast<const char*>(&extra), sizeof(extra));
    app.close();
    CHECK_THROWS_AS(read_field_file(tmp.path), std::runtime_error);
  }

  SUBCASE("wrong dtype") {
    std::ofstream f(tmp.path, std::ios::binary);
    f << R"({"shape":[1],"dtype":"f32","order":"row-major","axes":["x"]})" << "\n";
    float v = 1.0f;
    f.write(reinterpret_cast<const char*>(&v), sizeof(v));
    f.close();
    CHECK_THROWS_AS(read_field_file(tmp.path), std::runtime_error);
  }

  SUBCASE("header is not JSON") {
    std::ofstream f(tmp.path, std::ios::binary);
    f << "not json at all\n";
    f.close();
    CHECK_THROWS_AS(read_field_file(tmp.path), std::runtime_error);
  }

  SUBCASE("missing file") {
    CHECK_THROWS_AS(read_field_file("/tmp/bodil_io_definitely_absent.field"),
                    std::runtime_error);
  }
}
