#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "trident/container.hpp"

using namespace trident;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / name; }

}  // namespace

TEST(Container, RoundTripAtFloatPrecision) {
  Container c;
  c.header = {{"kind", "test"}, {"note", "x"}};
  ad::Matrix a(2, 3);
  a << 1.0, -2.5, 1.0 / 3.0, 1e-8, 12345.678, 0.0;
  ad::Matrix b = ad::Matrix::Constant(1, 1, 0.1);
  c.tensors = {{"a", a}, {"b", b}};
  const auto path = temp_file("trident_container_test.bin");
  write_container(path, c);
  const auto r = read_container(path);
  EXPECT_EQ(r.header["kind"], "test");
  EXPECT_EQ(r.header["format_version"], kContainerFormatVersion);
  EXPECT_EQ(r.tensor("a"), round_to_float(a));
  EXPECT_EQ(r.tensor("b"), round_to_float(b));
  EXPECT_THROW(r.tensor("c"), std::runtime_error);
  // Writing what was read reproduces the file byte for byte.
  const auto again = temp_file("trident_container_test2.bin");
  write_container(again, r);
  std::ifstream x(path, std::ios::binary), y(again, std::ios::binary);
  EXPECT_EQ(std::string(std::istreambuf_iterator<char>(x), {}),
            std::string(std::istreambuf_iterator<char>(y), {}));
  fs::remove(path);
  fs::remove(again);
}

TEST(Container, RejectsTruncatedAndForeignFiles) {
  Container c;
  c.tensors = {{"w", ad::Matrix::Ones(4, 4)}};
  const auto path = temp_file("trident_container_trunc.bin");
  write_container(path, c);
  fs::resize_file(path, fs::file_size(path) - 5);
  EXPECT_THROW(read_container(path), std::runtime_error);
  std::ofstream(path, std::ios::trunc) << "{\"format_version\": 99, \"tensors\": []}\n";
  EXPECT_THROW(read_container(path), std::runtime_error);
  fs::remove(path);
  EXPECT_THROW(read_container(temp_file("trident_container_absent.bin")), std::runtime_error);
}

TEST(Container, RoundToFloatIsIdempotent) {
  ad::Matrix m(1, 2);
  m << 0.1, 1.0 / 7.0;
  const auto r = round_to_float(m);
  EXPECT_NE(r, m);
  EXPECT_EQ(round_to_float(r), r);
}
