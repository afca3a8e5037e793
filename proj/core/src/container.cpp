#include "trident/container.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace trident {
namespace {

void put_f32(std::ostream& out, float f) {
  auto bits = std::bit_cast<std::uint32_t>(f);
  const char bytes[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                         static_cast<char>((bits >> 16) & 0xff),
                         static_cast<char>((bits >> 24) & 0xff)};
  out.write(bytes, 4);
}

float get_f32(const unsigned char* p) {
  const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                             (static_cast<std::uint32_t>(p[1]) << 8) |
                             (static_cast<std::uint32_t>(p[2]) << 16) |
                             (static_cast<std::uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(bits);
}

}  // namespace

const ad::Matrix& Container::tensor(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.value;
  }
  throw std::runtime_error("container: missing tensor " + name);
}

ad::Matrix round_to_float(const ad::Matrix& m) {
  return m.cast<float>().cast<double>();
}

void write_container(const std::filesystem::path& path, const Container& c) {
  nlohmann::json header = c.header;
  header["format_version"] = kContainerFormatVersion;
  auto& list = header["tensors"] = nlohmann::json::array();
  for (const auto& t : c.tensors) {
    list.push_back({{"name", t.name}, {"shape", {t.value.rows(), t.value.cols()}}});
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << header.dump() << '\n';
  for (const auto& t : c.tensors) {
    for (Eigen::Index r = 0; r < t.value.rows(); ++r) {
      for (Eigen::Index col = 0; col < t.value.cols(); ++col) {
        put_f32(out, static_cast<float>(t.value(r, col)));
      }
    }
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Container read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty container");
  Container c;
  c.header = nlohmann::json::parse(line);
  if (c.header.value("format_version", 0) != kContainerFormatVersion) {
    throw std::runtime_error(path.string() + ": unsupported container format_version");
  }
  const auto list = c.header.at("tensors");
  c.header.erase("tensors");
  std::vector<unsigned char> buf;
  for (const auto& entry : list) {
    const auto rows = entry.at("shape").at(0).get<Eigen::Index>();
    const auto cols = entry.at("shape").at(1).get<Eigen::Index>();
    buf.resize(static_cast<std::size_t>(rows * cols) * 4);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
      throw std::runtime_error(path.string() + ": truncated tensor " +
                               entry.at("name").get<std::string>());
    }
    ad::Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows * cols; ++i) {
      m(i / cols, i % cols) = get_f32(buf.data() + 4 * i);
    }
    c.tensors.push_back({entry.at("name").get<std::string>(), std::move(m)});
  }
  return c;
}

}  // namespace trident
