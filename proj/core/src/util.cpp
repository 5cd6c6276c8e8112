#include "vpt/util.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace vpt {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot open " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& p, std::string_view contents) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + p.string());
  f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!f) throw IoError("short write to " + p.string());
}

void append_file(const std::filesystem::path& p, std::string_view contents) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary | std::ios::app);
  if (!f) throw IoError("cannot append " + p.string());
  f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
}

void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  put_le<std::uint64_t>(out, bits);
}

double get_f64(const char* p) {
  std::uint64_t bits = get_le<std::uint64_t>(p);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace vpt
