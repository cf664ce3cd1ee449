#include "spms/generators.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>

namespace spms {

std::vector<u64> generate_input(const std::string& kind, u64 n, u64 seed) {
  Rng rng(mix_seed(seed, 0x1234abcdu));
  std::vector<u64> v(n);
  if (kind == "uniform" || kind == "sorted" || kind == "reverse") {
    for (u64& x : v) x = rng.next();
    if (kind != "uniform") std::sort(v.begin(), v.end());
    if (kind == "reverse") std::reverse(v.begin(), v.end());
  } else if (kind == "few-distinct") {
    u64 pool[8];
    for (u64& x : pool) x = rng.next();
    for (u64& x : v) x = pool[rng.below(8)];
  } else {
    SPMS_CHECK(false, "unknown input kind: " + kind);
  }
  return v;
}

std::vector<u64> read_value_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  SPMS_CHECK(f.good(), "cannot open " + path);
  std::vector<u64> v;
  if (path.ends_with(".txt")) {
    u64 x;
    while (f >> x) v.push_back(x);
    SPMS_CHECK(f.eof(), "malformed decimal value in " + path);
  } else if (path.ends_with(".bin")) {
    std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    SPMS_CHECK(bytes.size() % 8 == 0, "binary input is not a whole number of 64-bit words");
    v.resize(bytes.size() / 8);
    for (u64 i = 0; i < v.size(); ++i) {
      u64 x = 0;
      for (int k = 7; k >= 0; --k) x = (x << 8) | static_cast<u8>(bytes[i * 8 + k]);
      v[i] = x;
    }
  } else {
    SPMS_CHECK(false, "unknown value-file extension (want .bin or .txt): " + path);
  }
  return v;
}

void write_value_file(const std::string& path, const std::vector<u64>& values) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  SPMS_CHECK(f.good(), "cannot open " + path + " for writing");
  if (path.ends_with(".txt")) {
    for (u64 x : values) f << x << '\n';
  } else if (path.ends_with(".bin")) {
    std::vector<char> bytes(values.size() * 8);
    for (u64 i = 0; i < values.size(); ++i)
      for (int k = 0; k < 8; ++k)
        bytes[i * 8 + static_cast<u64>(k)] = static_cast<char>((values[i] >> (8 * k)) & 0xff);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  } else {
    SPMS_CHECK(false, "unknown value-file extension (want .bin or .txt): " + path);
  }
  f.flush();
  SPMS_CHECK(f.good(), "write failed: " + path);
}

}  // namespace spms
