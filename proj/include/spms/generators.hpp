#pragma once
// Deterministic input generation and simple input/output file formats for the
// benchmark driver. Generation is a pure function of (kind, n, seed), so any
// run can be reproduced from its report alone.

#include <string>
#include <vector>

#include "spms/common.hpp"

namespace spms {

// Kinds: "uniform" (independent 64-bit draws), "sorted" (uniform, ascending),
// "reverse" (uniform, descending), "few-distinct" (draws from a pool of eight
// values, heavy duplication). Unknown kinds fault.
std::vector<u64> generate_input(const std::string& kind, u64 n, u64 seed);

// Reads a ".bin" file (little-endian 64-bit words, length = file size / 8) or
// a ".txt" file (one decimal value per line); the extension picks the format.
std::vector<u64> read_value_file(const std::string& path);

// Writes in the format chosen by the extension, as above.
void write_value_file(const std::string& path, const std::vector<u64>& values);

}  // namespace spms
