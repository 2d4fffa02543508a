// Copyright 2026 The capsed Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "capsed/tensor_io.h"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

namespace capsed {
namespace {

void PutU32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> bytes = {
      static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
      static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(bytes.data(), 4);
}

std::uint32_t GetU32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) {
    throw FormatError("CTSR: truncated header");
  }
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
         (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

}  // namespace

void WriteTensor(std::ostream& out, const Tensor<float>& tensor) {
  out.write(kTensorMagic, 4);
  out.put(static_cast<char>(kTensorVersion));
  if (tensor.rank() > std::numeric_limits<std::uint8_t>::max()) {
    throw FormatError("CTSR: rank too large");
  }
  out.put(static_cast<char>(tensor.rank()));
  for (std::size_t d : tensor.shape()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) {
      throw FormatError("CTSR: dimension exceeds u32");
    }
    PutU32(out, static_cast<std::uint32_t>(d));
  }
  for (float x : tensor.data()) PutU32(out, std::bit_cast<std::uint32_t>(x));
  if (!out) throw FormatError("CTSR: write failed");
}

Tensor<float> ReadTensor(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kTensorMagic, 4) != 0) {
    throw FormatError("CTSR: bad magic");
  }
  const int version = in.get();
  if (version != kTensorVersion) {
    throw FormatError("CTSR: unsupported version " + std::to_string(version));
  }
  const int rank = in.get();
  if (rank == std::char_traits<char>::eof()) throw FormatError("CTSR: truncated header");
  Shape shape(static_cast<std::size_t>(rank));
  for (auto& d : shape) {
    d = GetU32(in);
    if (d == 0) throw FormatError("CTSR: zero dimension");
  }
  std::vector<float> data(NumElements(shape));
  for (auto& x : data) x = std::bit_cast<float>(GetU32(in));
  return Tensor<float>(std::move(shape), std::move(data));
}

void SaveTensor(const std::filesystem::path& path, const Tensor<float>& tensor) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  WriteTensor(out, tensor);
}

Tensor<float> LoadTensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::filesystem::filesystem_error(
      "cannot open tensor file", path, std::make_error_code(std::errc::no_such_file_or_directory));
  try {
    return ReadTensor(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace capsed
