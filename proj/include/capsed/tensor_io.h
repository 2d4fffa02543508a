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

#ifndef CAPSED_TENSOR_IO_H_
#define CAPSED_TENSOR_IO_H_

#include <filesystem>
#include <iosfwd>
#include <stdexcept>

#include "capsed/tensor.h"

namespace capsed {

// Raised for malformed files of any of the repository's on-disk formats.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// CTSR layout: "CTSR", u8 version (1), u8 rank, rank x u32 LE dims, then
// float32 LE values in row-major order.
inline constexpr char kTensorMagic[4] = {'C', 'T', 'S', 'R'};
inline constexpr unsigned char kTensorVersion = 1;

void WriteTensor(std::ostream& out, const Tensor<float>& tensor);
Tensor<float> ReadTensor(std::istream& in);

void SaveTensor(const std::filesystem::path& path, const Tensor<float>& tensor);
Tensor<float> LoadTensor(const std::filesystem::path& path);

}  // namespace capsed

#endif  // CAPSED_TENSOR_IO_H_
