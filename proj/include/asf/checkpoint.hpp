/*
 * Copyright 2026 The asf Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "asf/common.hpp"
#include "asf/tensor.hpp"

namespace asf {

// Parameter checkpoint container.
//
//   magic "ASFW1"
//   u32   record count
//   per record:
//     u32   name length, then UTF-8 name bytes
//     u32   rank, then rank extents as u32
//     f32   values
//
// All integers and floats are little-endian. Values are stored as f32
// regardless of the in-memory scalar type.

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  check(is.good(), "checkpoint: truncated while reading ", what);
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(os, bits);
}

inline float get_f32_bits(std::uint32_t bits) {
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace detail

struct CheckpointRecord {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

inline constexpr char kCheckpointMagic[5] = {'A', 'S', 'F', 'W', '1'};

inline void save_checkpoint(const std::filesystem::path& path,
                            const std::vector<CheckpointRecord>& records) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    check(os.good(), "checkpoint: cannot open ", tmp, " for writing");
    os.write(kCheckpointMagic, 5);
    detail::put_u32(os, static_cast<std::uint32_t>(records.size()));
    for (const auto& rec : records) {
      detail::put_u32(os, static_cast<std::uint32_t>(rec.name.size()));
      os.write(rec.name.data(),
               static_cast<std::streamsize>(rec.name.size()));
      detail::put_u32(os, static_cast<std::uint32_t>(rec.shape.size()));
      for (const auto e : rec.shape) {
        detail::put_u32(os, static_cast<std::uint32_t>(e));
      }
      check(shape_numel(rec.shape) ==
                static_cast<std::int64_t>(rec.values.size()),
            "checkpoint: record ", rec.name, " shape/data mismatch");
      for (const float v : rec.values) detail::put_f32(os, v);
    }
    check(os.good(), "checkpoint: write to ", tmp, " failed");
  }
  std::filesystem::rename(tmp, path);
}

inline std::vector<CheckpointRecord> load_checkpoint(
    const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  check(is.good(), "checkpoint: cannot open ", path.string());
  char magic[5];
  is.read(magic, 5);
  check(is.good() && std::memcmp(magic, kCheckpointMagic, 5) == 0,
        "checkpoint: bad magic in ", path.string());
  const std::uint32_t count = detail::get_u32(is, "record count");
  std::vector<CheckpointRecord> records;
  records.reserve(count);
  for (std::uint32_t r = 0; r < count; ++r) {
    CheckpointRecord rec;
    const std::uint32_t name_len = detail::get_u32(is, "name length");
    rec.name.resize(name_len);
    is.read(rec.name.data(), name_len);
    check(is.good(), "checkpoint: truncated name");
    const std::uint32_t rank = detail::get_u32(is, "rank");
    check(rank <= 8, "checkpoint: implausible rank ", rank);
    std::int64_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint32_t e = detail::get_u32(is, "extent");
      rec.shape.push_back(static_cast<std::int64_t>(e));
      n *= e;
    }
    rec.values.resize(static_cast<std::size_t>(n));
    for (auto& v : rec.values) {
      v = detail::get_f32_bits(detail::get_u32(is, "value"));
    }
    records.push_back(std::move(rec));
  }
  return records;
}

template <typename R>
CheckpointRecord to_record(const std::string& name, const Tensor<R>& t) {
  CheckpointRecord rec;
  rec.name = name;
  rec.shape = t.shape;
  rec.values.resize(t.data.size());
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    rec.values[i] = static_cast<float>(t.data[i]);
  }
  return rec;
}

template <typename R>
void record_into(const CheckpointRecord& rec, Tensor<R>& t) {
  check(t.shape == rec.shape, "checkpoint: record ", rec.name, " has shape ",
        shape_str(rec.shape), ", expected ", shape_str(t.shape));
  for (std::size_t i = 0; i < rec.values.size(); ++i) {
    t.data[i] = static_cast<R>(rec.values[i]);
  }
}

inline std::map<std::string, const CheckpointRecord*> index_records(
    const std::vector<CheckpointRecord>& records) {
  std::map<std::string, const CheckpointRecord*> idx;
  for (const auto& r : records) idx[r.name] = &r;
  return idx;
}

}  // namespace asf
