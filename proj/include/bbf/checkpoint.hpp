#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "bbf/common.hpp"

// Binary checkpoint container. One file holds any number of named typed
// arrays; the trainer stores whole run states in it and ParameterSet
// checkpoints are just the parameter subset.
//
// Layout (little-endian, no padding):
//   magic   "BBFC" (4 bytes)
//   u32     format version (currently 1)
//   u32     entry count
//   entries (manifest), repeated:
//     u16   name length, then that many name bytes
//     u8    dtype: 0=f32, 1=f64, 2=i64, 3=u8
//     u8    ndim, then ndim i64 dims
//   payloads, one per entry in manifest order: numel * dtype-size bytes,
//   row-major, no alignment.
//
// The format is stable: readers must accept version 1 files indefinitely.

namespace bbf::ckpt {

enum class Dtype : uint8_t { f32 = 0, f64 = 1, i64 = 2, u8 = 3 };

size_t dtype_size(Dtype d);

struct Entry {
  std::string name;
  Dtype dtype = Dtype::f32;
  Shape shape;
  std::vector<unsigned char> bytes;
};

/// Collects entries in memory, writes the file on save().
class Writer {
 public:
  void add_f32(const std::string& name, Shape shape, const float* data);
  void add_f64(const std::string& name, Shape shape, const double* data);
  void add_i64(const std::string& name, Shape shape, const int64_t* data);
  void add_u8(const std::string& name, Shape shape, const uint8_t* data);
  void add_scalar_i64(const std::string& name, int64_t v) { add_i64(name, {1}, &v); }
  void add_scalar_u64(const std::string& name, uint64_t v) {
    const int64_t as_signed = static_cast<int64_t>(v);
    add_i64(name, {1}, &as_signed);
  }
  void add_scalar_f64(const std::string& name, double v) { add_f64(name, {1}, &v); }

  /// Writes atomically: a temp file next to `path`, then rename.
  void save(const std::string& path) const;

 private:
  void add_raw(const std::string& name, Dtype dtype, Shape shape, const void* data);
  std::vector<Entry> entries_;
  std::unordered_map<std::string, size_t> index_;
};

/// Loads a whole file into memory and serves typed views.
class Reader {
 public:
  explicit Reader(const std::string& path);

  bool contains(const std::string& name) const;
  const std::vector<std::string>& names() const { return order_; }
  const Entry& entry(const std::string& name) const;

  std::vector<float> f32(const std::string& name) const;
  std::vector<double> f64(const std::string& name) const;
  std::vector<int64_t> i64(const std::string& name) const;
  std::vector<uint8_t> u8(const std::string& name) const;
  int64_t scalar_i64(const std::string& name) const;
  uint64_t scalar_u64(const std::string& name) const {
    return static_cast<uint64_t>(scalar_i64(name));
  }
  double scalar_f64(const std::string& name) const;

 private:
  const Entry& typed(const std::string& name, Dtype want) const;
  std::vector<Entry> entries_;
  std::vector<std::string> order_;
  std::unordered_map<std::string, size_t> index_;
};

}  // namespace bbf::ckpt
