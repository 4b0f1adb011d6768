#include "bbf/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace bbf::ckpt {

namespace {

constexpr char kMagic[4] = {'B', 'B', 'F', 'C'};
constexpr uint32_t kVersion = 1;

void put_bytes(std::ofstream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void put(std::ofstream& os, T v) {
  put_bytes(os, &v, sizeof(T));
}

template <typename T>
T take(std::ifstream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace

size_t dtype_size(Dtype d) {
  switch (d) {
    case Dtype::f32:
      return 4;
    case Dtype::f64:
      return 8;
    case Dtype::i64:
      return 8;
    case Dtype::u8:
      return 1;
  }
  throw std::logic_error("checkpoint: bad dtype");
}

void Writer::add_raw(const std::string& name, Dtype dtype, Shape shape, const void* data) {
  if (name.empty() || name.size() > UINT16_MAX)
    throw std::invalid_argument("checkpoint: bad entry name '" + name + "'");
  if (index_.count(name)) throw std::invalid_argument("checkpoint: duplicate entry " + name);
  Entry e;
  e.name = name;
  e.dtype = dtype;
  const size_t nbytes = static_cast<size_t>(numel(shape)) * dtype_size(dtype);
  e.shape = std::move(shape);
  e.bytes.assign(static_cast<const unsigned char*>(data),
                 static_cast<const unsigned char*>(data) + nbytes);
  index_[name] = entries_.size();
  entries_.push_back(std::move(e));
}

void Writer::add_f32(const std::string& name, Shape shape, const float* data) {
  add_raw(name, Dtype::f32, std::move(shape), data);
}
void Writer::add_f64(const std::string& name, Shape shape, const double* data) {
  add_raw(name, Dtype::f64, std::move(shape), data);
}
void Writer::add_i64(const std::string& name, Shape shape, const int64_t* data) {
  add_raw(name, Dtype::i64, std::move(shape), data);
}
void Writer::add_u8(const std::string& name, Shape shape, const uint8_t* data) {
  add_raw(name, Dtype::u8, std::move(shape), data);
}

void Writer::save(const std::string& path) const {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + tmp + " for writing");
    put_bytes(os, kMagic, 4);
    put(os, kVersion);
    put(os, static_cast<uint32_t>(entries_.size()));
    for (const Entry& e : entries_) {
      put(os, static_cast<uint16_t>(e.name.size()));
      put_bytes(os, e.name.data(), e.name.size());
      put(os, static_cast<uint8_t>(e.dtype));
      put(os, static_cast<uint8_t>(e.shape.size()));
      for (int64_t d : e.shape) put(os, d);
    }
    for (const Entry& e : entries_) put_bytes(os, e.bytes.data(), e.bytes.size());
    if (!os) throw std::runtime_error("checkpoint: write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("checkpoint: cannot move " + tmp + " to " + path);
}

Reader::Reader(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: " + path + " is not a checkpoint file");
  const uint32_t version = take<uint32_t>(is);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported format version " +
                             std::to_string(version));
  const uint32_t count = take<uint32_t>(is);
  entries_.resize(count);
  for (Entry& e : entries_) {
    const uint16_t len = take<uint16_t>(is);
    e.name.resize(len);
    is.read(e.name.data(), len);
    e.dtype = static_cast<Dtype>(take<uint8_t>(is));
    if (static_cast<uint8_t>(e.dtype) > 3)
      throw std::runtime_error("checkpoint: bad dtype for entry " + e.name);
    const uint8_t ndim = take<uint8_t>(is);
    e.shape.resize(ndim);
    for (int64_t& d : e.shape) d = take<int64_t>(is);
    if (numel(e.shape) < 0) throw std::runtime_error("checkpoint: bad shape for " + e.name);
  }
  for (Entry& e : entries_) {
    e.bytes.resize(static_cast<size_t>(numel(e.shape)) * dtype_size(e.dtype));
    is.read(reinterpret_cast<char*>(e.bytes.data()),
            static_cast<std::streamsize>(e.bytes.size()));
    if (!is) throw std::runtime_error("checkpoint: truncated payload for " + e.name);
  }
  for (size_t i = 0; i < entries_.size(); ++i) {
    if (index_.count(entries_[i].name))
      throw std::runtime_error("checkpoint: duplicate entry " + entries_[i].name);
    index_[entries_[i].name] = i;
    order_.push_back(entries_[i].name);
  }
}

bool Reader::contains(const std::string& name) const { return index_.count(name) > 0; }

const Entry& Reader::entry(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::runtime_error("checkpoint: no entry named " + name);
  return entries_[it->second];
}

const Entry& Reader::typed(const std::string& name, Dtype want) const {
  const Entry& e = entry(name);
  if (e.dtype != want)
    throw std::runtime_error("checkpoint: entry " + name + " has unexpected dtype");
  return e;
}

std::vector<float> Reader::f32(const std::string& name) const {
  const Entry& e = typed(name, Dtype::f32);
  std::vector<float> v(e.bytes.size() / 4);
  std::memcpy(v.data(), e.bytes.data(), e.bytes.size());
  return v;
}
std::vector<double> Reader::f64(const std::string& name) const {
  const Entry& e = typed(name, Dtype::f64);
  std::vector<double> v(e.bytes.size() / 8);
  std::memcpy(v.data(), e.bytes.data(), e.bytes.size());
  return v;
}
std::vector<int64_t> Reader::i64(const std::string& name) const {
  const Entry& e = typed(name, Dtype::i64);
  std::vector<int64_t> v(e.bytes.size() / 8);
  std::memcpy(v.data(), e.bytes.data(), e.bytes.size());
  return v;
}
std::vector<uint8_t> Reader::u8(const std::string& name) const {
  const Entry& e = typed(name, Dtype::u8);
  return std::vector<uint8_t>(e.bytes.begin(), e.bytes.end());
}

int64_t Reader::scalar_i64(const std::string& name) const {
  const auto v = i64(name);
  if (v.size() != 1) throw std::runtime_error("checkpoint: " + name + " is not a scalar");
  return v[0];
}

double Reader::scalar_f64(const std::string& name) const {
  const auto v = f64(name);
  if (v.size() != 1) throw std::runtime_error("checkpoint: " + name + " is not a scalar");
  return v[0];
}

}  // namespace bbf::ckpt
