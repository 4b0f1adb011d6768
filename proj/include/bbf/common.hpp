#pragma once

#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace bbf {

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ", ";
    os << s[i];
  }
  os << ']';
  return os.str();
}

/// Thrown when tensor shapes are incompatible with an operation.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a computation produces NaN/Inf or the tape is unusable.
struct NumericFault : std::runtime_error {
  using std::runtime_error::runtime_error;
};

[[noreturn]] inline void throw_shape_error(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                   shape_str(b));
}

[[noreturn]] inline void throw_shape_error(const char* op, const Shape& a, const char* expect) {
  throw ShapeError(std::string(op) + ": got shape " + shape_str(a) + ", expected " + expect);
}

}  // namespace bbf
