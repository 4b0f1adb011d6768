#pragma once

#include <string_view>

namespace bbf::kernels {

/// Kernel implementation lanes. `scalar` is the portable reference; the SIMD
/// lanes are bit-compatible with it for elementwise kernels and equivalent
/// within accumulation tolerance for GEMM (FMA contraction reorders rounding).
enum class Backend {
  scalar,
  avx2,
  avx512,
  neon,
};

/// Best lane supported by the running CPU (decided once at startup).
Backend detect_backend();

/// Currently selected lane. Defaults to detect_backend().
Backend active_backend();

/// Force a lane, e.g. for equivalence tests. Throws if unsupported here.
void set_backend(Backend b);

bool backend_supported(Backend b);

const char* backend_name(Backend b);

/// Parses "scalar" / "avx2" / "avx512" / "neon"; throws on anything else.
Backend backend_from_name(std::string_view name);

}  // namespace bbf::kernels
