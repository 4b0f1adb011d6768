#include "bbf/kernels/backend.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace bbf::kernels {
namespace {

Backend probe_best() {
#if defined(__x86_64__) || defined(_M_X64)
  __builtin_cpu_init();
  const bool fma = __builtin_cpu_supports("fma");
  if (fma && __builtin_cpu_supports("avx512f")) return Backend::avx512;
  if (fma && __builtin_cpu_supports("avx2")) return Backend::avx2;
  return Backend::scalar;
#elif defined(__aarch64__)
  return Backend::neon;  // advanced SIMD is mandatory on aarch64
#else
  return Backend::scalar;
#endif
}

Backend initial_backend() {
  if (const char* env = std::getenv("BBF_BACKEND")) {
    const Backend want = backend_from_name(env);
    if (!backend_supported(want))
      throw std::runtime_error(std::string("BBF_BACKEND=") + env +
                               " is not supported on this CPU");
    return want;
  }
  return detect_backend();
}

std::atomic<Backend>& active_slot() {
  static std::atomic<Backend> slot{initial_backend()};
  return slot;
}

}  // namespace

Backend detect_backend() {
  static const Backend best = probe_best();
  return best;
}

Backend active_backend() { return active_slot().load(std::memory_order_relaxed); }

void set_backend(Backend b) {
  if (!backend_supported(b))
    throw std::invalid_argument(std::string("backend ") + backend_name(b) +
                                " is not supported on this CPU");
  active_slot().store(b, std::memory_order_relaxed);
}

bool backend_supported(Backend b) {
  switch (b) {
    case Backend::scalar:
      return true;
#if defined(__x86_64__) || defined(_M_X64)
    case Backend::avx2:
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    case Backend::avx512:
      return __builtin_cpu_supports("avx512f") && __builtin_cpu_supports("fma");
#endif
#if defined(__aarch64__)
    case Backend::neon:
      return true;
#endif
    default:
      return false;
  }
}

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::scalar:
      return "scalar";
    case Backend::avx2:
      return "avx2";
    case Backend::avx512:
      return "avx512";
    case Backend::neon:
      return "neon";
  }
  return "unknown";
}

Backend backend_from_name(std::string_view name) {
  if (name == "scalar") return Backend::scalar;
  if (name == "avx2") return Backend::avx2;
  if (name == "avx512") return Backend::avx512;
  if (name == "neon") return Backend::neon;
  throw std::invalid_argument("unknown backend name: " + std::string(name));
}

}  // namespace bbf::kernels
