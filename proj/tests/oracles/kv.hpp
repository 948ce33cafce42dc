#pragma once

// Memory feasibility evaluated in exact rational arithmetic, written out from
// the byte counts rather than the library's integer rescaling.

#include <cstdint>

#include <boost/multiprecision/cpp_int.hpp>

namespace oracle {

using boost::multiprecision::cpp_int;
using boost::multiprecision::cpp_rational;

struct KvQuery {
  std::int64_t m = 1;
  std::int64_t b_a = 0;
  std::int64_t seq_len = 1;
  std::int64_t hidden = 1;
  std::int64_t layers = 1;
  std::int64_t gqa = 1;
  std::int64_t bytes_per_param = 2;
  std::int64_t tp_a = 1;
  std::int64_t capacity = 0;  // bytes per GPU
};

// K and V per token and layer: 2 * h / g values.
inline cpp_rational kv_bytes(const KvQuery& q) {
  return cpp_rational(cpp_int(2) * q.bytes_per_param * q.m * q.b_a * q.seq_len * q.hidden * q.layers, q.gqa);
}

// Q and O projections are h x h, K and V projections h x h/g each.
inline cpp_rational attention_param_bytes(const KvQuery& q) {
  const cpp_rational per_layer = cpp_rational(cpp_int(q.hidden) * q.hidden) * 2 +
                                 cpp_rational(cpp_int(q.hidden) * q.hidden * 2, q.gqa);
  return per_layer * q.layers * q.bytes_per_param;
}

inline bool kv_fits(const KvQuery& q) {
  return kv_bytes(q) + attention_param_bytes(q) < cpp_rational(cpp_int(q.tp_a) * q.capacity);
}

// Largest b_a with kv_fits, or -1 when the weights alone do not fit.
inline std::int64_t max_fitting_batch(KvQuery q) {
  q.b_a = 0;
  const cpp_rational room = cpp_rational(cpp_int(q.tp_a) * q.capacity) - attention_param_bytes(q);
  if (room <= 0) return -1;
  q.b_a = 1;
  const cpp_rational per_request = kv_bytes(q);
  // Strict inequality: k * per_request < room.
  const cpp_rational quotient = room / per_request;
  cpp_int k = numerator(quotient) / denominator(quotient);
  if (cpp_rational(k) * per_request >= room) k -= 1;
  return k.convert_to<std::int64_t>();
}

inline bool expert_fits(std::int64_t layers, std::int64_t hidden, std::int64_t intermediate,
                        std::int64_t bytes_per_param, std::int64_t tp_e, std::int64_t capacity) {
  return cpp_int(2) * layers * hidden * intermediate * bytes_per_param < cpp_int(tp_e) * capacity;
}

}  // namespace oracle
