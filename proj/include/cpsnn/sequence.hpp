#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "cpsnn/common.hpp"

namespace cpsnn {

struct CueMeta {
  std::size_t t1 = 0;
  std::size_t t2 = 0;
  std::size_t a = 0;
  std::size_t b = 0;

  std::size_t gap() const { return t2 - t1; }
  bool operator==(const CueMeta&) const = default;
};

/// Binary spike raster of shape T x C with a class label.
struct SpikeSequence {
  std::size_t T = 0;
  std::size_t C = 0;
  std::vector<std::uint8_t> spikes;  // row-major T x C
  int label = 0;
  std::optional<CueMeta> meta;

  SpikeSequence() = default;
  SpikeSequence(std::size_t t, std::size_t c) : T(t), C(c), spikes(t * c, 0) {}

  std::uint8_t at(std::size_t t, std::size_t c) const { return spikes[t * C + c]; }
  void set(std::size_t t, std::size_t c, bool on = true) { spikes[t * C + c] = on ? 1 : 0; }

  // Step t as a real-valued vector.
  void row(std::size_t t, std::span<double> out) const {
    for (std::size_t c = 0; c < C; ++c) out[c] = spikes[t * C + c];
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : spikes) n += v;
    return n;
  }

  void validate() const {
    if (spikes.size() != T * C) throw DataError("spike raster size does not match T x C");
    for (auto v : spikes) {
      if (v > 1) throw DataError("spike raster entries must be 0 or 1");
    }
    if (meta) {
      if (!(meta->t1 < meta->t2 && meta->t2 < T)) throw DataError("cue times must satisfy t1 < t2 < T");
      if (meta->a >= C || meta->b >= C) throw DataError("cue channel out of range");
    }
  }

  bool operator==(const SpikeSequence&) const = default;
};

using Dataset = std::vector<SpikeSequence>;

}  // namespace cpsnn
