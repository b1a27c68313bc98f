#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cpsnn/common.hpp"
#include "cpsnn/rng.hpp"
#include "cpsnn/sequence.hpp"

namespace cpsnn {

/// Long-gap temporal XOR: two cue spikes (t1, a), (t2, b) with t2 - t1 in
/// [gap_min, gap_max], Bernoulli distractors elsewhere, label (a % 2) ^ (b % 2).
struct TaskConfig {
  std::size_t channels = 8;
  std::size_t horizon = 100;
  std::size_t gap_min = 10;
  std::size_t gap_max = 60;
  double distractor_rate = 0.05;
  std::size_t n_samples = 2000;
  std::size_t eval_samples = 500;  // only used by generate_splits
  std::uint64_t seed = 42;

  void validate() const {
    if (channels < 2) throw ConfigError("task: need at least 2 channels");
    if (horizon < 2) throw ConfigError("task: horizon must be at least 2");
    if (!(gap_min >= 1 && gap_min <= gap_max && gap_max <= horizon - 1)) {
      throw ConfigError("task: need 1 <= gap_min <= gap_max <= horizon - 1");
    }
    if (!(distractor_rate >= 0.0 && distractor_rate < 1.0)) throw ConfigError("task: distractor rate must be in [0,1)");
  }
};

inline int xor_parity_label(std::size_t a, std::size_t b) { return static_cast<int>((a % 2) ^ (b % 2)); }

inline SpikeSequence generate_sample(const TaskConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t T = cfg.horizon, C = cfg.channels;
  const auto gap = std::uniform_int_distribution<std::size_t>(cfg.gap_min, cfg.gap_max)(rng);
  const auto t1 = std::uniform_int_distribution<std::size_t>(0, T - 1 - gap)(rng);
  std::uniform_int_distribution<std::size_t> channel(0, C - 1);
  const auto a = channel(rng);
  const auto b = channel(rng);

  SpikeSequence seq(T, C);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < C; ++c) {
      // One draw per cell keeps the stream layout independent of cue placement.
      if (u(rng) < cfg.distractor_rate) seq.set(t, c);
    }
  }
  seq.set(t1, a);
  seq.set(t1 + gap, b);
  seq.label = xor_parity_label(a, b);
  seq.meta = CueMeta{t1, t1 + gap, a, b};
  return seq;
}

inline Dataset generate_dataset(const TaskConfig& cfg) {
  cfg.validate();
  Dataset out;
  out.reserve(cfg.n_samples);
  for (std::size_t i = 0; i < cfg.n_samples; ++i) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(i)));
    out.push_back(generate_sample(cfg, rng));
  }
  return out;
}

struct Splits {
  Dataset train, eval;
};

// Train and eval sets from disjoint sub-streams of cfg.seed.
inline Splits generate_splits(const TaskConfig& cfg) {
  TaskConfig tr = cfg, ev = cfg;
  tr.seed = derive_seed(cfg.seed, "data/train");
  ev.seed = derive_seed(cfg.seed, "data/eval");
  ev.n_samples = cfg.eval_samples;
  return {generate_dataset(tr), generate_dataset(ev)};
}

// JSONL record: {"T":..,"C":..,"events":[[t,c],...],"label":..,"meta":{"t1":..,"t2":..,"a":..,"b":..}}
inline std::string sequence_to_json(const SpikeSequence& seq) {
  nlohmann::ordered_json j;
  j["T"] = seq.T;
  j["C"] = seq.C;
  auto events = nlohmann::ordered_json::array();
  for (std::size_t t = 0; t < seq.T; ++t) {
    for (std::size_t c = 0; c < seq.C; ++c) {
      if (seq.at(t, c)) events.push_back({t, c});
    }
  }
  j["events"] = std::move(events);
  j["label"] = seq.label;
  if (seq.meta) {
    j["meta"] = {{"t1", seq.meta->t1}, {"t2", seq.meta->t2}, {"a", seq.meta->a}, {"b", seq.meta->b}};
  }
  return j.dump();
}

inline SpikeSequence sequence_from_json(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  SpikeSequence seq(j.at("T").get<std::size_t>(), j.at("C").get<std::size_t>());
  for (const auto& ev : j.at("events")) {
    if (!ev.is_array() || ev.size() != 2) throw DataError("event must be a [t, c] pair");
    const auto t = ev[0].get<std::size_t>();
    const auto c = ev[1].get<std::size_t>();
    if (t >= seq.T || c >= seq.C) throw DataError("event outside the T x C raster");
    seq.set(t, c);
  }
  seq.label = j.at("label").get<int>();
  if (j.contains("meta")) {
    const auto& m = j["meta"];
    seq.meta = CueMeta{m.at("t1").get<std::size_t>(), m.at("t2").get<std::size_t>(), m.at("a").get<std::size_t>(),
                       m.at("b").get<std::size_t>()};
  }
  seq.validate();
  return seq;
}

inline void save_dataset(const Dataset& data, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  for (const auto& seq : data) os << sequence_to_json(seq) << '\n';
  if (!os) throw DataError("write to '" + path + "' failed");
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open '" + path + "'");
  Dataset out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(sequence_from_json(line));
    } catch (const std::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": malformed record: " + e.what());
    }
  }
  return out;
}

}  // namespace cpsnn
