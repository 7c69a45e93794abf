#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ctranatd/preprocess.hpp"

namespace ctranatd {

// Desk-scale stand-in for a labelled flow capture. Records arrive one per
// second; a chosen share of whole minutes carries the attack.
struct SynthConfig {
  std::size_t records = 6000;
  AttackKind kind = AttackKind::dos;
  double attack_fraction = 0.3;   // share of minutes under attack
  double attack_density = 0.9;    // share of records abnormal inside an attack minute
  double shift_sigma = 3.0;       // mean shift of the attacked features, in feature stds
  std::size_t shift_features = 5;
  std::size_t per_minute = 60;
  std::int64_t start_time = 1499990400;  // minute aligned
  std::uint64_t seed = 0;
  EnvironmentConfig environment = EnvironmentConfig::defaults();

  void validate() const;
  nlohmann::json to_json() const;
};

// Base distribution of flow feature j (normal traffic).
double synth_feature_mean(std::size_t j);
double synth_feature_std(std::size_t j);
// Feature indices shifted by an attack kind.
std::vector<std::size_t> shifted_features(AttackKind kind, std::size_t count);

// One record without environment channels or timestamp.
FlowRecord synth_record(AttackKind kind, bool abnormal, const SynthConfig& config, RngState& rng);

std::vector<FlowRecord> synthesize(const SynthConfig& config);

// CSV in the synthetic schema; numbers use shortest round-trip formatting so
// equal inputs give equal bytes.
std::string to_csv(std::span<const FlowRecord> records);
void write_synthetic_csv(const std::filesystem::path& path, const SynthConfig& config);

}  // namespace ctranatd
