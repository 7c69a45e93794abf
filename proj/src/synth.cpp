#include "ctranatd/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "ctranatd/container.hpp"
#include "ctranatd/errors.hpp"

namespace ctranatd {

void SynthConfig::validate() const {
  if (!(attack_fraction >= 0.0 && attack_fraction <= 1.0))
    throw InvalidArgument("attack fraction must be in [0, 1], got " + std::to_string(attack_fraction));
  if (!(attack_density >= 0.0 && attack_density <= 1.0))
    throw InvalidArgument("attack density must be in [0, 1]");
  if (per_minute == 0) throw InvalidArgument("per_minute must be >= 1");
  if (!std::isfinite(shift_sigma)) throw InvalidArgument("shift magnitude must be finite");
  if (shift_features > default_feature_columns().size())
    throw InvalidArgument("cannot shift more than " + std::to_string(default_feature_columns().size()) +
                          " features");
  if (attack_fraction > 0.0 && kind == AttackKind::none)
    throw InvalidArgument("attack kind none with a nonzero attack fraction");
  environment.validate();
}

nlohmann::json SynthConfig::to_json() const {
  return {{"records", records},
          {"attack", ctranatd::to_string(kind)},
          {"attack_fraction", attack_fraction},
          {"attack_density", attack_density},
          {"shift_sigma", shift_sigma},
          {"shift_features", shift_features},
          {"per_minute", per_minute},
          {"start_time", start_time},
          {"seed", seed}};
}

double synth_feature_mean(std::size_t j) { return 20.0 + 7.0 * static_cast<double>(j % 11); }
double synth_feature_std(std::size_t j) { return 1.0 + static_cast<double>(j % 4); }

std::vector<std::size_t> shifted_features(AttackKind kind, std::size_t count) {
  std::size_t start = 0;
  switch (kind) {
    case AttackKind::dos: start = 0; break;
    case AttackKind::ddos: start = 17; break;
    case AttackKind::portscan: start = 34; break;
    case AttackKind::none: start = 8; break;
  }
  const std::size_t n = default_feature_columns().size();
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back((start + 3 * i) % n);
  return out;
}

namespace {

std::string ip(int a, int b, int c, int d) {
  return std::to_string(a) + "." + std::to_string(b) + "." + std::to_string(c) + "." + std::to_string(d);
}

int pick(RngState& rng, int lo, int hi) { return lo + static_cast<int>(rng.below(static_cast<std::size_t>(hi - lo + 1))); }

}  // namespace

FlowRecord synth_record(AttackKind kind, bool abnormal, const SynthConfig& config, RngState& rng) {
  FlowRecord r;
  r.abnormal = abnormal;
  r.kind = abnormal ? kind : AttackKind::none;
  const std::size_t n = default_feature_columns().size();
  r.features.resize(n);
  for (std::size_t j = 0; j < n; ++j) r.features[j] = rng.normal(synth_feature_mean(j), synth_feature_std(j));

  if (!abnormal) {
    r.src_ip = ip(10, 0, 0, pick(rng, 1, 24));
    r.dst_ip = ip(192, 168, 1, pick(rng, 1, 6));
    r.src_port = pick(rng, 1024, 65535);
    static const int service[] = {80, 443, 53, 123, 8080};
    r.dst_port = service[rng.below(5)];
    r.protocol = r.dst_port == 53 || r.dst_port == 123 ? "17" : "6";
    return r;
  }
  for (auto j : shifted_features(kind, config.shift_features))
    r.features[j] += config.shift_sigma * synth_feature_std(j);
  switch (kind) {
    case AttackKind::dos:
      r.src_ip = ip(172, 16, 0, 1);
      r.dst_ip = ip(192, 168, 1, 1);
      r.src_port = pick(rng, 1024, 65535);
      r.dst_port = 80;
      r.protocol = "6";
      break;
    case AttackKind::ddos:
      r.src_ip = ip(172, 16, pick(rng, 0, 255), pick(rng, 1, 254));
      r.dst_ip = ip(192, 168, 1, 1);
      r.src_port = pick(rng, 1024, 65535);
      r.dst_port = 80;
      r.protocol = rng.uniform() < 0.8 ? "6" : "17";
      break;
    case AttackKind::portscan:
      r.src_ip = ip(172, 16, 0, 9);
      r.dst_ip = ip(192, 168, 1, pick(rng, 1, 6));
      r.src_port = pick(rng, 40000, 40100);
      r.dst_port = pick(rng, 1, 1024);
      r.protocol = "6";
      break;
    case AttackKind::none:
      r.src_ip = ip(10, 0, 0, pick(rng, 1, 24));
      r.dst_ip = ip(192, 168, 1, pick(rng, 1, 6));
      r.src_port = pick(rng, 1024, 65535);
      r.dst_port = 443;
      r.protocol = "6";
      break;
  }
  return r;
}

std::vector<FlowRecord> synthesize(const SynthConfig& config) {
  config.validate();
  const std::size_t minutes = (config.records + config.per_minute - 1) / config.per_minute;
  std::vector<std::size_t> order(minutes);
  std::iota(order.begin(), order.end(), 0);
  RngState minute_rng(derive_seed(config.seed, "synth-minutes"));
  std::shuffle(order.begin(), order.end(), minute_rng.engine());
  const auto attacked = static_cast<std::size_t>(std::llround(config.attack_fraction * static_cast<double>(minutes)));
  std::vector<bool> attack_minute(minutes, false);
  for (std::size_t i = 0; i < attacked; ++i) attack_minute[order[i]] = true;

  RngState rng(derive_seed(config.seed, "synth-records"));
  std::vector<FlowRecord> records;
  records.reserve(config.records);
  for (std::size_t i = 0; i < config.records; ++i) {
    const std::size_t minute = i / config.per_minute;
    const std::size_t slot = i % config.per_minute;
    const bool abnormal = attack_minute[minute] && rng.uniform() < config.attack_density;
    FlowRecord r = synth_record(config.kind, abnormal, config, rng);
    // Spread the records evenly across the minute.
    r.timestamp = static_cast<double>(config.start_time + static_cast<std::int64_t>(minute * 60 + slot * 60 / config.per_minute));
    records.push_back(std::move(r));
  }
  RngState env_rng(derive_seed(config.seed, "environment"));
  augment_environment(records, config.environment, env_rng);
  return records;
}

namespace {

void put_number(std::string& out, double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, ptr);
}

const char* label_text(const FlowRecord& r) {
  if (!r.abnormal) return "BENIGN";
  switch (r.kind) {
    case AttackKind::dos: return "DoS";
    case AttackKind::ddos: return "DDoS";
    case AttackKind::portscan: return "PortScan";
    case AttackKind::none: return "Attack";
  }
  return "Attack";
}

}  // namespace

std::string to_csv(std::span<const FlowRecord> records) {
  std::string out = "timestamp,src_ip,dst_ip,src_port,dst_port,protocol";
  for (const auto& c : default_feature_columns()) out += "," + c;
  for (const auto& c : default_environment_columns()) out += "," + c;
  out += ",Label\n";
  for (const auto& r : records) {
    put_number(out, r.timestamp);
    out += ',' + r.src_ip + ',' + r.dst_ip + ',' + std::to_string(r.src_port) + ',' +
           std::to_string(r.dst_port) + ',' + r.protocol;
    for (double v : r.features) {
      out += ',';
      put_number(out, v);
    }
    for (double v : r.environment) {
      out += ',';
      put_number(out, v);
    }
    out += ',';
    out += label_text(r);
    out += '\n';
  }
  return out;
}

void write_synthetic_csv(const std::filesystem::path& path, const SynthConfig& config) {
  const auto records = synthesize(config);
  write_file_atomic(path, to_csv(records));
}

}  // namespace ctranatd
