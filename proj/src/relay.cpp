#include "ctranatd/relay.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cstring>

#include "ctranatd/errors.hpp"
#include "ctranatd/log.hpp"
#include "ctranatd/synth.hpp"

namespace ctranatd {

Digest sha256(std::string_view bytes) {
  Digest d{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), d.data(), &len, EVP_sha256(), nullptr) != 1 || len != d.size())
    throw Error("crypto", "SHA-256 computation failed");
  return d;
}

std::string to_hex(const Digest& d) {
  static const char* hex = "0123456789abcdef";
  std::string s;
  for (auto b : d) {
    s += hex[b >> 4];
    s += hex[b & 15];
  }
  return s;
}

namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

void put_str(std::string& out, std::string_view s) {
  put_u64(out, s.size());
  out.append(s);
}

}  // namespace

Digest packet_digest(const Packet& p) {
  std::string bytes;
  bytes.reserve(p.window.size() * 8);
  for (double v : p.window) put_u64(bytes, std::bit_cast<std::uint64_t>(v));
  return sha256(bytes);
}

double ModelDetector::score(const Packet& p) {
  Tensor3 x(Shape3{1, p.time, p.features}, p.window);
  return model_.forward(x, false).at(0);
}

// ---------------------------------------------------------------- ledger

std::string serialize_entries(const std::vector<ContractLogEntry>& entries) {
  std::string out;
  put_u64(out, entries.size());
  for (const auto& e : entries) {
    put_u64(out, e.verdict_id);
    put_str(out, e.action);
    put_str(out, e.uav_id);
    put_u64(out, e.sequence);
    put_u64(out, e.logical_time);
    put_str(out, e.payload_digest);
  }
  return out;
}

Digest block_hash(std::uint64_t index, const Digest& prev, std::string_view body) {
  std::string buf;
  put_u64(buf, index);
  buf.append(reinterpret_cast<const char*>(prev.data()), prev.size());
  put_str(buf, body);
  return sha256(buf);
}

std::optional<std::size_t> Ledger::mine_block(std::size_t max_per_block) {
  if (max_per_block == 0) throw InvalidArgument("block capacity must be >= 1");
  if (pending_.empty()) return std::nullopt;
  LedgerBlock b;
  b.index = blocks_.size();
  if (!blocks_.empty()) b.prev_hash = blocks_.back().hash;
  std::size_t n = std::min(max_per_block, pending_.size());
  // Keep one verdict's entries together unless the group alone overflows a block.
  std::size_t cut = n;
  while (cut > 0 && cut < pending_.size() && pending_[cut].verdict_id == pending_[cut - 1].verdict_id) --cut;
  if (cut > 0) n = cut;
  b.entries.assign(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(n));
  pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(n));
  b.body = serialize_entries(b.entries);
  b.hash = block_hash(b.index, b.prev_hash, b.body);
  blocks_.push_back(std::move(b));
  return blocks_.size() - 1;
}

ChainReport Ledger::verify_chain(std::size_t from) const {
  ChainReport r;
  Digest prev{};
  if (from > 0 && from <= blocks_.size()) prev = blocks_[from - 1].hash;
  for (std::size_t i = from; i < blocks_.size(); ++i) {
    const auto& b = blocks_[i];
    auto fail = [&](std::string why) {
      r.valid = false;
      r.first_bad = i;
      r.reason = std::move(why);
      return r;
    };
    if (b.index != i) return fail("index field does not match position");
    if (b.prev_hash != prev) return fail("prev_hash does not link to the previous block");
    if (serialize_entries(b.entries) != b.body) return fail("entries do not match the stored body");
    if (block_hash(b.index, b.prev_hash, b.body) != b.hash) return fail("stored hash does not match contents");
    prev = b.hash;
  }
  return r;
}

std::size_t Ledger::entry_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks_) n += b.entries.size();
  return n;
}

std::string Ledger::export_ndjson() const {
  std::string out;
  for (const auto& b : blocks_) {
    nlohmann::json j;
    j["index"] = b.index;
    j["prev_hash"] = to_hex(b.prev_hash);
    j["hash"] = to_hex(b.hash);
    auto& es = j["entries"] = nlohmann::json::array();
    for (const auto& e : b.entries)
      es.push_back({{"verdict_id", e.verdict_id}, {"action", e.action}, {"uav_id", e.uav_id},
                    {"sequence", e.sequence}, {"logical_time", e.logical_time},
                    {"payload_digest", e.payload_digest}});
    out += j.dump() + "\n";
  }
  return out;
}

// ---------------------------------------------------------------- controller

Controller::Controller(Detector& detector, double threshold, std::vector<std::string> edge_kinds)
    : detector_(detector), threshold_(threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("threshold must be in [0, 1]");
  for (auto& k : edge_kinds) nodes_[k];
  nodes_["quarantine"];
}

std::vector<std::string> Controller::default_edge_kinds() {
  return {"pressure", "humidity", "temperature", "video", "telemetry"};
}

Verdict Controller::submit(const Packet& packet) {
  ++clock_;
  auto reject = [&](const std::string& why) {
    ++rejected_;
    log::warn("rejected packet from ", packet.uav_id, " seq ", packet.sequence, ": ", why);
    throw ProtocolError(why);
  };
  if (packet.time != kWindowLength || packet.features != kEncodedWidth ||
      packet.window.size() != packet.time * packet.features)
    reject("malformed window: expected " + std::to_string(kWindowLength) + "x" + std::to_string(kEncodedWidth) +
           " values, got " + std::to_string(packet.window.size()));
  auto it = last_sequence_.find(packet.uav_id);
  if (it != last_sequence_.end() && packet.sequence <= it->second)
    reject("out-of-order sequence " + std::to_string(packet.sequence) + " after " + std::to_string(it->second));

  Verdict v;
  v.score = detector_.score(packet);
  v.abnormal = v.score >= threshold_;
  v.id = next_verdict_++;
  v.uav_id = packet.uav_id;
  v.sequence = packet.sequence;
  v.declared_kind = packet.declared_kind;
  v.logical_time = clock_;
  v.digest = packet_digest(packet);
  last_sequence_[packet.uav_id] = packet.sequence;
  held_.emplace(v.id, packet);
  return v;
}

std::vector<ContractLogEntry> Controller::execute_contract(const Verdict& verdict) {
  if (!executed_.insert(verdict.id).second) {
    log::warn("contract for verdict ", verdict.id, " already executed");
    return {};
  }
  ++clock_;
  static const char* normal_actions[] = {"identity_update", "flight_log_update", "environment_record"};
  static const char* abnormal_actions[] = {"identity_update", "abnormal_flight_log_update",
                                           "transmission_prohibited"};
  const auto& actions = verdict.abnormal ? abnormal_actions : normal_actions;
  std::vector<ContractLogEntry> out;
  for (const char* a : actions) {
    ContractLogEntry e;
    e.verdict_id = verdict.id;
    e.action = a;
    e.uav_id = verdict.uav_id;
    e.sequence = verdict.sequence;
    e.logical_time = clock_;
    if (!verdict.abnormal) e.payload_digest = to_hex(verdict.digest);
    ledger_.enqueue(e);
    out.push_back(std::move(e));
  }
  return out;
}

Delivery Controller::forward(const Verdict& verdict) {
  if (!executed_.count(verdict.id))
    throw ProtocolError("forward before contract execution for verdict " + std::to_string(verdict.id));
  if (!forwarded_.insert(verdict.id).second) {
    log::warn("verdict ", verdict.id, " already forwarded");
    return {};
  }
  auto held = held_.extract(verdict.id);
  if (held.empty()) throw ProtocolError("no packet held for verdict " + std::to_string(verdict.id));
  if (verdict.abnormal) {
    ++dropped_;
    return {false, ""};
  }
  std::string node = verdict.declared_kind;
  if (node == "quarantine" || !nodes_.count(node)) {
    log::warn("unknown declared kind '", verdict.declared_kind, "', routing to quarantine");
    node = "quarantine";
  }
  nodes_[node].inbox.push_back(std::move(held.mapped()));
  return {true, node};
}

// ---------------------------------------------------------------- scenario

void ScenarioConfig::validate() const {
  if (uav_count == 0) throw ConfigError("scenario: uav_count must be >= 1");
  if (!(attack_probability >= 0.0 && attack_probability <= 1.0))
    throw ConfigError("scenario: attack_probability must be in [0, 1]");
  if (block_capacity == 0) throw ConfigError("scenario: block_capacity must be >= 1");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("scenario: threshold must be in [0, 1]");
  double total = 0.0;
  for (const auto& [k, w] : attack_mix) {
    if (k == AttackKind::none) throw ConfigError("scenario: attack_mix cannot contain 'none'");
    if (!(w >= 0.0)) throw ConfigError("scenario: attack_mix weights must be non-negative");
    total += w;
  }
  if (attack_probability > 0.0 && !(total > 0.0))
    throw ConfigError("scenario: attack_mix needs a positive weight when attacks are enabled");
}

ScenarioConfig ScenarioConfig::from_json(const nlohmann::json& j) {
  ScenarioConfig c;
  try {
    c.uav_count = j.value("uav_count", c.uav_count);
    c.packets_per_uav = j.value("packets_per_uav", c.packets_per_uav);
    c.attack_probability = j.value("attack_probability", c.attack_probability);
    c.block_capacity = j.value("block_capacity", c.block_capacity);
    c.threshold = j.value("threshold", c.threshold);
    c.seed = j.value("seed", c.seed);
    if (j.contains("attack_mix")) {
      c.attack_mix.clear();
      const auto& mix = j.at("attack_mix");
      if (mix.is_array()) {
        for (const auto& k : mix) c.attack_mix[parse_attack_kind(k.get<std::string>())] = 1.0;
      } else {
        for (const auto& [k, w] : mix.items()) c.attack_mix[parse_attack_kind(k)] = w.get<double>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("scenario JSON: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json ScenarioConfig::to_json() const {
  nlohmann::json mix = nlohmann::json::object();
  for (const auto& [k, w] : attack_mix) mix[to_string(k)] = w;
  return {{"uav_count", uav_count},         {"packets_per_uav", packets_per_uav},
          {"attack_mix", mix},              {"attack_probability", attack_probability},
          {"block_capacity", block_capacity}, {"threshold", threshold},
          {"seed", seed}};
}

namespace {

nlohmann::json counts_json(const ConfusionCounts& c) {
  return {{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}};
}

void tally(ConfusionCounts& c, bool truth, bool predicted) {
  if (truth) (predicted ? c.tp : c.fn)++;
  else (predicted ? c.fp : c.tn)++;
}

}  // namespace

nlohmann::json ScenarioReport::to_json() const {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [k, c] : per_attack) per[k] = counts_json(c);
  return {{"packets", packets},
          {"verdicts", verdicts},
          {"delivered", delivered},
          {"quarantined", quarantined},
          {"dropped", dropped},
          {"rejected", rejected},
          {"safety_violations", safety_violations},
          {"payload_mismatches", payload_mismatches},
          {"ledger_entries", ledger_entries},
          {"chain_length", chain_length},
          {"chain_valid", chain_valid},
          {"detection", counts_json(overall)},
          {"detection_per_attack", per}};
}

FeatureSchema scenario_schema(const nlohmann::json& shipped, std::uint64_t seed) {
  if (!shipped.is_null()) return FeatureSchema::from_json(shipped);
  SynthConfig cfg;
  RngState rng(derive_seed(seed, "calibration"));
  std::vector<FlowRecord> recs;
  for (std::size_t i = 0; i < 600; ++i) recs.push_back(synth_record(AttackKind::none, false, cfg, rng));
  augment_environment(recs, cfg.environment, rng);
  return fit_standardizer(recs);
}

ScenarioReport run_scenario(const ScenarioConfig& config, Detector& detector, const FeatureSchema& schema) {
  std::unique_ptr<Controller> unused;
  return run_scenario(config, detector, schema, unused);
}

ScenarioReport run_scenario(const ScenarioConfig& config, Detector& detector, const FeatureSchema& schema,
                            std::unique_ptr<Controller>& controller_out) {
  config.validate();
  if (schema.arity() != kEncodedWidth)
    throw ConfigError("scenario: detector schema encodes " + std::to_string(schema.arity()) + " columns, need " +
                      std::to_string(kEncodedWidth));
  auto controller = std::make_unique<Controller>(detector, config.threshold);
  const auto kinds = Controller::default_edge_kinds();
  SynthConfig synth;
  RngState rng(derive_seed(config.seed, "scenario"));
  std::vector<std::pair<AttackKind, double>> mix(config.attack_mix.begin(), config.attack_mix.end());
  double mix_total = 0.0;
  for (const auto& [k, w] : mix) mix_total += w;

  ScenarioReport rep;
  std::map<std::uint64_t, Digest> submitted;  // verdict id -> digest of bytes handed in
  std::map<std::string, std::map<std::uint64_t, Digest>> expected_by_node;
  for (std::size_t seq = 0; seq < config.packets_per_uav; ++seq) {
    for (std::size_t u = 0; u < config.uav_count; ++u) {
      Packet p;
      p.uav_id = "uav-" + std::to_string(u);
      p.sequence = seq + 1;
      p.declared_kind = kinds[u % kinds.size()];
      p.truth_abnormal = rng.uniform() < config.attack_probability;
      if (p.truth_abnormal) {
        double pick = rng.uniform() * mix_total;
        p.truth_kind = mix.back().first;
        for (const auto& [k, w] : mix) {
          if (pick < w) {
            p.truth_kind = k;
            break;
          }
          pick -= w;
        }
      }
      std::vector<FlowRecord> recs;
      for (std::size_t r = 0; r < kWindowLength; ++r)
        recs.push_back(synth_record(p.truth_kind, p.truth_abnormal, synth, rng));
      augment_environment(recs, synth.environment, rng);
      p.window.resize(kWindowLength * kEncodedWidth);
      for (std::size_t r = 0; r < kWindowLength; ++r)
        schema.encode_into(recs[r], std::span<double>(p.window).subspan(r * kEncodedWidth, kEncodedWidth));
      ++rep.packets;

      Verdict v;
      try {
        v = controller->submit(p);
      } catch (const ProtocolError&) {
        continue;
      }
      const Digest sent = packet_digest(p);
      controller->execute_contract(v);
      const auto d = controller->forward(v);
      if (d.delivered) {
        if (d.node == "quarantine") ++rep.quarantined;
        else ++rep.delivered;
        if (v.abnormal && d.node != "quarantine") ++rep.safety_violations;
        expected_by_node[d.node][v.id] = sent;
      }
      tally(rep.overall, p.truth_abnormal, v.abnormal);
      if (p.truth_abnormal) {
        tally(rep.per_attack[to_string(p.truth_kind)], true, v.abnormal);
      } else {
        for (const auto& [k, w] : config.attack_mix) tally(rep.per_attack[to_string(k)], false, v.abnormal);
      }
      while (controller->ledger().pending() >= config.block_capacity)
        controller->ledger().mine_block(config.block_capacity);
    }
  }
  while (controller->ledger().mine_block(config.block_capacity)) {
  }

  // Delivered bytes must equal what was handed to the controller.
  for (const auto& [node, expected] : expected_by_node) {
    const auto& inbox = controller->nodes().at(node).inbox;
    std::size_t i = 0;
    for (const auto& [id, digest] : expected) {
      if (i >= inbox.size() || packet_digest(inbox[i]) != digest) ++rep.payload_mismatches;
      ++i;
    }
  }
  rep.verdicts = controller->verdict_count();
  rep.dropped = controller->dropped();
  rep.rejected = controller->rejected();
  rep.ledger_entries = controller->ledger().entry_count();
  rep.chain_length = controller->ledger().blocks().size();
  rep.chain_valid = controller->ledger().verify_chain().valid;
  controller_out = std::move(controller);
  return rep;
}

}  // namespace ctranatd
