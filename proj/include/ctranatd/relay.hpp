#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ctranatd/metrics.hpp"
#include "ctranatd/model.hpp"
#include "ctranatd/preprocess.hpp"

namespace ctranatd {

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::string_view bytes);
std::string to_hex(const Digest& d);

struct Packet {
  std::string uav_id;
  std::uint64_t sequence = 0;
  std::string declared_kind;  // which edge node should receive it
  std::size_t time = kWindowLength;
  std::size_t features = kEncodedWidth;
  std::vector<double> window;  // time x features, row-major
  // Ground truth, used for scoring the run and by the oracle detector.
  bool truth_abnormal = false;
  AttackKind truth_kind = AttackKind::none;
};

// Digest of the window bytes (little-endian float64).
Digest packet_digest(const Packet& p);

class Detector {
 public:
  virtual ~Detector() = default;
  virtual double score(const Packet& p) = 0;
};

// Returns a fixed score, or the ground truth (1/0) when constructed perfect.
class StubDetector : public Detector {
 public:
  static StubDetector fixed(double s) { return StubDetector(s, false); }
  static StubDetector perfect() { return StubDetector(0.0, true); }
  double score(const Packet& p) override { return perfect_ ? (p.truth_abnormal ? 1.0 : 0.0) : score_; }

 private:
  StubDetector(double s, bool perfect) : score_(s), perfect_(perfect) {}
  double score_;
  bool perfect_;
};

class ModelDetector : public Detector {
 public:
  explicit ModelDetector(Model model) : model_(std::move(model)) {}
  double score(const Packet& p) override;

 private:
  Model model_;
};

struct Verdict {
  std::uint64_t id = 0;
  std::string uav_id;
  std::uint64_t sequence = 0;
  std::string declared_kind;
  double score = 0.0;
  bool abnormal = false;
  std::uint64_t logical_time = 0;
  Digest digest{};
};

struct ContractLogEntry {
  std::uint64_t verdict_id = 0;
  std::string action;
  std::string uav_id;
  std::uint64_t sequence = 0;
  std::uint64_t logical_time = 0;
  std::string payload_digest;  // hex; empty for abnormal traffic
};

struct LedgerBlock {
  std::uint64_t index = 0;
  Digest prev_hash{};
  std::vector<ContractLogEntry> entries;
  std::string body;  // canonical serialization of the entries
  Digest hash{};
};

// Length-prefixed binary encoding of a block's entries.
std::string serialize_entries(const std::vector<ContractLogEntry>& entries);
// SHA-256(index || prev_hash || body).
Digest block_hash(std::uint64_t index, const Digest& prev, std::string_view body);

struct ChainReport {
  bool valid = true;
  std::optional<std::size_t> first_bad;
  std::string reason;
};

class Ledger {
 public:
  void enqueue(const ContractLogEntry& e) { pending_.push_back(e); }
  std::size_t pending() const { return pending_.size(); }

  // Packages up to max_per_block pending entries in arrival order, without
  // splitting one verdict's entries across blocks when they fit. Returns the
  // new block's index, or nothing when the queue is empty.
  std::optional<std::size_t> mine_block(std::size_t max_per_block = 16);
  // Recomputes hashes and links from block `from` on; earlier blocks are
  // taken as already verified (their stored hash seeds the first link check).
  ChainReport verify_chain(std::size_t from = 0) const;

  const std::vector<LedgerBlock>& blocks() const { return blocks_; }
  // Mutable access for audit tooling and tamper tests.
  LedgerBlock& block(std::size_t i) { return blocks_.at(i); }
  void truncate(std::size_t n) { blocks_.resize(std::min(n, blocks_.size())); }
  std::size_t entry_count() const;

  // One JSON object per line per block.
  std::string export_ndjson() const;

 private:
  std::vector<ContractLogEntry> pending_;
  std::vector<LedgerBlock> blocks_;
};

struct Delivery {
  bool delivered = false;
  std::string node;  // edge node name, "quarantine", or empty when dropped
};

struct EdgeNode {
  std::vector<Packet> inbox;
};

class Controller {
 public:
  Controller(Detector& detector, double threshold = 0.5,
             std::vector<std::string> edge_kinds = default_edge_kinds());

  static std::vector<std::string> default_edge_kinds();

  // Scores the packet and records a verdict. A malformed window or a
  // non-increasing sequence number raises ProtocolError and is counted.
  Verdict submit(const Packet& packet);
  // Contract entries for a verdict, queued on the ledger. A second call for
  // the same verdict returns nothing.
  std::vector<ContractLogEntry> execute_contract(const Verdict& verdict);
  Delivery forward(const Verdict& verdict);

  Ledger& ledger() { return ledger_; }
  const std::map<std::string, EdgeNode>& nodes() const { return nodes_; }
  std::size_t rejected() const { return rejected_; }
  std::size_t dropped() const { return dropped_; }
  std::size_t verdict_count() const { return next_verdict_; }

 private:
  Detector& detector_;
  double threshold_;
  Ledger ledger_;
  std::map<std::string, EdgeNode> nodes_;
  std::map<std::string, std::uint64_t> last_sequence_;
  std::map<std::uint64_t, Packet> held_;  // packets awaiting forward()
  std::set<std::uint64_t> executed_;
  std::set<std::uint64_t> forwarded_;
  std::uint64_t clock_ = 0;
  std::uint64_t next_verdict_ = 0;
  std::size_t rejected_ = 0;
  std::size_t dropped_ = 0;
};

struct ScenarioConfig {
  std::size_t uav_count = 4;
  std::size_t packets_per_uav = 25;
  std::map<AttackKind, double> attack_mix{{AttackKind::dos, 1.0}, {AttackKind::ddos, 1.0}, {AttackKind::portscan, 1.0}};
  double attack_probability = 0.3;
  std::size_t block_capacity = 16;
  double threshold = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
  static ScenarioConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct ScenarioReport {
  std::size_t packets = 0;
  std::size_t verdicts = 0;
  std::size_t delivered = 0;
  std::size_t quarantined = 0;
  std::size_t dropped = 0;
  std::size_t rejected = 0;
  std::size_t safety_violations = 0;   // abnormal verdict reaching a regular edge node
  std::size_t payload_mismatches = 0;  // delivered bytes differ from submitted bytes
  std::size_t ledger_entries = 0;
  std::size_t chain_length = 0;
  bool chain_valid = false;
  ConfusionCounts overall;
  std::map<std::string, ConfusionCounts> per_attack;  // attacked packets vs normal traffic

  nlohmann::json to_json() const;
};

// Synthesizes one encoded packet. The schema is fitted on a seeded batch of
// normal traffic when the detector did not ship one.
FeatureSchema scenario_schema(const nlohmann::json& shipped, std::uint64_t seed);

ScenarioReport run_scenario(const ScenarioConfig& config, Detector& detector, const FeatureSchema& schema);
// Same, also handing back the controller for inspection.
ScenarioReport run_scenario(const ScenarioConfig& config, Detector& detector, const FeatureSchema& schema,
                            std::unique_ptr<Controller>& controller_out);

}  // namespace ctranatd
