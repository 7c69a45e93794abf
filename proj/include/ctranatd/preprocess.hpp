#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ctranatd/tensor.hpp"
#include "json.hpp"

namespace ctranatd {

enum class SchemaMode { cicids, synthetic };
enum class AttackKind { none, dos, ddos, portscan };

SchemaMode parse_schema_mode(std::string_view s);
std::string to_string(AttackKind k);
AttackKind parse_attack_kind(std::string_view s);

struct FlowRecord {
  double timestamp = 0.0;  // seconds since epoch
  std::string src_ip;
  std::string dst_ip;
  int src_port = 0;
  int dst_port = 0;
  std::string protocol;
  std::vector<double> features;
  std::vector<double> environment;
  bool abnormal = false;
  AttackKind kind = AttackKind::none;
};

// The 53 flow-statistics columns used in both schema modes.
const std::vector<std::string>& default_feature_columns();
// Environment channel names (pressure, humidity, ...); 13 by default so the
// encoded width is 5 + 53 + 13 = 71.
const std::vector<std::string>& default_environment_columns();

constexpr std::size_t kEncodedWidth = 71;
constexpr std::size_t kWindowLength = 60;

struct ParseResult {
  std::vector<FlowRecord> records;  // sorted by timestamp
  std::size_t skipped = 0;
};

struct ParseOptions {
  std::vector<std::string> feature_columns = default_feature_columns();
  std::vector<std::string> environment_columns = default_environment_columns();
};

// Reads a flow CSV with a header. Column names match case-insensitively after
// trimming. Rows with unparseable cells are skipped and counted.
ParseResult parse_csv(const std::filesystem::path& path, SchemaMode mode,
                      const ParseOptions& options = {});
ParseResult parse_csv_text(std::string_view text, SchemaMode mode, const ParseOptions& options = {});

std::uint32_t fnv1a32(std::string_view s);
bool is_ipv4(std::string_view address);

constexpr std::uint32_t kIpHashBuckets = 65536;

// FNV-1a(address) mod 65536, scaled to [0, 1]. Throws EncodingError for
// anything but a dotted-quad IPv4 address.
double encode_ip(std::string_view address);

// Min-max over the fixed port domain [0, 65535].
double normalize_port(int port);

// Protocol tag -> integer id. Ids start at 1 in first-seen order; 0 is
// reserved for tags not seen during fitting.
class ProtocolTable {
 public:
  int fit(const std::string& tag);
  int lookup(const std::string& tag) const;
  const std::vector<std::string>& tags() const { return tags_; }

 private:
  std::vector<std::string> tags_;
  std::map<std::string, int> ids_;
};

int map_protocol(const std::string& tag, const ProtocolTable& table);

enum class EncoderKind { zscore, minmax, ip_hash, protocol_map, passthrough };

struct ColumnEncoder {
  std::string name;
  EncoderKind kind = EncoderKind::passthrough;
  double mean = 0.0;
  double std = 1.0;
  double min = 0.0;
  double max = 1.0;
};

// Ordered encoders producing the model input vector from one FlowRecord.
// Fitted once on training records; encode() never mutates it.
class FeatureSchema {
 public:
  FeatureSchema() = default;

  std::size_t arity() const { return columns_.size(); }
  const std::vector<ColumnEncoder>& columns() const { return columns_; }
  const ProtocolTable& protocols() const { return protocols_; }
  std::uint32_t hash_buckets() const { return kIpHashBuckets; }
  std::size_t feature_count() const { return feature_count_; }
  std::size_t environment_count() const { return environment_count_; }

  void encode_into(const FlowRecord& r, std::span<double> out) const;
  std::vector<double> encode(const FlowRecord& r) const;

  nlohmann::json to_json() const;
  static FeatureSchema from_json(const nlohmann::json& j);

  friend FeatureSchema fit_standardizer(std::span<const FlowRecord>,
                                        const std::vector<std::string>&,
                                        const std::vector<std::string>&);

 private:
  std::vector<ColumnEncoder> columns_;
  ProtocolTable protocols_;
  std::size_t feature_count_ = 0;
  std::size_t environment_count_ = 0;
};

// Population mean/std per flow feature and environment channel (std 0 -> 1),
// fixed-domain port scaling, IP hashing and a protocol table fitted in
// first-seen order. Throws EmptyDataError on no records.
FeatureSchema fit_standardizer(std::span<const FlowRecord> records,
                               const std::vector<std::string>& feature_names = default_feature_columns(),
                               const std::vector<std::string>& environment_names = default_environment_columns());

struct EnvironmentChannel {
  std::string name;
  double normal_min = 0.0;
  double normal_max = 0.0;
  double excursion = 0.0;              // max distance outside the band
  double excursion_probability = 0.5;  // for abnormal records
};

struct EnvironmentConfig {
  std::vector<EnvironmentChannel> channels;

  static EnvironmentConfig defaults();
  void validate() const;
};

// Fills each record's environment channels. Normal records draw uniformly
// inside the band; abnormal records leave it with the channel's excursion
// probability.
void augment_environment(std::span<FlowRecord> records, const EnvironmentConfig& config,
                         RngState& rng);

// Window label by majority of abnormal members; a 30/30 tie counts as abnormal.
int label_window(std::span<const int> member_labels);

struct MinuteSelection {
  std::vector<std::vector<std::size_t>> members;  // record indices, timestamp order
  std::size_t bins = 0;
  std::size_t dropped_bins = 0;
};

// Buckets records by floor(timestamp / 60) and samples `window` records
// without replacement from every bin holding at least that many.
MinuteSelection select_minute_windows(std::span<const FlowRecord> records, std::size_t window,
                                      RngState& rng);

struct DatasetStats {
  std::size_t parsed = 0;
  std::size_t skipped = 0;
  std::size_t bins = 0;
  std::size_t dropped_bins = 0;
  std::size_t windows = 0;
  std::size_t positive_windows = 0;
};

struct WindowedDataset {
  std::size_t window = kWindowLength;
  std::size_t features = kEncodedWidth;
  std::vector<std::vector<double>> windows;  // each window x features, row-major
  std::vector<int> labels;
  FeatureSchema schema;
  nlohmann::json provenance = nlohmann::json::object();
  DatasetStats stats;

  std::size_t size() const { return windows.size(); }
  // Stacks the selected windows into a (n, window, features) batch.
  Tensor3 batch(std::span<const std::size_t> indices) const;
  WindowedDataset subset(std::span<const std::size_t> indices) const;
};

WindowedDataset encode_windows(std::span<const FlowRecord> records, const MinuteSelection& selection,
                               const FeatureSchema& schema);

// select_minute_windows + label_window + encoding with a fitted schema.
// Throws EmptyDataError when no bin reaches the window size.
WindowedDataset assemble_windows(std::span<const FlowRecord> records, const FeatureSchema& schema,
                                 std::size_t window, RngState& rng);

// Label-stratified split of indices into (kept, held_out); held_out gets
// round(fraction * n) items per class. Falls back to an unstratified split
// (with a warning) when only one class is present.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(
    std::span<const int> labels, double fraction, RngState& rng);

void save_dataset(const std::filesystem::path& path, const WindowedDataset& dataset);
WindowedDataset load_dataset(const std::filesystem::path& path);

nlohmann::json to_json(const DatasetStats& s);

struct PreprocessOptions {
  SchemaMode mode = SchemaMode::synthetic;
  std::uint64_t seed = 0;
  std::size_t window = kWindowLength;
  double test_fraction = 0.2;
  std::optional<AttackKind> attack_filter;  // keep normal + this attack only
  EnvironmentConfig environment = EnvironmentConfig::defaults();
  ParseOptions parse;
};

struct PreprocessResult {
  WindowedDataset train;
  WindowedDataset test;  // empty when test_fraction == 0
};

// Windows are selected and split before the schema is fitted, so statistics
// come from training windows only.
PreprocessResult preprocess_records(std::vector<FlowRecord> records, std::size_t skipped,
                                    const PreprocessOptions& options);

}  // namespace ctranatd
