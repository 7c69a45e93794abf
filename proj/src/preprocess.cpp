#include "ctranatd/preprocess.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <unordered_map>

#include "ctranatd/container.hpp"
#include "ctranatd/errors.hpp"
#include "ctranatd/log.hpp"

namespace ctranatd {

// ---------------------------------------------------------------- names

SchemaMode parse_schema_mode(std::string_view s) {
  if (s == "cicids") return SchemaMode::cicids;
  if (s == "synthetic") return SchemaMode::synthetic;
  throw ConfigError("unknown schema mode '" + std::string(s) + "' (expected cicids|synthetic)");
}

std::string to_string(AttackKind k) {
  switch (k) {
    case AttackKind::none: return "none";
    case AttackKind::dos: return "dos";
    case AttackKind::ddos: return "ddos";
    case AttackKind::portscan: return "portscan";
  }
  return "?";
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n\"");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n\"");
  return std::string(s.substr(b, e - b + 1));
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string key(std::string_view s) { return lower(trim(s)); }

}  // namespace

AttackKind parse_attack_kind(std::string_view s) {
  const auto v = key(s);
  if (v == "dos") return AttackKind::dos;
  if (v == "ddos") return AttackKind::ddos;
  if (v == "portscan") return AttackKind::portscan;
  if (v == "none") return AttackKind::none;
  throw ConfigError("unknown attack kind '" + std::string(s) + "'");
}

const std::vector<std::string>& default_feature_columns() {
  static const std::vector<std::string> cols = {
      "Flow Duration", "Total Fwd Packets", "Total Backward Packets",
      "Total Length of Fwd Packets", "Total Length of Bwd Packets", "Fwd Packet Length Max",
      "Fwd Packet Length Min", "Fwd Packet Length Mean", "Fwd Packet Length Std",
      "Bwd Packet Length Max", "Bwd Packet Length Min", "Bwd Packet Length Mean",
      "Bwd Packet Length Std", "Flow Bytes/s", "Flow Packets/s", "Flow IAT Mean", "Flow IAT Std",
      "Flow IAT Max", "Flow IAT Min", "Fwd IAT Total", "Fwd IAT Mean", "Fwd IAT Std",
      "Fwd IAT Max", "Fwd IAT Min", "Bwd IAT Total", "Bwd IAT Mean", "Bwd IAT Std",
      "Bwd IAT Max", "Bwd IAT Min", "Fwd PSH Flags", "Fwd Header Length", "Bwd Header Length",
      "Fwd Packets/s", "Bwd Packets/s", "Min Packet Length", "Max Packet Length",
      "Packet Length Mean", "Packet Length Std", "FIN Flag Count", "SYN Flag Count",
      "RST Flag Count", "PSH Flag Count", "ACK Flag Count", "Down/Up Ratio",
      "Average Packet Size", "Init_Win_bytes_forward", "Init_Win_bytes_backward",
      "act_data_pkt_fwd", "min_seg_size_forward", "Idle Mean", "Idle Std", "Idle Max",
      "Idle Min"};
  return cols;
}

const std::vector<std::string>& default_environment_columns() {
  static const std::vector<std::string> cols = {
      "atmosphere_pressure_hpa", "humidity_pct", "temperature_c", "surface_accel_x",
      "surface_accel_y", "surface_accel_z", "surface_gravity", "wind_speed_mps",
      "rainfall_mm_h", "visibility_km", "altitude_m", "battery_pct", "link_rssi_dbm"};
  return cols;
}

// ---------------------------------------------------------------- CSV

namespace {

std::vector<std::string_view> split_row(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return cells;
}

bool parse_double(std::string_view cell, double& out) {
  const std::string s = trim(cell);
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

bool parse_port(std::string_view cell, int& out) {
  double v = 0;
  if (!parse_double(cell, v) || v != std::floor(v) || v < 0 || v > 65535) return false;
  out = static_cast<int>(v);
  return true;
}

std::int64_t epoch_seconds(int y, unsigned m, unsigned d, int hh, int mm, int ss) {
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{m}, day{d}};
  if (!ymd.ok()) return -1;
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<std::int64_t>(days) * 86400 + hh * 3600 + mm * 60 + ss;
}

// Accepts epoch seconds, "d/m/yyyy h:mm[:ss] [AM|PM]" and "yyyy-mm-dd hh:mm[:ss]".
bool parse_timestamp(std::string_view cell, double& out) {
  if (parse_double(cell, out)) return true;
  const std::string s = trim(cell);
  int a = 0, b = 0, c = 0, hh = 0, mm = 0, ss = 0;
  char ampm[3] = {0, 0, 0};
  if (std::sscanf(s.c_str(), "%d-%d-%d %d:%d:%d", &a, &b, &c, &hh, &mm, &ss) >= 5) {
    const auto t = epoch_seconds(a, b, c, hh, mm, ss);
    if (t < 0) return false;
    out = static_cast<double>(t);
    return true;
  }
  ss = 0;
  int n = std::sscanf(s.c_str(), "%d/%d/%d %d:%d:%d %2s", &a, &b, &c, &hh, &mm, &ss, ampm);
  if (n < 5) return false;
  if (n == 5) {
    // "h:mm AM" has no seconds field.
    std::sscanf(s.c_str(), "%*d/%*d/%*d %*d:%*d %2s", ampm);
  }
  const std::string mer = lower(ampm);
  if (mer == "pm" && hh < 12) hh += 12;
  if (mer == "am" && hh == 12) hh = 0;
  if (hh > 23 || mm > 59 || ss > 60) return false;
  const auto t = epoch_seconds(c, static_cast<unsigned>(b), static_cast<unsigned>(a), hh, mm, ss);
  if (t < 0) return false;
  out = static_cast<double>(t);
  return true;
}

bool parse_label(std::string_view cell, bool& abnormal, AttackKind& kind) {
  const auto v = key(cell);
  if (v.empty()) return false;
  if (v == "benign" || v == "normal") {
    abnormal = false;
    kind = AttackKind::none;
    return true;
  }
  abnormal = true;
  if (v.find("ddos") != std::string::npos) kind = AttackKind::ddos;
  else if (v.find("dos") != std::string::npos) kind = AttackKind::dos;
  else if (v.find("portscan") != std::string::npos) kind = AttackKind::portscan;
  else kind = AttackKind::none;
  return true;
}

struct ColumnMap {
  std::size_t timestamp, src_ip, dst_ip, src_port, dst_port, protocol, label;
  std::vector<std::size_t> features;
  std::vector<std::size_t> environment;  // empty if the file carries none
};

std::size_t find_column(const std::unordered_map<std::string, std::size_t>& index,
                        std::initializer_list<const char*> aliases, const std::string& display) {
  for (const char* a : aliases) {
    auto it = index.find(key(a));
    if (it != index.end()) return it->second;
  }
  throw SchemaError(display, "missing mandatory column '" + display + "'");
}

ColumnMap map_columns(const std::vector<std::string_view>& header, SchemaMode mode,
                      const ParseOptions& opts) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < header.size(); ++i) index.emplace(key(header[i]), i);  // first wins

  ColumnMap m{};
  if (mode == SchemaMode::cicids) {
    m.timestamp = find_column(index, {"Timestamp"}, "Timestamp");
    m.src_ip = find_column(index, {"Source IP", "Src IP"}, "Source IP");
    m.dst_ip = find_column(index, {"Destination IP", "Dst IP"}, "Destination IP");
    m.src_port = find_column(index, {"Source Port", "Src Port"}, "Source Port");
    m.dst_port = find_column(index, {"Destination Port", "Dst Port"}, "Destination Port");
    m.protocol = find_column(index, {"Protocol"}, "Protocol");
    m.label = find_column(index, {"Label"}, "Label");
  } else {
    m.timestamp = find_column(index, {"timestamp"}, "timestamp");
    m.src_ip = find_column(index, {"src_ip"}, "src_ip");
    m.dst_ip = find_column(index, {"dst_ip"}, "dst_ip");
    m.src_port = find_column(index, {"src_port"}, "src_port");
    m.dst_port = find_column(index, {"dst_port"}, "dst_port");
    m.protocol = find_column(index, {"protocol"}, "protocol");
    m.label = find_column(index, {"label"}, "label");
  }
  for (const auto& f : opts.feature_columns) m.features.push_back(find_column(index, {f.c_str()}, f));

  bool any_env = false;
  for (const auto& e : opts.environment_columns) any_env |= index.count(key(e)) > 0;
  if (mode == SchemaMode::synthetic || any_env) {
    for (const auto& e : opts.environment_columns)
      m.environment.push_back(find_column(index, {e.c_str()}, e));
  }
  return m;
}

}  // namespace

ParseResult parse_csv_text(std::string_view text, SchemaMode mode, const ParseOptions& options) {
  if (text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = nl + 1;
  }
  if (lines.empty()) throw IoError("empty CSV: no header row");
  const ColumnMap cols = map_columns(split_row(lines[0]), mode, options);

  ParseResult result;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (trim(lines[ln]).empty()) continue;
    const auto cells = split_row(lines[ln]);
    FlowRecord r;
    bool ok = true;
    auto cell = [&](std::size_t i) -> std::string_view {
      if (i >= cells.size()) {
        ok = false;
        return {};
      }
      return cells[i];
    };
    std::string_view reason;
    ok = parse_timestamp(cell(cols.timestamp), r.timestamp);
    if (!ok) reason = "timestamp";
    if (ok) {
      r.src_ip = trim(cell(cols.src_ip));
      r.dst_ip = trim(cell(cols.dst_ip));
      ok = ok && is_ipv4(r.src_ip) && is_ipv4(r.dst_ip);
      if (!ok) reason = "ip address";
    }
    if (ok) {
      ok = parse_port(cell(cols.src_port), r.src_port) && parse_port(cell(cols.dst_port), r.dst_port);
      if (!ok) reason = "port";
    }
    if (ok) {
      r.protocol = trim(cell(cols.protocol));
      ok = !r.protocol.empty();
      if (!ok) reason = "protocol";
    }
    if (ok) {
      r.features.resize(cols.features.size());
      for (std::size_t i = 0; ok && i < cols.features.size(); ++i)
        ok = parse_double(cell(cols.features[i]), r.features[i]);
      if (!ok) reason = "feature";
    }
    if (ok && !cols.environment.empty()) {
      r.environment.resize(cols.environment.size());
      for (std::size_t i = 0; ok && i < cols.environment.size(); ++i)
        ok = parse_double(cell(cols.environment[i]), r.environment[i]);
      if (!ok) reason = "environment";
    }
    if (ok) {
      ok = parse_label(cell(cols.label), r.abnormal, r.kind);
      if (!ok) reason = "label";
    }
    if (!ok) {
      ++result.skipped;
      log::debug("skipping CSV line ", ln + 1, ": bad ", reason.empty() ? "row" : reason);
      continue;
    }
    result.records.push_back(std::move(r));
  }
  if (result.skipped > 0) log::warn("skipped ", result.skipped, " malformed CSV rows");
  std::stable_sort(result.records.begin(), result.records.end(),
                   [](const FlowRecord& a, const FlowRecord& b) { return a.timestamp < b.timestamp; });
  return result;
}

ParseResult parse_csv(const std::filesystem::path& path, SchemaMode mode, const ParseOptions& options) {
  if (!std::filesystem::exists(path)) throw IoError("input file not found: " + path.string());
  const std::string text = read_file(path);
  return parse_csv_text(text, mode, options);
}

// ---------------------------------------------------------------- encoders

std::uint32_t fnv1a32(std::string_view s) {
  std::uint32_t h = 2166136261u;
  for (unsigned char c : s) {
    h ^= c;
    h *= 16777619u;
  }
  return h;
}

bool is_ipv4(std::string_view address) {
  int parts = 0;
  std::size_t start = 0;
  while (true) {
    const auto dot = address.find('.', start);
    const auto part = address.substr(start, dot == std::string_view::npos ? std::string_view::npos : dot - start);
    if (part.empty() || part.size() > 3) return false;
    int v = 0;
    for (char c : part) {
      if (c < '0' || c > '9') return false;
      v = v * 10 + (c - '0');
    }
    if (v > 255) return false;
    ++parts;
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  return parts == 4;
}

double encode_ip(std::string_view address) {
  if (!is_ipv4(address)) throw EncodingError("not a dotted-quad IPv4 address: '" + std::string(address) + "'");
  return static_cast<double>(fnv1a32(address) % kIpHashBuckets) / static_cast<double>(kIpHashBuckets - 1);
}

double normalize_port(int port) {
  if (port < 0 || port > 65535) throw InvalidArgument("port out of range: " + std::to_string(port));
  return static_cast<double>(port) / 65535.0;
}

int ProtocolTable::fit(const std::string& tag) {
  auto it = ids_.find(tag);
  if (it != ids_.end()) return it->second;
  tags_.push_back(tag);
  const int id = static_cast<int>(tags_.size());
  ids_.emplace(tag, id);
  return id;
}

int ProtocolTable::lookup(const std::string& tag) const {
  auto it = ids_.find(tag);
  return it == ids_.end() ? 0 : it->second;
}

int map_protocol(const std::string& tag, const ProtocolTable& table) {
  const int id = table.lookup(tag);
  if (id == 0) log::warn("unknown protocol tag '", tag, "' mapped to 0");
  return id;
}

// ---------------------------------------------------------------- schema

namespace {

const char* kind_name(EncoderKind k) {
  switch (k) {
    case EncoderKind::zscore: return "zscore";
    case EncoderKind::minmax: return "minmax";
    case EncoderKind::ip_hash: return "ip_hash";
    case EncoderKind::protocol_map: return "protocol_map";
    case EncoderKind::passthrough: return "passthrough";
  }
  return "?";
}

EncoderKind kind_from(const std::string& s) {
  for (auto k : {EncoderKind::zscore, EncoderKind::minmax, EncoderKind::ip_hash,
                 EncoderKind::protocol_map, EncoderKind::passthrough})
    if (s == kind_name(k)) return k;
  throw SchemaError(s, "unknown encoder kind '" + s + "'");
}

}  // namespace

FeatureSchema fit_standardizer(std::span<const FlowRecord> records,
                               const std::vector<std::string>& feature_names,
                               const std::vector<std::string>& environment_names) {
  if (records.empty()) throw EmptyDataError("fit_standardizer: no training records");
  FeatureSchema s;
  s.feature_count_ = feature_names.size();
  s.environment_count_ = environment_names.size();
  s.columns_.push_back({"src_ip", EncoderKind::ip_hash});
  s.columns_.push_back({"dst_ip", EncoderKind::ip_hash});
  s.columns_.push_back({"src_port", EncoderKind::minmax, 0, 1, 0, 65535});
  s.columns_.push_back({"dst_port", EncoderKind::minmax, 0, 1, 0, 65535});
  s.columns_.push_back({"protocol", EncoderKind::protocol_map});

  auto zscore = [&](const std::string& name, auto value_of) {
    double mean = 0.0;
    for (const auto& r : records) mean += value_of(r);
    mean /= static_cast<double>(records.size());
    double var = 0.0;
    for (const auto& r : records) var += (value_of(r) - mean) * (value_of(r) - mean);
    var /= static_cast<double>(records.size());
    const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
    s.columns_.push_back({name, EncoderKind::zscore, mean, sd});
  };
  for (std::size_t i = 0; i < feature_names.size(); ++i) {
    for (const auto& r : records)
      if (r.features.size() != feature_names.size())
        throw SchemaError(feature_names[i], "record has " + std::to_string(r.features.size()) +
                                                " features, schema expects " +
                                                std::to_string(feature_names.size()));
    zscore(feature_names[i], [i](const FlowRecord& r) { return r.features[i]; });
  }
  for (std::size_t i = 0; i < environment_names.size(); ++i) {
    for (const auto& r : records)
      if (r.environment.size() != environment_names.size())
        throw SchemaError(environment_names[i], "record is missing environment channels");
    zscore(environment_names[i], [i](const FlowRecord& r) { return r.environment[i]; });
  }
  for (const auto& r : records) s.protocols_.fit(r.protocol);
  return s;
}

void FeatureSchema::encode_into(const FlowRecord& r, std::span<double> out) const {
  if (out.size() != columns_.size()) throw DimensionError("feature", "encode: output width mismatch");
  if (r.features.size() != feature_count_)
    throw SchemaError("features", "record has " + std::to_string(r.features.size()) +
                                      " flow features, schema expects " + std::to_string(feature_count_));
  if (r.environment.size() != environment_count_)
    throw SchemaError("environment", "record has " + std::to_string(r.environment.size()) +
                                         " environment channels, schema expects " +
                                         std::to_string(environment_count_));
  out[0] = encode_ip(r.src_ip);
  out[1] = encode_ip(r.dst_ip);
  out[2] = normalize_port(r.src_port);
  out[3] = normalize_port(r.dst_port);
  out[4] = static_cast<double>(map_protocol(r.protocol, protocols_));
  std::size_t c = 5;
  for (double v : r.features) {
    out[c] = (v - columns_[c].mean) / columns_[c].std;
    ++c;
  }
  for (double v : r.environment) {
    out[c] = (v - columns_[c].mean) / columns_[c].std;
    ++c;
  }
}

std::vector<double> FeatureSchema::encode(const FlowRecord& r) const {
  std::vector<double> out(columns_.size());
  encode_into(r, out);
  return out;
}

nlohmann::json FeatureSchema::to_json() const {
  nlohmann::json j;
  j["hash_buckets"] = kIpHashBuckets;
  j["feature_count"] = feature_count_;
  j["environment_count"] = environment_count_;
  j["protocols"] = protocols_.tags();
  auto& cols = j["columns"] = nlohmann::json::array();
  for (const auto& c : columns_) {
    cols.push_back({{"name", c.name}, {"kind", kind_name(c.kind)}, {"mean", c.mean},
                    {"std", c.std}, {"min", c.min}, {"max", c.max}});
  }
  return j;
}

FeatureSchema FeatureSchema::from_json(const nlohmann::json& j) {
  FeatureSchema s;
  try {
    s.feature_count_ = j.at("feature_count").get<std::size_t>();
    s.environment_count_ = j.at("environment_count").get<std::size_t>();
    for (const auto& t : j.at("protocols")) s.protocols_.fit(t.get<std::string>());
    for (const auto& c : j.at("columns")) {
      s.columns_.push_back({c.at("name").get<std::string>(), kind_from(c.at("kind").get<std::string>()),
                            c.at("mean").get<double>(), c.at("std").get<double>(),
                            c.at("min").get<double>(), c.at("max").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("schema", std::string("malformed schema JSON: ") + e.what());
  }
  if (s.columns_.size() != 5 + s.feature_count_ + s.environment_count_)
    throw SchemaError("columns", "schema column count does not match its declared layout");
  return s;
}

// ---------------------------------------------------------------- environment

EnvironmentConfig EnvironmentConfig::defaults() {
  EnvironmentConfig c;
  c.channels = {
      {"atmosphere_pressure_hpa", 990.0, 1020.0, 25.0, 0.5},
      {"humidity_pct", 40.0, 70.0, 25.0, 0.5},
      {"temperature_c", 10.0, 30.0, 12.0, 0.5},
      {"surface_accel_x", -0.5, 0.5, 2.0, 0.5},
      {"surface_accel_y", -0.5, 0.5, 2.0, 0.5},
      {"surface_accel_z", 9.3, 10.3, 2.0, 0.5},
      {"surface_gravity", 9.78, 9.83, 0.1, 0.5},
      {"wind_speed_mps", 0.0, 12.0, 10.0, 0.5},
      {"rainfall_mm_h", 0.0, 5.0, 20.0, 0.5},
      {"visibility_km", 5.0, 20.0, 4.0, 0.5},
      {"altitude_m", 80.0, 150.0, 50.0, 0.5},
      {"battery_pct", 30.0, 100.0, 25.0, 0.5},
      {"link_rssi_dbm", -85.0, -55.0, 15.0, 0.5},
  };
  return c;
}

void EnvironmentConfig::validate() const {
  for (const auto& ch : channels) {
    if (ch.normal_min > ch.normal_max)
      throw ConfigError("environment channel '" + ch.name + "': band min > max");
    if (ch.excursion < 0.0) throw ConfigError("environment channel '" + ch.name + "': negative excursion");
    if (!(ch.excursion_probability >= 0.0 && ch.excursion_probability <= 1.0))
      throw ConfigError("environment channel '" + ch.name + "': excursion probability outside [0, 1]");
  }
}

void augment_environment(std::span<FlowRecord> records, const EnvironmentConfig& config, RngState& rng) {
  config.validate();
  for (auto& r : records) {
    r.environment.resize(config.channels.size());
    for (std::size_t i = 0; i < config.channels.size(); ++i) {
      const auto& ch = config.channels[i];
      const double inside = rng.uniform(ch.normal_min, ch.normal_max);
      if (r.abnormal && ch.excursion > 0.0 && rng.uniform() < ch.excursion_probability) {
        // Strictly outside the band: at least 10% of the excursion beyond an edge.
        const double dist = ch.excursion * rng.uniform(0.1, 1.0);
        r.environment[i] = rng.uniform() < 0.5 ? ch.normal_min - dist : ch.normal_max + dist;
      } else {
        r.environment[i] = inside;
      }
    }
  }
}

// ---------------------------------------------------------------- windows

int label_window(std::span<const int> member_labels) {
  if (member_labels.size() != kWindowLength)
    throw InvalidArgument("label_window: expected " + std::to_string(kWindowLength) +
                          " member labels, got " + std::to_string(member_labels.size()));
  const auto abnormal = std::count(member_labels.begin(), member_labels.end(), 1);
  return 2 * abnormal >= static_cast<std::ptrdiff_t>(member_labels.size()) ? 1 : 0;
}

MinuteSelection select_minute_windows(std::span<const FlowRecord> records, std::size_t window,
                                      RngState& rng) {
  if (window == 0) throw InvalidArgument("window size must be >= 1");
  MinuteSelection sel;
  std::size_t i = 0;
  while (i < records.size()) {
    const auto minute = std::floor(records[i].timestamp / 60.0);
    std::size_t j = i;
    while (j < records.size() && std::floor(records[j].timestamp / 60.0) == minute) ++j;
    ++sel.bins;
    const std::size_t n = j - i;
    if (n < window) {
      ++sel.dropped_bins;
    } else {
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), i);
      // Partial Fisher-Yates: the first `window` slots are a uniform sample.
      for (std::size_t k = 0; k < window; ++k) std::swap(idx[k], idx[k + rng.below(n - k)]);
      idx.resize(window);
      std::sort(idx.begin(), idx.end());  // records are timestamp-sorted
      sel.members.push_back(std::move(idx));
    }
    i = j;
  }
  return sel;
}

Tensor3 WindowedDataset::batch(std::span<const std::size_t> indices) const {
  Tensor3 t(indices.size(), window, features);
  const std::size_t stride = window * features;
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto& w = windows.at(indices[b]);
    std::copy(w.begin(), w.end(), t.data().begin() + static_cast<std::ptrdiff_t>(b * stride));
  }
  return t;
}

WindowedDataset WindowedDataset::subset(std::span<const std::size_t> indices) const {
  WindowedDataset d;
  d.window = window;
  d.features = features;
  d.schema = schema;
  d.provenance = provenance;
  d.stats = stats;
  for (auto i : indices) {
    d.windows.push_back(windows.at(i));
    d.labels.push_back(labels.at(i));
  }
  d.stats.windows = d.windows.size();
  d.stats.positive_windows = static_cast<std::size_t>(std::count(d.labels.begin(), d.labels.end(), 1));
  return d;
}

WindowedDataset encode_windows(std::span<const FlowRecord> records, const MinuteSelection& selection,
                               const FeatureSchema& schema) {
  WindowedDataset ds;
  ds.features = schema.arity();
  ds.schema = schema;
  ds.window = selection.members.empty() ? kWindowLength : selection.members.front().size();
  for (const auto& members : selection.members) {
    std::vector<double> w(members.size() * ds.features);
    std::vector<int> labels;
    labels.reserve(members.size());
    for (std::size_t r = 0; r < members.size(); ++r) {
      const auto& rec = records[members[r]];
      schema.encode_into(rec, std::span<double>(w).subspan(r * ds.features, ds.features));
      labels.push_back(rec.abnormal ? 1 : 0);
    }
    ds.windows.push_back(std::move(w));
    if (labels.size() == kWindowLength) {
      ds.labels.push_back(label_window(labels));
    } else {
      const auto abnormal = std::count(labels.begin(), labels.end(), 1);
      ds.labels.push_back(2 * abnormal >= static_cast<std::ptrdiff_t>(labels.size()) ? 1 : 0);
    }
  }
  ds.stats.bins = selection.bins;
  ds.stats.dropped_bins = selection.dropped_bins;
  ds.stats.windows = ds.windows.size();
  ds.stats.positive_windows = static_cast<std::size_t>(std::count(ds.labels.begin(), ds.labels.end(), 1));
  return ds;
}

WindowedDataset assemble_windows(std::span<const FlowRecord> records, const FeatureSchema& schema,
                                 std::size_t window, RngState& rng) {
  const auto sel = select_minute_windows(records, window, rng);
  if (sel.members.empty())
    throw EmptyDataError("no minute bin holds " + std::to_string(window) + " records (" +
                         std::to_string(sel.dropped_bins) + " bins dropped)");
  return encode_windows(records, sel, schema);
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(
    std::span<const int> labels, double fraction, RngState& rng) {
  if (labels.empty()) throw EmptyDataError("split: dataset is empty");
  if (!(fraction >= 0.0 && fraction < 1.0)) throw InvalidArgument("split: fraction must be in [0, 1)");
  std::vector<std::vector<std::size_t>> by_class(2);
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i] == 1 ? 1 : 0].push_back(i);
  if (by_class[0].empty() || by_class[1].empty()) {
    log::warn("split: only one class present, falling back to an unstratified split");
    by_class = {by_class[0].empty() ? by_class[1] : by_class[0]};
  }
  std::vector<std::size_t> kept, held;
  for (auto& cls : by_class) {
    std::shuffle(cls.begin(), cls.end(), rng.engine());
    const auto n_held = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(cls.size())));
    held.insert(held.end(), cls.begin(), cls.begin() + static_cast<std::ptrdiff_t>(n_held));
    kept.insert(kept.end(), cls.begin() + static_cast<std::ptrdiff_t>(n_held), cls.end());
  }
  std::sort(kept.begin(), kept.end());
  std::sort(held.begin(), held.end());
  return {kept, held};
}

// ---------------------------------------------------------------- persistence

nlohmann::json to_json(const DatasetStats& s) {
  return {{"parsed", s.parsed}, {"skipped", s.skipped}, {"bins", s.bins},
          {"dropped_bins", s.dropped_bins}, {"windows", s.windows},
          {"positive_windows", s.positive_windows}};
}

namespace {
constexpr std::string_view kDataMagic = "CTRDATA1";
}

void save_dataset(const std::filesystem::path& path, const WindowedDataset& ds) {
  nlohmann::json header;
  header["format"] = "ctranatd-windows";
  header["version"] = 1;
  header["shape"] = {ds.windows.size(), ds.window, ds.features};
  header["labels"] = ds.labels;
  header["schema"] = ds.schema.to_json();
  header["provenance"] = ds.provenance;
  header["stats"] = to_json(ds.stats);
  std::vector<double> payload;
  payload.reserve(ds.windows.size() * ds.window * ds.features);
  for (const auto& w : ds.windows) {
    if (w.size() != ds.window * ds.features) throw DimensionError("window", "save_dataset: ragged window");
    payload.insert(payload.end(), w.begin(), w.end());
  }
  write_container(path, kDataMagic, header, payload);
  auto sidecar = path;
  sidecar += ".stats.json";
  write_file_atomic(sidecar, to_json(ds.stats).dump(2) + "\n");
}

WindowedDataset load_dataset(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("dataset not found: " + path.string());
  Container c = read_container(path, kDataMagic);
  WindowedDataset ds;
  try {
    const auto shape = c.header.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 3) throw IoError(path.string() + ": bad shape header");
    ds.window = shape[1];
    ds.features = shape[2];
    ds.labels = c.header.at("labels").get<std::vector<int>>();
    ds.schema = FeatureSchema::from_json(c.header.at("schema"));
    ds.provenance = c.header.value("provenance", nlohmann::json::object());
    const auto& st = c.header.at("stats");
    ds.stats = {st.at("parsed"), st.at("skipped"), st.at("bins"), st.at("dropped_bins"),
                st.at("windows"), st.at("positive_windows")};
    const std::size_t stride = ds.window * ds.features;
    if (c.payload.size() != shape[0] * stride || ds.labels.size() != shape[0])
      throw IoError(path.string() + ": payload does not match shape header");
    for (std::size_t i = 0; i < shape[0]; ++i)
      ds.windows.emplace_back(c.payload.begin() + static_cast<std::ptrdiff_t>(i * stride),
                              c.payload.begin() + static_cast<std::ptrdiff_t>((i + 1) * stride));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": malformed dataset header: " + e.what());
  }
  return ds;
}

// ---------------------------------------------------------------- pipeline

PreprocessResult preprocess_records(std::vector<FlowRecord> records, std::size_t skipped,
                                    const PreprocessOptions& options) {
  if (options.attack_filter) {
    const auto kind = *options.attack_filter;
    std::erase_if(records, [kind](const FlowRecord& r) { return r.abnormal && r.kind != kind; });
  }
  const std::size_t parsed = records.size();
  const std::size_t env_width = options.parse.environment_columns.size();
  const bool need_env = std::any_of(records.begin(), records.end(),
                                    [&](const FlowRecord& r) { return r.environment.size() != env_width; });
  if (need_env) {
    if (options.environment.channels.size() != env_width)
      throw ConfigError("environment generator defines " +
                        std::to_string(options.environment.channels.size()) + " channels, schema needs " +
                        std::to_string(env_width));
    RngState env_rng(derive_seed(options.seed, "environment"));
    augment_environment(records, options.environment, env_rng);
  }

  RngState window_rng(derive_seed(options.seed, "windows"));
  MinuteSelection sel = select_minute_windows(records, options.window, window_rng);
  if (sel.members.empty())
    throw EmptyDataError("no minute bin holds " + std::to_string(options.window) + " records (" +
                         std::to_string(sel.dropped_bins) + " of " + std::to_string(sel.bins) +
                         " bins dropped)");

  std::vector<int> labels;
  for (const auto& m : sel.members) {
    const auto abnormal = std::count_if(m.begin(), m.end(), [&](std::size_t i) { return records[i].abnormal; });
    labels.push_back(2 * abnormal >= static_cast<std::ptrdiff_t>(m.size()) ? 1 : 0);
  }
  RngState split_rng(derive_seed(options.seed, "holdout"));
  auto [train_idx, test_idx] = stratified_split(labels, options.test_fraction, split_rng);

  // Fit on records that belong to training windows only.
  std::vector<FlowRecord> fit_records;
  for (auto w : train_idx)
    for (auto i : sel.members[w]) fit_records.push_back(records[i]);
  const FeatureSchema schema = fit_standardizer(fit_records, options.parse.feature_columns,
                                                options.parse.environment_columns);

  auto make = [&](const std::vector<std::size_t>& which, const char* split) {
    MinuteSelection part;
    part.bins = sel.bins;
    part.dropped_bins = sel.dropped_bins;
    for (auto w : which) part.members.push_back(sel.members[w]);
    WindowedDataset ds = encode_windows(records, part, schema);
    ds.stats.parsed = parsed;
    ds.stats.skipped = skipped;
    ds.provenance = {{"seed", options.seed},
                     {"split", split},
                     {"mode", options.mode == SchemaMode::cicids ? "cicids" : "synthetic"}};
    return ds;
  };
  PreprocessResult out;
  out.train = make(train_idx, "train");
  out.test = make(test_idx, "test");
  return out;
}

}  // namespace ctranatd
