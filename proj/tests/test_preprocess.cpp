#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

#include "ctranatd/errors.hpp"
#include "ctranatd/preprocess.hpp"
#include "ctranatd/synth.hpp"

using namespace ctranatd;

namespace {

std::string header() {
  std::string h = "timestamp,src_ip,dst_ip,src_port,dst_port,protocol";
  for (const auto& c : default_feature_columns()) h += "," + c;
  for (const auto& c : default_environment_columns()) h += "," + c;
  return h + ",Label\n";
}

std::string row(double ts, const std::string& feature0 = "1.5", const char* label = "BENIGN") {
  std::string r = std::to_string(static_cast<long long>(ts)) + ",10.0.0.1,192.168.1.1,5000,80,6," + feature0;
  for (std::size_t i = 1; i < default_feature_columns().size(); ++i) r += ",2";
  for (std::size_t i = 0; i < default_environment_columns().size(); ++i) r += ",3";
  return r + "," + label + "\n";
}

FlowRecord plain_record(double ts, bool abnormal = false) {
  FlowRecord r;
  r.timestamp = ts;
  r.src_ip = "10.0.0.1";
  r.dst_ip = "10.0.0.2";
  r.src_port = 1234;
  r.dst_port = 80;
  r.protocol = "TCP";
  r.features.assign(default_feature_columns().size(), 1.0);
  r.environment.assign(default_environment_columns().size(), 0.0);
  r.abnormal = abnormal;
  return r;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("ctranatd_pp_" + name);
}

}  // namespace

TEST(ParseCsv, WellFormedThreeRows) {
  const auto res = parse_csv_text(header() + row(30) + row(10) + row(20), SchemaMode::synthetic);
  ASSERT_EQ(res.records.size(), 3u);
  EXPECT_EQ(res.skipped, 0u);
  EXPECT_EQ(res.records[0].timestamp, 10.0);  // sorted
  EXPECT_EQ(res.records[2].timestamp, 30.0);
  EXPECT_EQ(res.records[0].features.size(), 53u);
  EXPECT_EQ(res.records[0].environment.size(), 13u);
  EXPECT_FALSE(res.records[0].abnormal);
}

TEST(ParseCsv, NonNumericFeatureCellIsSkipped) {
  const auto res = parse_csv_text(header() + row(1) + row(2, "abc") + row(3), SchemaMode::synthetic);
  EXPECT_EQ(res.records.size(), 2u);
  EXPECT_EQ(res.skipped, 1u);
}

TEST(ParseCsv, HeaderOnlyGivesEmptyList) {
  const auto res = parse_csv_text(header(), SchemaMode::synthetic);
  EXPECT_TRUE(res.records.empty());
  EXPECT_EQ(res.skipped, 0u);
}

TEST(ParseCsv, MissingColumnNamesIt) {
  std::string h = header();
  h.replace(h.find("Flow Duration"), 13, "Flow Duratio");
  try {
    parse_csv_text(h, SchemaMode::synthetic);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.column(), "Flow Duration");
  }
}

TEST(ParseCsv, MissingFileIsIoError) {
  EXPECT_THROW(parse_csv("/nonexistent/flows.csv", SchemaMode::synthetic), IoError);
}

TEST(ParseCsv, CicidsHeaderWithOddSpacingAndTimestamps) {
  std::string h = " Source IP, Destination IP, Source Port, Destination Port, Protocol, Timestamp";
  for (const auto& c : default_feature_columns()) h += ", " + c;
  h += ", Label\r\n";
  auto line = [](const char* ts, const char* label, const char* f0 = "7") {
    std::string r = std::string("10.0.0.1,10.0.0.2,100,80,6,") + ts + "," + f0;
    for (std::size_t i = 1; i < default_feature_columns().size(); ++i) r += ",0";
    return r + "," + label + "\r\n";
  };
  const auto res = parse_csv_text(h + line("3/7/2017 8:55", "BENIGN") + line("3/7/2017 1:02:03 PM", "DDoS") +
                                      line("2017-07-03 09:00:00", "DoS Hulk") +
                                      line("3/7/2017 9:01", "PortScan", "Infinity"),
                                  SchemaMode::cicids);
  ASSERT_EQ(res.records.size(), 3u);
  EXPECT_EQ(res.skipped, 1u);
  // 2017-07-03 is 17350 days after the epoch.
  EXPECT_EQ(res.records[0].timestamp, 17350.0 * 86400 + 8 * 3600 + 55 * 60);
  EXPECT_EQ(res.records[1].kind, AttackKind::dos);
  EXPECT_EQ(res.records[2].timestamp, 17350.0 * 86400 + 13 * 3600 + 2 * 60 + 3);
  EXPECT_EQ(res.records[2].kind, AttackKind::ddos);
  EXPECT_TRUE(res.records[0].environment.empty());
}

TEST(EncodeIp, DeterministicAndInRange) {
  EXPECT_EQ(encode_ip("192.168.1.1"), encode_ip("192.168.1.1"));
  const double v = encode_ip("192.168.1.1");
  EXPECT_GE(v, 0.0);
  EXPECT_LE(v, 1.0);
  // Hand-computed FNV-1a reference values.
  EXPECT_EQ(fnv1a32(""), 2166136261u);
  EXPECT_EQ(fnv1a32("a"), 0xe40c292cu);
  EXPECT_EQ(fnv1a32("foobar"), 0xbf9cf968u);
  EXPECT_DOUBLE_EQ(v, static_cast<double>(fnv1a32("192.168.1.1") % 65536) / 65535.0);
}

TEST(EncodeIp, MalformedAddressThrows) {
  for (const char* bad : {"", "1.2.3", "1.2.3.4.5", "256.1.1.1", "a.b.c.d", "1..2.3", "::1"})
    EXPECT_THROW(encode_ip(bad), EncodingError) << bad;
}

TEST(EncodeIp, UniformAcrossBucketsChiSquare) {
  RngState rng(99);
  constexpr std::size_t kBins = 256;
  std::vector<double> counts(kBins, 0.0);
  constexpr std::size_t n = 100000;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string a = std::to_string(rng.below(256)) + "." + std::to_string(rng.below(256)) + "." +
                          std::to_string(rng.below(256)) + "." + std::to_string(rng.below(256));
    const auto bucket = static_cast<std::size_t>(std::llround(encode_ip(a) * 65535.0));
    counts[bucket / 256] += 1.0;
  }
  const double expected = static_cast<double>(n) / kBins;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  const boost::math::chi_squared dist(kBins - 1);
  EXPECT_LT(chi2, boost::math::quantile(dist, 0.99));
}

TEST(NormalizePort, Examples) {
  EXPECT_EQ(normalize_port(0), 0.0);
  EXPECT_EQ(normalize_port(65535), 1.0);
  EXPECT_NEAR(normalize_port(32768), 0.500008, 1e-6);
  EXPECT_EQ(normalize_port(32768), 32768.0 / 65535.0);
  EXPECT_THROW(normalize_port(-1), InvalidArgument);
  EXPECT_THROW(normalize_port(65536), InvalidArgument);
}

TEST(Protocol, FirstSeenOrderAndUnknown) {
  ProtocolTable t;
  for (const char* p : {"TCP", "UDP", "TCP"}) t.fit(p);
  EXPECT_EQ(map_protocol("TCP", t), 1);
  EXPECT_EQ(map_protocol("UDP", t), 2);
  EXPECT_EQ(map_protocol("SCTP", t), 0);
  EXPECT_EQ(t.tags(), (std::vector<std::string>{"TCP", "UDP"}));
}

TEST(Standardizer, PopulationStatistics) {
  std::vector<FlowRecord> recs;
  for (double v : {1.0, 2.0, 3.0}) {
    auto r = plain_record(0);
    r.features[0] = v;
    recs.push_back(r);
  }
  const auto s = fit_standardizer(recs);
  EXPECT_EQ(s.arity(), kEncodedWidth);
  const auto& c = s.columns()[5];
  EXPECT_DOUBLE_EQ(c.mean, 2.0);
  EXPECT_DOUBLE_EQ(c.std, std::sqrt(2.0 / 3.0));
  // Constant column: std 1, encoded 0.
  EXPECT_EQ(s.columns()[6].std, 1.0);
  for (const auto& r : recs) EXPECT_EQ(s.encode(r)[6], 0.0);
  EXPECT_EQ(fit_standardizer(recs).to_json(), s.to_json());
  EXPECT_THROW(fit_standardizer(std::vector<FlowRecord>{}), EmptyDataError);
}

TEST(Standardizer, EncodingIsPureAndSchemaRoundTrips) {
  std::vector<FlowRecord> recs{plain_record(0), plain_record(1)};
  recs[1].features[3] = 9.0;
  recs[1].protocol = "UDP";
  const auto s = fit_standardizer(recs);
  const auto before = s.to_json();
  auto unseen = plain_record(2);
  unseen.protocol = "SCTP";
  const auto e1 = s.encode(unseen);
  EXPECT_EQ(e1[4], 0.0);
  EXPECT_EQ(s.encode(unseen), e1);
  EXPECT_EQ(s.to_json(), before);
  const auto restored = FeatureSchema::from_json(before);
  EXPECT_EQ(restored.encode(recs[1]), s.encode(recs[1]));
}

TEST(Environment, NormalInsideAbnormalOutside) {
  auto cfg = EnvironmentConfig::defaults();
  ASSERT_EQ(cfg.channels.size(), default_environment_columns().size());
  for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
    EXPECT_EQ(cfg.channels[i].name, default_environment_columns()[i]);
    cfg.channels[i].excursion_probability = 1.0;
  }
  EXPECT_EQ(cfg.channels[0].normal_min, 990.0);
  EXPECT_EQ(cfg.channels[0].normal_max, 1020.0);
  std::vector<FlowRecord> recs;
  for (int i = 0; i < 500; ++i) recs.push_back(plain_record(i, i % 2 == 1));
  RngState rng(5);
  augment_environment(recs, cfg, rng);
  for (const auto& r : recs) {
    for (std::size_t c = 0; c < cfg.channels.size(); ++c) {
      const auto& ch = cfg.channels[c];
      const bool inside = r.environment[c] >= ch.normal_min && r.environment[c] <= ch.normal_max;
      EXPECT_EQ(inside, !r.abnormal) << ch.name << " " << r.environment[c];
    }
  }
  auto again = recs;
  RngState rng2(5);
  augment_environment(again, cfg, rng2);
  for (std::size_t i = 0; i < recs.size(); ++i) EXPECT_EQ(again[i].environment, recs[i].environment);

  cfg.channels[1].normal_min = 80;
  cfg.channels[1].normal_max = 70;
  EXPECT_THROW(augment_environment(recs, cfg, rng), ConfigError);
}

TEST(Windows, LabelRule) {
  std::vector<int> labels(60, 0);
  EXPECT_EQ(label_window(labels), 0);
  std::fill(labels.begin(), labels.begin() + 30, 1);
  EXPECT_EQ(label_window(labels), 1);
  labels[0] = 0;
  EXPECT_EQ(label_window(labels), 0);
  std::fill(labels.begin(), labels.end(), 1);
  EXPECT_EQ(label_window(labels), 1);
  EXPECT_THROW(label_window(std::vector<int>(59, 0)), InvalidArgument);
}

TEST(Windows, BinsOf60_59_120) {
  std::vector<FlowRecord> recs;
  for (int i = 0; i < 60; ++i) recs.push_back(plain_record(i));                // minute 0: 60
  for (int i = 0; i < 59; ++i) recs.push_back(plain_record(60 + i));           // minute 1: 59
  for (int i = 0; i < 120; ++i) recs.push_back(plain_record(120 + i * 0.5));   // minute 2: 120
  RngState rng(11);
  const auto sel = select_minute_windows(recs, 60, rng);
  EXPECT_EQ(sel.bins, 3u);
  EXPECT_EQ(sel.dropped_bins, 1u);
  ASSERT_EQ(sel.members.size(), 2u);
  std::vector<std::size_t> first(60);
  std::iota(first.begin(), first.end(), 0);
  EXPECT_EQ(sel.members[0], first);
  const auto& m = sel.members[1];
  EXPECT_EQ(std::set<std::size_t>(m.begin(), m.end()).size(), 60u);
  EXPECT_TRUE(std::is_sorted(m.begin(), m.end()));
  for (auto i : m) EXPECT_GE(i, 119u);
  RngState rng2(11);
  EXPECT_EQ(select_minute_windows(recs, 60, rng2).members, sel.members);

  const auto schema = fit_standardizer(recs);
  RngState rng3(11);
  const auto ds = assemble_windows(recs, schema, 60, rng3);
  EXPECT_EQ(ds.size(), 2u);
  for (const auto& w : ds.windows) EXPECT_EQ(w.size(), 60u * 71u);
  const auto b = ds.batch(std::vector<std::size_t>{1, 0});
  EXPECT_EQ(b.shape().batch, 2u);
  EXPECT_EQ(b.shape().time, 60u);
  EXPECT_EQ(b.shape().feature, 71u);
}

TEST(Windows, NoFullBinIsEmptyDataError) {
  std::vector<FlowRecord> recs;
  for (int i = 0; i < 59; ++i) recs.push_back(plain_record(i));
  const auto schema = fit_standardizer(recs);
  RngState rng(1);
  EXPECT_THROW(assemble_windows(recs, schema, 60, rng), EmptyDataError);
}

TEST(Split, StratifiedCounts) {
  std::vector<int> labels(100, 0);
  std::fill(labels.begin(), labels.begin() + 50, 1);
  RngState rng(3);
  auto [kept, held] = stratified_split(labels, 0.2, rng);
  EXPECT_EQ(kept.size(), 80u);
  EXPECT_EQ(held.size(), 20u);
  EXPECT_EQ(std::count_if(held.begin(), held.end(), [&](auto i) { return labels[i] == 1; }), 10);
  std::vector<std::size_t> all = kept;
  all.insert(all.end(), held.begin(), held.end());
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expect(100);
  std::iota(expect.begin(), expect.end(), 0);
  EXPECT_EQ(all, expect);

  std::vector<int> ten{1, 0, 1, 0, 0, 1, 0, 1, 0, 1};
  auto [k2, h2] = stratified_split(ten, 0.2, rng);
  EXPECT_EQ(k2.size(), 8u);
  EXPECT_EQ(h2.size(), 2u);
}

TEST(Synth, AttackFractionZeroIsAllNormal) {
  SynthConfig cfg;
  cfg.records = 600;
  cfg.attack_fraction = 0.0;
  for (const auto& r : synthesize(cfg)) EXPECT_FALSE(r.abnormal);
}

TEST(Synth, SameSeedSameBytes) {
  SynthConfig cfg;
  cfg.records = 1200;
  cfg.seed = 17;
  cfg.kind = AttackKind::portscan;
  const auto a = to_csv(synthesize(cfg));
  EXPECT_EQ(a, to_csv(synthesize(cfg)));
  cfg.seed = 18;
  EXPECT_NE(a, to_csv(synthesize(cfg)));
}

TEST(Synth, SixThousandRecordsGiveHundredBins) {
  SynthConfig cfg;
  cfg.records = 6000;
  const auto recs = synthesize(cfg);
  RngState rng(0);
  const auto sel = select_minute_windows(recs, 60, rng);
  EXPECT_EQ(sel.bins, 100u);
  EXPECT_EQ(sel.dropped_bins, 0u);
  // 30 of 100 minutes attacked at default settings.
  std::size_t attacked = 0;
  for (const auto& m : sel.members) {
    std::vector<int> l;
    for (auto i : m) l.push_back(recs[i].abnormal);
    attacked += label_window(l);
  }
  EXPECT_EQ(attacked, 30u);
}

TEST(Synth, InvalidFraction) {
  SynthConfig cfg;
  cfg.attack_fraction = 1.5;
  EXPECT_THROW(synthesize(cfg), InvalidArgument);
}

TEST(Synth, CsvParsesBack) {
  SynthConfig cfg;
  cfg.records = 180;
  cfg.kind = AttackKind::ddos;
  const auto recs = synthesize(cfg);
  const auto res = parse_csv_text(to_csv(recs), SchemaMode::synthetic);
  ASSERT_EQ(res.records.size(), recs.size());
  EXPECT_EQ(res.skipped, 0u);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(res.records[i].features, recs[i].features);
    EXPECT_EQ(res.records[i].environment, recs[i].environment);
    EXPECT_EQ(res.records[i].abnormal, recs[i].abnormal);
    if (recs[i].abnormal) EXPECT_EQ(res.records[i].kind, AttackKind::ddos);
  }
}

TEST(Pipeline, NoTrainTestLeakage) {
  SynthConfig cfg;
  cfg.records = 3000;
  cfg.seed = 4;
  PreprocessOptions opts;
  opts.seed = 4;
  auto out = preprocess_records(synthesize(cfg), 0, opts);
  EXPECT_EQ(out.train.size() + out.test.size(), 50u);
  EXPECT_EQ(out.test.size(), 10u);
  EXPECT_EQ(out.train.schema.to_json(), out.test.schema.to_json());
  // Schema is fitted on exactly the training rows: every z-scored column has
  // mean 0 and population variance 1 there (or is constant).
  const std::size_t w = kEncodedWidth;
  for (std::size_t c = 5; c < w; ++c) {
    double sum = 0, sq = 0, n = 0;
    for (const auto& win : out.train.windows)
      for (std::size_t r = 0; r < 60; ++r) {
        sum += win[r * w + c];
        n += 1;
      }
    const double mean = sum / n;
    for (const auto& win : out.train.windows)
      for (std::size_t r = 0; r < 60; ++r) sq += (win[r * w + c] - mean) * (win[r * w + c] - mean);
    EXPECT_NEAR(mean, 0.0, 1e-9) << c;
    EXPECT_NEAR(sq / n, 1.0, 1e-9) << c;
  }
}

TEST(Pipeline, DatasetRoundTrip) {
  SynthConfig cfg;
  cfg.records = 1200;
  PreprocessOptions opts;
  auto out = preprocess_records(synthesize(cfg), 2, opts);
  const auto path = temp_path("ds.bin");
  save_dataset(path, out.train);
  const auto back = load_dataset(path);
  EXPECT_EQ(back.windows, out.train.windows);
  EXPECT_EQ(back.labels, out.train.labels);
  EXPECT_EQ(back.schema.to_json(), out.train.schema.to_json());
  EXPECT_EQ(back.stats.skipped, 2u);
  EXPECT_TRUE(std::filesystem::exists(path.string() + ".stats.json"));
  std::filesystem::remove(path);
  std::filesystem::remove(path.string() + ".stats.json");
}
