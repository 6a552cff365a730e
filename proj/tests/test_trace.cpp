#include <gtest/gtest.h>

#include <sstream>

#include "bwpredict/trace.hpp"

using namespace bwp;

namespace {
const char* kLte3 =
    "BW,LTE-neighbors,RSSI,RSRQ,Echng,TA,Speed,Band,extra\n"
    "10.5,3,-80,-11,0,2,5.5,B2,x\n"
    "12.0,4,-81,-12,1,3,6.0,B13,y\n"
    "9.25,2,-79,-10,0,3,6.5,B2,z\n";

Trace ingest(const std::string& text, const FeatureSchema& schema = FeatureSchema::lte8()) {
  std::istringstream in(text);
  return ingest_csv_stream(in, schema);
}

Trace ramp(std::size_t n) {
  std::vector<Sample> s;
  for (std::size_t i = 0; i < n; ++i)
    s.push_back({static_cast<std::int64_t>(i), {static_cast<double>(i), 1, 2, 3, 0, 1, 5, 0}, std::nullopt});
  return Trace(FeatureSchema::lte8(), s);
}
}  // namespace

TEST(Schema, BuiltIns) {
  EXPECT_EQ(FeatureSchema::lte8().width(), 8u);
  EXPECT_EQ(FeatureSchema::nr5g12().width(), 12u);
  EXPECT_EQ(FeatureSchema::lte8().target_index(), 0u);
  EXPECT_NO_THROW(FeatureSchema::nr5g12().validate());
  EXPECT_THROW(FeatureSchema::by_name("nope"), Error);
}

TEST(Ingest, ThreeRows) {
  const Trace t = ingest(kLte3);
  ASSERT_EQ(t.size(), 3u);
  EXPECT_EQ(t[1].values[0], 12.0);
  EXPECT_EQ(t[1].values[7], 1.0);
  EXPECT_EQ(t[2].values[7], 0.0);
  EXPECT_EQ(t.code_maps().at("Band"), (std::vector<std::string>{"B2", "B13"}));
  EXPECT_EQ(t[2].t, 2);
}

TEST(Ingest, MissingColumnNamesIt) {
  try {
    ingest("BW,LTE-neighbors,RSRQ,Echng,TA,Speed,Band\n1,2,3,0,1,1,B2\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::schema);
    EXPECT_STREQ(e.what(), "RSSI");
  }
}

TEST(Ingest, BadNumberReportsRow) {
  try {
    ingest("BW,LTE-neighbors,RSSI,RSRQ,Echng,TA,Speed,Band\n1,2,3,4,0,1,1,B2\n1,2,abc,4,0,1,1,B2\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::parse);
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos);
  }
}

TEST(Ingest, EmptyFile) {
  try {
    ingest("");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::empty_input);
  }
}

TEST(Ingest, ForwardFillsGaps) {
  const Trace t = ingest(
      "BW,LTE-neighbors,RSSI,RSRQ,Echng,TA,Speed,Band\n"
      "1,,-80,-11,0,2,5,B2\n"
      "2,3,NA,-11,0,2,5,B2\n"
      "3,4,,-11,0,2,5,\n");
  EXPECT_EQ(t[0].values[1], 0.0);
  EXPECT_EQ(t[1].values[2], -80.0);
  EXPECT_EQ(t[2].values[2], -80.0);
  EXPECT_EQ(t[2].values[7], 0.0);
  EXPECT_EQ(t.ingest_report().filled_cells.at("RSSI"), 2u);
}

TEST(Ingest, TimestampsAndSpacing) {
  const Trace t = ingest(
      "ts,BW,LTE-neighbors,RSSI,RSRQ,Echng,TA,Speed,Band\n"
      "100,1,1,1,1,0,1,1,B2\n"
      "102,1,1,1,1,0,1,1,B2\n"
      "104,1,1,1,1,0,1,1,B2\n");
  EXPECT_EQ(t.period(), 2);
  EXPECT_EQ(t[2].t, 4);
  EXPECT_THROW(ingest("ts,BW,LTE-neighbors,RSSI,RSRQ,Echng,TA,Speed,Band\n"
                      "0,1,1,1,1,0,1,1,B2\n1,1,1,1,1,0,1,1,B2\n3,1,1,1,1,0,1,1,B2\n"),
               Error);
}

TEST(Ingest, NegativeBandwidthRejected) {
  EXPECT_THROW(ingest("BW,LTE-neighbors,RSSI,RSRQ,Echng,TA,Speed,Band\n-1,1,1,1,0,1,1,B2\n"), Error);
}

TEST(Ingest, FiveGDerivesHandoffFromCellIdAndModeFromLabel) {
  const Trace t = ingest(
      "DL,UL,RSSI,RSRQ,RSRP,NRxSRP,NRxSRQ,SNR,CQI,NetworkMode,Speed,CellID\n"
      "50,5,-80,-10,-90,-100,-12,20,10,5G,30,a\n"
      "40,5,-80,-10,-90,-100,-12,20,10,5G,30,b\n"
      "10,5,-80,-10,-90,-100,-12,20,10,LTE,30,b\n",
      FeatureSchema::nr5g12());
  EXPECT_EQ(t.column("Cell-handoff"), (std::vector<double>{0, 1, 0}));
  EXPECT_EQ(t.modes(), (std::vector<int>{1, 1, 0}));
  EXPECT_EQ(t.ingest_report().derived_columns, (std::vector<std::string>{"Cell-handoff"}));
}

TEST(Ingest, CsvRoundTripIsBitExact) {
  std::vector<Sample> s;
  for (int i = 0; i < 20; ++i)
    s.push_back({i, {0.1 * i + 1e-13, 1.0 / 3.0, -80.123456789012345, -11, static_cast<double>(i % 2), 2, 5.5, static_cast<double>(i % 3)}, std::nullopt});
  const Trace t(FeatureSchema::lte8(), s, "rt", 1, {{"Band", {"B2", "B13", "B4"}}});
  std::ostringstream out;
  write_csv(out, t);
  const Trace back = ingest(out.str());
  ASSERT_EQ(back.size(), t.size());
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(back[i].values, t[i].values);
}

TEST(Serialize, JsonRoundTripAndVersion) {
  const Trace t = ingest(kLte3);
  const Trace back = trace_from_json(Json::parse(trace_to_json(t).dump()));
  EXPECT_EQ(back.samples(), t.samples());
  EXPECT_EQ(back.code_maps(), t.code_maps());
  Json j = trace_to_json(t);
  EXPECT_EQ(j.begin().key(), "format");
  j["version"] = 2;
  try {
    trace_from_json(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::version);
  }
}

TEST(Split, Sizes) {
  auto a = split(ramp(100));
  EXPECT_EQ(a.train.size(), 60u);
  EXPECT_EQ(a.validation.size(), 10u);
  EXPECT_EQ(a.test.size(), 30u);
  auto b = split(ramp(101));
  EXPECT_EQ(b.test.size(), 31u);
  EXPECT_EQ(b.validation[0].values[0], 60.0);
  EXPECT_THROW(split(ramp(5)), Error);
  try {
    split(ramp(100), {0.5, 0.1, 0.3});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
  }
}

TEST(Windows, Counts) {
  EXPECT_EQ(make_windows(ramp(10), 5, 1).size(), 5u);
  EXPECT_EQ(make_windows(ramp(10), 5, 3).size(), 3u);
  EXPECT_THROW(make_windows(ramp(5), 5, 1), Error);
}

TEST(Windows, ConstantColumnNormalizesToZero) {
  const auto ds = make_windows(ramp(12), 3, 1);
  EXPECT_TRUE(ds.stats.constant[1]);
  EXPECT_EQ(ds.stats.std[1], 1.0);
  for (const auto& it : ds.items) EXPECT_EQ(it.input.col(1).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Windows, LastRowsReconstructBandwidth) {
  const Trace t = ramp(30);
  for (std::size_t w : {1u, 3u, 5u})
    for (std::size_t tau : {1u, 2u, 3u}) {
      const auto ds = make_windows(t, w, tau);
      for (std::size_t i = 0; i < ds.size(); ++i) {
        const double raw = ds.stats.denormalize(0, ds.items[i].input(static_cast<Eigen::Index>(w - 1), 0));
        EXPECT_NEAR(raw, static_cast<double>(w - 1 + i), 1e-9);
        EXPECT_EQ(ds.items[i].target, static_cast<double>(w - 1 + i + tau));
      }
    }
}

TEST(Windows, NormalizeInvertsWithinTolerance) {
  const Trace t = ramp(40);
  const auto st = compute_stats(t);
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t c = 0; c < 8; ++c) {
      const double v = t[i].values[c];
      EXPECT_NEAR(st.denormalize(c, st.normalize(c, v)), v, 1e-9 * std::max(1.0, std::abs(v)));
    }
}
