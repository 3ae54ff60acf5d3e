#include "rulerec/io.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>

#include "util.hpp"

using namespace rulerec;

namespace {

Dataset demo_dataset() {
  Dataset ds;
  ds.vocab = Vocab::make({"light", "motion"}, {"turn_on", "turn_off"});
  UserData a;
  a.graph = build_graph("alice",
                        {{"hall_light", "light"}, {"porch_sensor", "motion"}},
                        {{"porch_sensor", "turn_on", "hall_light"},
                         {"porch_sensor", "turn_off", "hall_light"}},
                        ds.vocab);
  UserData b;
  b.graph = build_graph("bob", {{"desk_lamp", "light"}},
                        {{"desk_lamp", "turn_off", "desk_lamp"}}, ds.vocab);
  ds.users.push_back(a);
  ds.users.push_back(b);
  return ds;
}

}  // namespace

TEST(Text, FormatRoundTripsDoubles) {
  for (double v : {0.1, 1.0 / 3.0, 2.5, 1e-300, 123456789.123456789, -0.0}) {
    std::string s = fmt_g17(v);
    double back = std::strtod(s.c_str(), nullptr);
    EXPECT_EQ(back, v) << s;
  }
}

TEST(Text, AtomicWriteLeavesNoTempFile) {
  testutil::TempDir dir;
  std::string path = dir.file("out.txt");
  atomic_write_text(path, "hello\n");
  EXPECT_EQ(read_file_text(path), "hello\n");
  EXPECT_FALSE(std::filesystem::exists(path + ".tmp"));
  atomic_write_text(path, "replaced\n");
  EXPECT_EQ(read_file_text(path), "replaced\n");
  EXPECT_THROW(read_file_text(dir.file("missing.txt")), IoError);
}

TEST(Digest, IsStableAndMatchesFileContents) {
  EXPECT_EQ(digest_hex("abc"), "fnv1a64:e71fa2190541574b");
  EXPECT_EQ(digest_hex(""), "fnv1a64:cbf29ce484222325");
  testutil::TempDir dir;
  std::string path = dir.file("blob.bin");
  atomic_write_text(path, "abc");
  EXPECT_EQ(digest_file(path), digest_hex("abc"));
}

TEST(VocabFile, RoundTripsNames) {
  Vocab v = Vocab::make({"light", "motion sensor"}, {"turn_on"});
  testutil::TempDir dir;
  std::string path = dir.file("vocab.txt");
  save_vocab(path, v);
  EXPECT_EQ(read_file_text(path),
            "[entity_types]\nlight\nmotion sensor\n[rule_types]\nturn_on\n");
  Vocab back = load_vocab(path);
  EXPECT_EQ(back.entity_types, v.entity_types);
  EXPECT_EQ(back.rule_types, v.rule_types);
}

TEST(VocabFile, ParseErrorsCarryLineNumbers) {
  try {
    parse_vocab("[entity_types]\nlight\n[bogus]\n", "vocab.txt");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("vocab.txt:3"), std::string::npos);
  }
  EXPECT_THROW(parse_vocab("light\n", "v"), DataError);
  EXPECT_THROW(parse_vocab("[entity_types]\na\na\n[rule_types]\nr\n", "v"), DataError);
  EXPECT_THROW(parse_vocab("[entity_types]\na\n", "v"), DataError);  // no rules
}

TEST(DatasetFile, RoundTripsUsersThroughDisk) {
  Dataset ds = demo_dataset();
  testutil::TempDir dir;
  std::string path = dir.file("dataset.jsonl");
  save_dataset(path, ds);
  Dataset back = load_dataset(path, ds.vocab);
  ASSERT_EQ(back.users.size(), 2u);
  for (size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back.users[i].graph.user_id, ds.users[i].graph.user_id);
    EXPECT_EQ(back.users[i].graph.node_ids, ds.users[i].graph.node_ids);
    EXPECT_EQ(back.users[i].graph.node_types, ds.users[i].graph.node_types);
    EXPECT_EQ(back.users[i].graph.edges, ds.users[i].graph.edges);
  }
}

TEST(DatasetFile, SerializationIsByteStable) {
  Dataset ds = demo_dataset();
  std::string text1 = dataset_to_text(ds);
  Dataset back = parse_dataset(text1, ds.vocab, "mem");
  EXPECT_EQ(dataset_to_text(back), text1);

  // Non-canonical input (shuffled, duplicated rules) normalizes on parse.
  std::string messy =
      R"({"user_id":"carol","entities":[{"id":"z","type":"light"},{"id":"a","type":"light"}],)"
      R"("rules":[{"src":"z","rule":"turn_on","dst":"a"},{"src":"z","rule":"turn_on","dst":"a"}]})"
      "\n";
  Dataset parsed = parse_dataset(messy, ds.vocab, "mem");
  ASSERT_EQ(parsed.users.size(), 1u);
  EXPECT_EQ(parsed.users[0].graph.node_ids, (std::vector<std::string>{"a", "z"}));
  EXPECT_EQ(parsed.users[0].graph.edges.size(), 1u);
  std::string canon = dataset_to_text(parsed);
  EXPECT_EQ(dataset_to_text(parse_dataset(canon, ds.vocab, "mem")), canon);
}

TEST(DatasetFile, ParseErrorsCarryLineNumbers) {
  Vocab v = demo_dataset().vocab;
  std::string good = R"({"user_id":"a","entities":[{"id":"x","type":"light"}],"rules":[]})";
  try {
    parse_dataset(good + "\nnot json\n", v, "data.jsonl");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("data.jsonl:2"), std::string::npos);
  }
  EXPECT_THROW(parse_dataset(R"({"user_id":"a"})", v, "d"), DataError);
  EXPECT_THROW(parse_dataset(R"(["array"])", v, "d"), DataError);
  std::string bad_type =
      R"({"user_id":"a","entities":[{"id":"x","type":"spaceship"}],"rules":[]})";
  EXPECT_THROW(parse_dataset(bad_type, v, "d"), DataError);
}

TEST(ModelFile, RoundTripIsBitExact) {
  ModelParams p = init_params(3, 4, 2, 321);
  p.theta1(0, 0) = 0.1;
  p.theta1(0, 1) = -0.0;
  p.theta2(1, 1) = 1e-300;
  p.phi2_b(0, 1) = 123456789.123456789;
  testutil::TempDir dir;
  std::string path = dir.file("model.json");
  save_model(path, p);
  ModelParams back = load_model(path);
  EXPECT_TRUE(params_bitwise_equal(back, p));

  // Saving the reload reproduces the file byte for byte.
  std::string text = read_file_text(path);
  EXPECT_EQ(model_to_text(back), text);
}

TEST(ModelFile, RefusesNonFiniteParameters) {
  ModelParams p = init_params(2, 3, 2, 1);
  p.phi1(0, 0) = std::nan("");
  testutil::TempDir dir;
  std::string path = dir.file("model.json");
  EXPECT_THROW(save_model(path, p), DataError);
  EXPECT_FALSE(std::filesystem::exists(path));
}

TEST(ModelFile, ParseValidatesStructure) {
  ModelParams p = init_params(2, 3, 2, 9);
  std::string text = model_to_text(p);

  auto mutate = [&](auto&& tweak) {
    ordered_json j = ordered_json::parse(text);
    tweak(j);
    EXPECT_THROW(parse_model(j.dump(), "m"), DataError);
  };
  mutate([](ordered_json& j) { j["format"] = "something-else"; });
  mutate([](ordered_json& j) { j["version"] = 2; });
  mutate([](ordered_json& j) { j["hidden"] = 0; });
  mutate([](ordered_json& j) { j.erase("tensors"); });
  mutate([](ordered_json& j) { j["tensors"].erase("phi2"); });
  mutate([](ordered_json& j) {
    auto& data = j["tensors"]["theta1"]["data"];
    data.erase(data.size() - 1);  // length no longer matches rows*cols
  });
  mutate([](ordered_json& j) { j["tensors"]["theta1"]["data"][0] = nullptr; });
  mutate([](ordered_json& j) {
    // Consistent rows/data but the wrong shape for the declared dims.
    auto& t = j["tensors"]["theta2_b"];
    t["rows"] = 2;
    t["data"] = std::vector<double>(6, 0.0);
  });
  EXPECT_THROW(parse_model("not json", "m"), DataError);
}

TEST(MetricsFile, HeaderAndRowsArePinned) {
  EXPECT_EQ(metrics_header(),
            "round,train_loss,test_loss,test_auc,test_mean_rank,test_mean_rank_rt,"
            "elapsed_ms\n");
  RoundLog log;
  log.round = 3;
  log.train_loss = 1.0 / 3.0;
  log.test_loss = std::numeric_limits<double>::quiet_NaN();
  log.test_auc = 0.75;
  log.test_mean_rank = 2.5;
  log.test_mean_rank_rt = 1.5;
  log.elapsed_ms = 0.0;
  EXPECT_EQ(metrics_row(log), "3,0.33333333333333331,nan,0.75,2.5,1.5,0\n");

  testutil::TempDir dir;
  std::string path = dir.file("metrics.csv");
  save_metrics(path, {log});
  EXPECT_EQ(read_file_text(path), metrics_header() + metrics_row(log));
}

TEST(MetricsFile, HitCurveExportEnumeratesRanks) {
  testutil::TempDir dir;
  std::string path = dir.file("curve.csv");
  save_hit_curve(path, {0.25, 0.5, 0.5});
  EXPECT_EQ(read_file_text(path), "n,hit_rate\n1,0.25\n2,0.5\n3,0.5\n");
}

TEST(Manifest, RecordsRunProvenance) {
  testutil::TempDir dir;
  RunManifest m;
  m.command = "train";
  m.version_string = "rulerec 0.1.0";
  m.started = "2026-01-02T03:04:05Z";
  m.finished = "2026-01-02T03:05:06Z";
  m.seed = 42;
  m.config["rounds"] = 10;
  m.inputs.push_back({"dataset", "data.jsonl", digest_hex("x")});
  m.outputs.push_back({"model", "model.json", digest_hex("y")});
  std::string path = dir.file("manifest.json");
  save_manifest(path, m);

  ordered_json j = ordered_json::parse(read_file_text(path));
  EXPECT_EQ(j.at("format"), "rulerec-manifest");
  EXPECT_EQ(j.at("version"), 1);
  EXPECT_EQ(j.at("command"), "train");
  EXPECT_EQ(j.at("seed"), 42);
  EXPECT_EQ(j.at("config").at("rounds"), 10);
  ASSERT_EQ(j.at("inputs").size(), 1u);
  EXPECT_EQ(j.at("inputs")[0].at("role"), "dataset");
  EXPECT_EQ(j.at("inputs")[0].at("digest"), digest_hex("x"));
  ASSERT_EQ(j.at("outputs").size(), 1u);
  EXPECT_EQ(j.at("outputs")[0].at("path"), "model.json");
}

TEST(Manifest, TimestampLooksLikeUtcIso8601) {
  std::string ts = now_iso8601_utc();
  ASSERT_EQ(ts.size(), 20u);
  EXPECT_EQ(ts[4], '-');
  EXPECT_EQ(ts[7], '-');
  EXPECT_EQ(ts[10], 'T');
  EXPECT_EQ(ts[13], ':');
  EXPECT_EQ(ts[16], ':');
  EXPECT_EQ(ts.back(), 'Z');
}
