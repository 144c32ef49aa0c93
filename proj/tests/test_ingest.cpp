#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "teta/ingest.hpp"
#include "test_support.hpp"

namespace teta {
namespace {

IngestOptions mot(Role role) {
  IngestOptions o;
  o.format = FormatKind::mot_csv;
  o.role = role;
  return o;
}

IngestOptions coco(Role role) {
  IngestOptions o;
  o.format = FormatKind::cocovid_json;
  o.role = role;
  return o;
}

TEST(ParseMotCsv, DirectFieldMapping) {
  const Dataset ds = parse("1,3,10,20,30,40,0.9,1,1\n", mot(Role::pred));
  ASSERT_EQ(ds.sequences.size(), 1u);
  const auto& f = ds.sequences[0].frames.at(0);
  EXPECT_EQ(f.frame_index, 1);
  ASSERT_EQ(f.preds.size(), 1u);
  const auto& p = f.preds[0];
  EXPECT_EQ(p.track_id, 3);
  EXPECT_EQ(p.box, (BBox{10, 20, 30, 40}));
  EXPECT_EQ(p.score, 0.9);
  EXPECT_EQ(p.category_id, 1);
  EXPECT_TRUE(ds.categories.contains(1));
}

TEST(ParseMotCsv, EmptyFile) {
  EXPECT_TRUE(parse("", mot(Role::gt)).sequences.empty());
  EXPECT_TRUE(parse("\n\n", mot(Role::pred)).sequences.empty());
}

TEST(ParseMotCsv, MalformedLinesCarryLineNumbers) {
  struct Case {
    std::string text;
    std::size_t line;
  };
  const std::vector<Case> cases{
      {"1,1,0,0,5,5,1,1,1\n1,2,0,0,5\n", 2},               // too few fields
      {"1,1,0,0,5,5,1,1,1\n\n1,2,a,0,5,5,1,1,1\n", 3},     // not a number
      {"1,1,0,0,0,5,1,1,1\n", 1},                          // degenerate box
      {"1,1,0,0,5,5,1,1,1\n1,1,3,3,5,5,1,1,1\n", 2},       // duplicate identity
      {"1.5,1,0,0,5,5,1,1,1\n", 1},                        // fractional frame
      {"1,1,0,0,5,5,1.7,1,1\n", 1},                        // confidence > 1 for preds
  };
  for (const auto& c : cases) {
    try {
      parse(c.text, mot(Role::pred));
      ADD_FAILURE() << "expected failure for: " << c.text;
    } catch (const ParseError& e) {
      ASSERT_TRUE(e.line().has_value()) << e.what();
      EXPECT_EQ(*e.line(), c.line) << e.what();
    }
  }
}

TEST(ParseMotCsv, GroundTruthIgnoresConfidenceColumn) {
  const Dataset ds = parse("2,7,1,1,4,4,0,3,0.5\n", mot(Role::gt));
  EXPECT_EQ(ds.sequences[0].frames[0].gt[0].category_id, 3);
  EXPECT_TRUE(ds.sequences[0].frames[0].preds.empty());
}

TEST(ParseMotCsv, OrderInsensitive) {
  const std::vector<std::string> lines{"1,1,0,0,5,5,0.5,1,1", "2,1,1,0,5,5,0.5,1,1", "1,2,20,0,5,5,0.7,2,1",
                                       "3,2,21,0,5,5,0.7,2,1"};
  std::string a, b;
  for (const auto& l : lines) a += l + "\n";
  for (auto it = lines.rbegin(); it != lines.rend(); ++it) b += *it + "\n";
  EXPECT_EQ(parse(a, mot(Role::pred)), parse(b, mot(Role::pred)));
}

const char* kCocoVid = R"({
  "videos": [{"id": 1, "name": "v1"}, {"id": 2, "name": "v2"}],
  "images": [{"id": 10, "video_id": 1, "frame_id": 0},
             {"id": 11, "video_id": 1, "frame_id": 1},
             {"id": 20, "video_id": 2}],
  "annotations": [
    {"id": 1, "image_id": 10, "category_id": 3, "track_id": 5, "bbox": [0, 0, 10, 10]},
    {"id": 2, "image_id": 11, "category_id": 3, "track_id": 5, "bbox": [1, 0, 10, 10]},
    {"id": 3, "image_id": 20, "category_id": 4, "track_id": 1, "bbox": [5, 5, 3, 3]}
  ],
  "categories": [{"id": 3, "name": "car"}, {"id": 4, "name": "dog"}]
})";

TEST(ParseCocoVid, VideosBecomeSequences) {
  const Dataset ds = parse(kCocoVid, coco(Role::gt));
  // Independent record count straight from the JSON.
  const auto doc = nlohmann::json::parse(kCocoVid);
  EXPECT_EQ(ds.sequences.size(), doc["videos"].size());
  EXPECT_EQ(box_counts(ds).first, doc["annotations"].size());
  EXPECT_EQ(ds.sequences[0].sequence_id, "v1");
  EXPECT_EQ(ds.sequences[1].frames[0].frame_index, 0);  // fallback: order within video
  EXPECT_EQ(ds.categories.at(3).gt_track_count, 1);
}

TEST(ParseCocoVid, UnknownReferencesFail) {
  std::string bad_cat = kCocoVid;
  bad_cat.replace(bad_cat.find("\"category_id\": 4"), 16, "\"category_id\": 9");
  EXPECT_THROW(parse(bad_cat, coco(Role::gt)), ParseError);
  std::string bad_image = kCocoVid;
  bad_image.replace(bad_image.find("\"image_id\": 20"), 14, "\"image_id\": 99");
  EXPECT_THROW(parse(bad_image, coco(Role::gt)), ParseError);
}

TEST(ParseCocoVid, PredictionScores) {
  std::string text = kCocoVid;
  text.replace(text.find("\"track_id\": 1,"), 14, "\"track_id\": 1, \"score\": 0.25,");
  const Dataset ds = parse(text, coco(Role::pred));
  EXPECT_EQ(ds.sequences[1].frames[0].preds[0].score, 0.25);
  EXPECT_EQ(ds.sequences[0].frames[0].preds[0].score, 1.0);
}

TEST(ParseCanonical, UnknownCategoryAndSyntaxErrors) {
  EXPECT_THROW(parse(R"({"categories":[],"sequences":[{"id":"a","frames":[{"index":0,"gt":[{"track":1,"cat":2,"bbox":[0,0,1,1]}],"pred":[]}]}]})",
                     IngestOptions{}),
               ParseError);
  try {
    parse("{\n\"categories\": [\n,\n]}", IngestOptions{});
    FAIL();
  } catch (const ParseError& e) {
    ASSERT_TRUE(e.line().has_value());
    EXPECT_EQ(*e.line(), 3u);
  }
}

TEST(WriteCanonical, EmptyDatasetIsFixedDocument) {
  EXPECT_EQ(write_canonical(Dataset{}), "{\"categories\":[],\"sequences\":[]}\n");
  EXPECT_EQ(parse(write_canonical(Dataset{}), IngestOptions{}), Dataset{});
}

TEST(WriteCanonical, KeyOrderAndShortestNumbers) {
  const Dataset ds = testing::DatasetBuilder()
                         .category(1, "car")
                         .gt("s", 0, 2, 1, {0.1, 2, 3.5, 4})
                         .pred("s", 0, 3, 1, {0.1, 2, 3.5, 4}, 0.3)
                         .build();
  const std::string text = write_canonical(ds);
  EXPECT_NE(text.find("{\"track\":2,\"cat\":1,\"bbox\":[0.1,2,3.5,4]}"), std::string::npos) << text;
  EXPECT_NE(text.find("{\"track\":3,\"cat\":1,\"score\":0.3,\"bbox\":[0.1,2,3.5,4]}"), std::string::npos) << text;
  EXPECT_LT(text.find("\"categories\""), text.find("\"sequences\""));
}

TEST(WriteCanonical, RoundTripAndDeterminism) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 30; ++t) {
    testing::RandomDatasetParams p;
    p.sequences = 1 + t % 3;
    p.num_classes = 1 + t % 4;
    const Dataset ds = testing::random_dataset(rng, p);
    const std::string once = write_canonical(ds);
    EXPECT_EQ(once, write_canonical(ds));
    EXPECT_EQ(parse(once, IngestOptions{}), ds);
  }
}

TEST(WriteMotCsv, RoundTripPerRole) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 20; ++t) {
    testing::RandomDatasetParams p;
    p.num_classes = 3;
    const Dataset ds = testing::random_dataset(rng, p);
    IngestOptions o = mot(Role::pred);
    o.sequence_id = ds.sequences[0].sequence_id;
    const Dataset preds = testing::only_pred(ds);
    Dataset back = parse(write_mot_csv(preds, Role::pred), o);
    // MOT CSV has no category names and drops empty frames; compare boxes only.
    for (const auto& f : preds.sequences[0].frames) {
      if (f.preds.empty()) continue;
      auto it = std::find_if(back.sequences[0].frames.begin(), back.sequences[0].frames.end(),
                             [&](const Frame& g) { return g.frame_index == f.frame_index; });
      ASSERT_NE(it, back.sequences[0].frames.end());
      EXPECT_EQ(it->preds, f.preds);
    }
  }
  EXPECT_THROW(write_mot_csv(Dataset{{Sequence{"a", {}, {}}, Sequence{"b", {}, {}}}, {}}, Role::gt), Error);
}

TEST(TopKFilter, KeepsHighestScores) {
  testing::DatasetBuilder b;
  b.category(1, "c").gt("s", 0, 1, 1, {0, 0, 5, 5});
  b.pred("s", 0, 1, 1, {0, 0, 5, 5}, 0.9).pred("s", 0, 2, 1, {0, 0, 5, 5}, 0.5).pred("s", 0, 3, 1, {0, 0, 5, 5}, 0.1);
  const Dataset ds = b.build();
  EXPECT_EQ(top_k_filter(ds, 50), ds);
  const Dataset two = top_k_filter(ds, 2);
  ASSERT_EQ(two.sequences[0].frames[0].preds.size(), 2u);
  EXPECT_EQ(two.sequences[0].frames[0].preds[0].score, 0.9);
  EXPECT_EQ(two.sequences[0].frames[0].preds[1].score, 0.5);
  EXPECT_EQ(two.sequences[0].frames[0].gt, ds.sequences[0].frames[0].gt);
}

TEST(TopKFilter, TiesAgainstExhaustiveSortOracle) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> score_bucket(0, 3), count(1, 12), kdist(1, 6);
  for (int t = 0; t < 200; ++t) {
    testing::DatasetBuilder b;
    b.category(0, "c");
    const int n = count(rng);
    std::vector<std::pair<double, std::int64_t>> entries;
    for (int i = 0; i < n; ++i) {
      const double s = score_bucket(rng) / 4.0;
      b.pred("s", 0, i, 0, {0, 0, 1, 1}, s);
      entries.emplace_back(s, i);
    }
    const int k = kdist(rng);
    // Oracle: try every entry against all others; keep those with fewer than k better-ranked rivals.
    std::vector<std::int64_t> expected;
    for (const auto& [s, id] : entries) {
      int better = 0;
      for (const auto& [s2, id2] : entries)
        if (s2 > s || (s2 == s && id2 < id)) ++better;
      if (better < k) expected.push_back(id);
    }
    const Dataset out = top_k_filter(b.build(), k);
    std::vector<std::int64_t> got;
    for (const auto& p : out.sequences[0].frames[0].preds) got.push_back(p.track_id);
    EXPECT_EQ(got, expected);
  }
}

TEST(TopKFilter, NeverIncreasesCounts) {
  std::mt19937_64 rng(12);
  testing::RandomDatasetParams p;
  p.sequences = 3;
  const Dataset ds = testing::random_dataset(rng, p);
  const Dataset out = top_k_filter(ds, 1);
  for (std::size_t s = 0; s < ds.sequences.size(); ++s)
    for (std::size_t f = 0; f < ds.sequences[s].frames.size(); ++f) {
      EXPECT_LE(out.sequences[s].frames[f].preds.size(), std::min<std::size_t>(1, ds.sequences[s].frames[f].preds.size()));
      EXPECT_EQ(out.sequences[s].frames[f].gt, ds.sequences[s].frames[f].gt);
    }
}

TEST(Parse, TopKOption) {
  IngestOptions o = mot(Role::pred);
  o.top_k_per_frame = 1;
  const Dataset ds = parse("1,1,0,0,5,5,0.2,1,1\n1,2,0,0,5,5,0.8,1,1\n", o);
  ASSERT_EQ(ds.sequences[0].frames[0].preds.size(), 1u);
  EXPECT_EQ(ds.sequences[0].frames[0].preds[0].track_id, 2);
}

}  // namespace
}  // namespace teta
