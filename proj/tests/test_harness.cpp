#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "teta/harness.hpp"
#include "test_support.hpp"

namespace teta {
namespace {

using testing::DatasetBuilder;

Dataset random_pred(std::uint64_t seed, int classes = 3) {
  std::mt19937_64 rng(seed);
  testing::RandomDatasetParams p;
  p.num_classes = classes;
  p.sequences = 2;
  return testing::random_dataset(rng, p);
}

std::map<std::pair<std::string, std::int64_t>, std::int64_t> track_classes(const Dataset& ds) {
  std::map<std::pair<std::string, std::int64_t>, std::int64_t> out;
  for (const auto& s : ds.sequences)
    for (const auto& f : s.frames)
      for (const auto& p : f.preds) out[{s.sequence_id, p.track_id}] = p.category_id;
  return out;
}

TEST(Rng, ReproducibleStream) {
  Rng a(7), b(7);
  for (int i = 0; i < 100; ++i) {
    const double u = a.uniform01();
    EXPECT_EQ(u, b.uniform01());
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(a.below(5), 5u);
    b.below(5);
  }
}

TEST(ClassNoise, RateZeroIsIdentity) {
  const Dataset ds = random_pred(1);
  EXPECT_EQ(inject_class_noise(ds, 0.0, 3), ds);
}

TEST(ClassNoise, RateOneChangesEveryTrack) {
  const Dataset ds = random_pred(2);
  const auto before = track_classes(ds), after = track_classes(inject_class_noise(ds, 1.0, 3));
  for (const auto& [k, c] : before) EXPECT_NE(after.at(k), c);
}

TEST(ClassNoise, DeterministicPerSeedAndGeometryUntouched) {
  const Dataset ds = random_pred(3);
  const Dataset a = inject_class_noise(ds, 0.5, 11);
  EXPECT_EQ(a, inject_class_noise(ds, 0.5, 11));
  EXPECT_EQ(testing::only_gt(a), testing::only_gt(ds));
  for (std::size_t s = 0; s < ds.sequences.size(); ++s)
    for (std::size_t f = 0; f < ds.sequences[s].frames.size(); ++f)
      for (std::size_t i = 0; i < ds.sequences[s].frames[f].preds.size(); ++i)
        EXPECT_EQ(a.sequences[s].frames[f].preds[i].box, ds.sequences[s].frames[f].preds[i].box);
}

TEST(ClassNoise, SingleCategoryRejected) {
  EXPECT_THROW(inject_class_noise(random_pred(4, 1), 0.5, 1), Error);
  EXPECT_NO_THROW(inject_class_noise(random_pred(4, 1), 0.0, 1));
}

TEST(CopyPaste, DoublesTracks) {
  DatasetBuilder b;
  b.category(0, "c");
  for (int f = 0; f < 3; ++f) b.gt("s", f, 1, 0, {0, 0, 10, 10}).pred("s", f, 1, 0, {0, 0, 10, 10}, 1.0);
  const Dataset pred = copy_paste_tracks(b.pred_only(), 1);
  const auto& s = pred.sequences[0];
  EXPECT_EQ(detail::pred_tracks(s).size(), 2u);
  for (const auto& f : s.frames) {
    ASSERT_EQ(f.preds.size(), 2u);
    EXPECT_EQ(f.preds[0].box, f.preds[1].box);
    EXPECT_EQ(f.preds[1].score, 0.01);
  }
  const auto before = evaluate(b.gt_only(), b.pred_only(), EvalConfig{});
  const auto after = evaluate(b.gt_only(), pred, EvalConfig{});
  EXPECT_EQ(before.per_class[0].loc.loc_a(), 1.0);
  EXPECT_EQ(after.per_class[0].loc.tpl, 3);
  EXPECT_EQ(after.per_class[0].loc.fpl, 3);
  EXPECT_EQ(after.per_class[0].loc.loc_a(), 0.5);
}

TEST(CopyPaste, TetaDecreases) {
  for (std::uint64_t seed = 10; seed < 25; ++seed) {
    const Dataset ds = random_pred(seed);
    const Dataset gt = testing::only_gt(ds), pred = testing::only_pred(ds);
    const auto base = evaluate(gt, pred, EvalConfig{});
    std::int64_t tpl = 0;
    for (const auto& c : base.per_class) tpl += c.loc.tpl;
    if (tpl == 0) continue;
    EXPECT_LT(evaluate(gt, copy_paste_tracks(pred, 1), EvalConfig{}).overall.teta, base.overall.teta);
  }
}

TEST(MergeTail, OneClassIsRelabelOnly) {
  const Dataset ds = random_pred(30);
  const auto [g, p] = merge_tail_classes(testing::only_gt(ds), testing::only_pred(ds), 1);
  EXPECT_EQ(g.categories.size(), 3u);
  const auto a = evaluate(testing::only_gt(ds), testing::only_pred(ds), EvalConfig{});
  const auto b = evaluate(g, p, EvalConfig{});
  EXPECT_EQ(a.overall.teta, b.overall.teta);
}

TEST(MergeTail, AllClassesGiveClsAOne) {
  for (std::uint64_t seed = 31; seed < 40; ++seed) {
    const Dataset ds = random_pred(seed, 4);
    const Dataset gt = testing::only_gt(ds), pred = testing::only_pred(ds);
    const auto [g, p] = merge_tail_classes(gt, pred, 4);
    ASSERT_EQ(g.categories.size(), 1u);
    ASSERT_EQ(p.categories.size(), 1u);
    EXPECT_EQ(g.categories.begin()->first, p.categories.begin()->first);
    EXPECT_EQ(g.categories.begin()->second.name, p.categories.begin()->second.name);
    EXPECT_EQ(g.categories.begin()->second.name, "merged_tail_4");
    const auto before = evaluate(gt, pred, EvalConfig{}), after = evaluate(g, p, EvalConfig{});
    ASSERT_EQ(after.per_class.size(), 1u);
    if (after.per_class[0].cls.tpc > 0) {
      EXPECT_EQ(*after.per_class[0].cls_a, 1.0);
    }
    std::int64_t tpl = 0, fpl = 0, fnl = 0;
    for (const auto& c : before.per_class) tpl += c.loc.tpl, fpl += c.loc.fpl, fnl += c.loc.fnl;
    EXPECT_EQ(after.per_class[0].loc.tpl, tpl);
    EXPECT_EQ(after.per_class[0].loc.fnl, fnl);
  }
}

TEST(MergeTail, BadCountRejected) {
  const Dataset ds = random_pred(41);
  EXPECT_THROW(merge_tail_classes(testing::only_gt(ds), testing::only_pred(ds), 0), Error);
  EXPECT_THROW(merge_tail_classes(testing::only_gt(ds), testing::only_pred(ds), 4), Error);
}

TEST(Fragment, LongPeriodUnchanged) {
  const Dataset ds = random_pred(50);
  const Dataset pred = testing::only_pred(ds);
  EXPECT_EQ(fragment_tracks(pred, 1000, 1), pred);
}

TEST(Fragment, HalvesAssociation) {
  DatasetBuilder b;
  b.category(0, "c");
  for (int f = 0; f < 4; ++f) b.gt("s", f, 1, 0, {0, 0, 10, 10}).pred("s", f, 1, 0, {0, 0, 10, 10});
  const Dataset pred = fragment_tracks(b.pred_only(), 2, 9);
  EXPECT_EQ(detail::pred_tracks(pred.sequences[0]).size(), 2u);
  const auto r = evaluate(b.gt_only(), pred, EvalConfig{});
  EXPECT_EQ(r.per_class[0].assoc_a, 0.5);
  EXPECT_EQ(r.per_class[0].loc.loc_a(), 1.0);
}

TEST(Fragment, LocAUnchangedAndDeterministic) {
  for (std::uint64_t seed = 51; seed < 58; ++seed) {
    const Dataset ds = random_pred(seed);
    const Dataset gt = testing::only_gt(ds), pred = testing::only_pred(ds);
    const Dataset frag = fragment_tracks(pred, 3, seed);
    EXPECT_EQ(frag, fragment_tracks(pred, 3, seed));
    const auto a = evaluate(gt, pred, EvalConfig{}), b = evaluate(gt, frag, EvalConfig{});
    for (std::size_t i = 0; i < a.per_class.size(); ++i)
      EXPECT_EQ(a.per_class[i].loc.loc_a(), b.per_class[i].loc.loc_a());
  }
}

TEST(OverlapCdf, DisjointBoxes) {
  DatasetBuilder b;
  b.category(0, "c");
  for (int k = 0; k < 5; ++k) b.gt("s", 0, k, 0, {k * 20.0, 0, 10, 10});
  const auto cdf = overlap_cdf(b.gt_only(), default_overlap_thresholds());
  for (double v : cdf.fractions) EXPECT_EQ(v, 1.0);
}

TEST(OverlapCdf, IdenticalBoxes) {
  DatasetBuilder b;
  b.category(0, "c").gt("s", 0, 1, 0, {0, 0, 10, 10}).gt("s", 0, 2, 0, {0, 0, 10, 10});
  const auto cdf = overlap_cdf(b.gt_only(), {0.0, 0.5, 0.99, 1.0});
  EXPECT_EQ(cdf.fractions, (std::vector<double>{0, 0, 0, 1}));
  EXPECT_EQ(overlap_cdf_csv(cdf), "threshold,fraction\n0,0\n0.5,0\n0.99,0\n1,1\n");
}

TEST(OverlapCdf, BruteForceAndReorderInvariance) {
  std::mt19937_64 rng(60);
  std::uniform_real_distribution<double> pos(0, 100), size(5, 40);
  for (int t = 0; t < 20; ++t) {
    Dataset ds;
    ds.categories[0] = {"c", 0};
    Sequence s{"s", {}, std::nullopt};
    for (int f = 0; f < 3; ++f) {
      Frame fr{f, {}, {}};
      for (int k = 0; k < 20; ++k) fr.gt.push_back(GtBox{{pos(rng), pos(rng), size(rng), size(rng)}, k, 0});
      s.frames.push_back(fr);
    }
    ds.sequences.push_back(s);
    const auto thresholds = default_overlap_thresholds();
    const auto cdf = overlap_cdf(canonicalize(ds), thresholds);
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
      std::size_t below = 0, total = 0;
      for (const auto& fr : s.frames)
        for (const auto& a : fr.gt) {
          double m = 0;
          for (const auto& b : fr.gt)
            if (&a != &b) m = std::max(m, iou(a.box, b.box));
          total += 1;
          below += m <= thresholds[i];
        }
      EXPECT_EQ(cdf.fractions[i], static_cast<double>(below) / static_cast<double>(total));
    }
    EXPECT_EQ(cdf.fractions.back(), 1.0);
    EXPECT_TRUE(std::is_sorted(cdf.fractions.begin(), cdf.fractions.end()));
    Dataset shuffled = ds;
    std::reverse(shuffled.sequences[0].frames.begin(), shuffled.sequences[0].frames.end());
    for (auto& fr : shuffled.sequences[0].frames) std::shuffle(fr.gt.begin(), fr.gt.end(), rng);
    EXPECT_EQ(overlap_cdf(shuffled, thresholds).fractions, cdf.fractions);
  }
  EXPECT_THROW(overlap_cdf(Dataset{}, {0.5}), Error);
}

TEST(TemporalClassCorrection, MajorityTieAndIdempotence) {
  DatasetBuilder b;
  b.category(1, "car").category(2, "bus");
  const std::int64_t strict[] = {1, 1, 2};
  for (int f = 0; f < 3; ++f) b.pred("s", f, 1, strict[f], {0, 0, 10, 10});
  const std::pair<std::int64_t, double> tie[] = {{1, 0.9}, {2, 0.5}, {1, 0.8}, {2, 0.5}};
  for (int f = 0; f < 4; ++f) b.pred("s", f, 2, tie[f].first, {50, 0, 10, 10}, tie[f].second);
  for (int f = 0; f < 2; ++f) b.pred("s", f, 3, f == 0 ? 2 : 1, {100, 0, 10, 10}, 0.5);  // full tie -> lowest id
  const Dataset out = temporal_class_correction(b.pred_only());
  for (const auto& f : out.sequences[0].frames)
    for (const auto& p : f.preds) EXPECT_EQ(p.category_id, 1) << "track " << p.track_id;
  EXPECT_EQ(temporal_class_correction(out), out);
  const Dataset uniform = random_pred(70, 1);
  EXPECT_EQ(temporal_class_correction(testing::only_pred(uniform)), testing::only_pred(uniform));
}

TEST(PerturbSpec, ParseAndValidate) {
  const auto s = parse_perturb_spec("class_noise:rate=0.5,seed=7");
  EXPECT_EQ(s.kind, PerturbKind::class_noise);
  EXPECT_EQ(s.rate, 0.5);
  EXPECT_EQ(s.label(), "class_noise(rate=0.5;seed=7)");
  EXPECT_EQ(parse_perturb_spec("copy_paste").label(), "copy_paste(copies=1;score=0.01)");
  EXPECT_THROW(parse_perturb_spec("class_noise:rate=0.5"), Error);
  EXPECT_THROW(parse_perturb_spec("class_noise:rate=2,seed=1"), Error);
  EXPECT_THROW(parse_perturb_spec("nope"), Error);
  EXPECT_THROW(parse_perturb_spec("fragment:period=1,seed=1"), Error);
  EXPECT_THROW(parse_perturb_spec("copy_paste:copies=x"), Error);
}

TEST(Perturbations, GroundTruthOnlyTouchedByMerge) {
  const Dataset ds = random_pred(80);
  const Dataset gt = testing::only_gt(ds), pred = testing::only_pred(ds);
  for (const char* text : {"class_noise:rate=0.7,seed=1", "copy_paste:copies=2", "fragment:period=2,seed=4"})
    EXPECT_EQ(apply_perturbation(gt, pred, parse_perturb_spec(text)).first, gt) << text;
}

TEST(CompareMetrics, BaseOnly) {
  const Dataset ds = random_pred(90);
  const auto t = compare_metrics(testing::only_gt(ds), testing::only_pred(ds), {}, EvalConfig{});
  for (const auto& r : t.rows) EXPECT_EQ(r.perturbation, "base");
  EXPECT_NO_THROW(lookup(t, "base", "TETA", "TETA", "overall"));
  EXPECT_NO_THROW(lookup(t, "base", "HOTA", "HOTA", "overall"));
  EXPECT_NO_THROW(lookup(t, "base", "CLEAR", "MOTA", "overall"));
  EXPECT_THROW(lookup(t, "x", "TETA", "TETA", "overall"), Error);
}

TEST(CompareMetrics, ClassNoiseAndCopyPaste) {
  const Dataset ds = random_pred(91);
  const Dataset gt = testing::only_gt(ds), pred = testing::only_pred(ds);
  const auto noise = parse_perturb_spec("class_noise:rate=1,seed=5");
  const auto copy = parse_perturb_spec("copy_paste:copies=1");
  const auto t = compare_metrics(gt, pred, {noise, copy}, EvalConfig{});
  const auto n = noise.label(), c = copy.label();
  EXPECT_EQ(lookup(t, n, "TETA", "LocA", "overall"), lookup(t, "base", "TETA", "LocA", "overall"));
  EXPECT_EQ(lookup(t, n, "TETA", "AssocA", "overall"), lookup(t, "base", "TETA", "AssocA", "overall"));
  EXPECT_EQ(lookup(t, n, "TETA", "ClsA", "overall"), 0.0);
  EXPECT_LT(lookup(t, c, "TETA", "TETA", "overall"), lookup(t, "base", "TETA", "TETA", "overall"));
  EXPECT_GT(lookup(t, c, "CLEAR", "FP", "overall"), lookup(t, "base", "CLEAR", "FP", "overall"));
}

TEST(CompareMetrics, SerializationIsStable) {
  const Dataset ds = random_pred(92);
  const Dataset gt = testing::only_gt(ds), pred = testing::only_pred(ds);
  const std::vector<PerturbSpec> specs{parse_perturb_spec("merge_tail:n=2"), parse_perturb_spec("fragment:period=2,seed=3")};
  const auto a = compare_metrics(gt, pred, specs, EvalConfig{}, 1), b = compare_metrics(gt, pred, specs, EvalConfig{}, 3);
  EXPECT_EQ(comparison_to_csv(a), comparison_to_csv(b));
  EXPECT_EQ(comparison_to_json(a), comparison_to_json(b));
  EXPECT_EQ(comparison_to_csv(a).substr(0, 42), "perturbation,metric,component,class,value\n");
  EXPECT_NE(comparison_to_csv(a).find("fragment(period=2;seed=3),TETA"), std::string::npos);
}

}  // namespace
}  // namespace teta
