#include <gtest/gtest.h>

#include <cmath>

#include "dcc/datagen.hpp"
#include "dcc/error.hpp"
#include "test_support.hpp"

using namespace dcc;

namespace {

GroundTruth two_sample_truth(const std::vector<double>& a, const std::vector<double>& b) {
  GroundTruth gt;
  const std::size_t k = a.size();
  gt.m_true = Matrix(k, 2);
  for (std::size_t r = 0; r < k; ++r) {
    gt.m_true(r, 0) = a[r];
    gt.m_true(r, 1) = b[r];
  }
  gt.features = Matrix(1, 2);
  gt.seen_count = 2;
  return gt;
}

// Only pairs (0, 0) can be drawn when the seen set has one sample.
double empirical_same_rate(const std::vector<double>& m, const Matrix& b, std::size_t draws) {
  GroundTruth gt = two_sample_truth(m, m);
  gt.seen_count = 1;
  const AnnotationSet ann = sample_annotations(gt, draws, b, 77);
  double ones = 0.0;
  for (const auto& a : ann.triplets) ones += a.y;
  return ones / static_cast<double>(draws);
}

}  // namespace

TEST(InverseMap, AnchorImages) {
  const InverseFeatureMap f = default_inverse_map_k3();
  std::vector<double> x(3);
  f.apply(std::vector<double>{1, 0, 0}, x);
  EXPECT_EQ(x, (std::vector<double>{2, 1, -2}));
  f.apply(std::vector<double>{0, 1, 0}, x);
  EXPECT_EQ(x, (std::vector<double>{0, 4, -2}));
}

TEST(SynthGenerate, ShapesAndSimplex) {
  const GroundTruth gt = synth_generate(2000, 3, 0);
  EXPECT_EQ(gt.m_true.rows(), 3u);
  EXPECT_EQ(gt.m_true.cols(), 2000u);
  EXPECT_EQ(gt.features.rows(), 3u);
  EXPECT_EQ(gt.seen_count, 1000u);
  for (std::size_t c = 0; c < gt.m_true.cols(); ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < 3; ++r) {
      EXPECT_GE(gt.m_true(r, c), 0.0);
      s += gt.m_true(r, c);
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
  EXPECT_EQ(synth_generate(200, 3, 5).features, synth_generate(200, 3, 5).features);
}

TEST(SynthGenerate, Errors) {
  EXPECT_THROW(synth_generate(1, 3, 0), ConfigError);
  EXPECT_THROW(synth_generate(100, 4, 0), ConfigError);
  InverseFeatureMap id{4, [](std::span<const double> m, std::span<double> x) {
                         std::copy(m.begin(), m.end(), x.begin());
                       }};
  SynthOptions opt;
  opt.feature_map = &id;
  EXPECT_EQ(synth_generate(100, 4, 0, opt).features.rows(), 4u);
}

TEST(SampleAnnotations, AnchorsAreDeterministic) {
  const GroundTruth same = two_sample_truth({1, 0, 0}, {1, 0, 0});
  for (const auto& a : sample_annotations(same, 200, Matrix::identity(3), 1).triplets) EXPECT_EQ(a.y, 1);
  GroundTruth disjoint = two_sample_truth({1, 0, 0}, {0, 1, 0});
  for (const auto& a : sample_annotations(disjoint, 200, Matrix::identity(3), 1).triplets) {
    EXPECT_EQ(a.y, a.i == a.j ? 1 : 0);
  }
}

TEST(SampleAnnotations, MonteCarloRateMatchesDotProduct) {
  EXPECT_NEAR(empirical_same_rate({0.6, 0.4, 0.0}, Matrix::identity(3), 100000), 0.52, 0.01);
}

TEST(SampleAnnotations, RejectsInvalidB) {
  const GroundTruth gt = two_sample_truth({0.5, 0.5}, {0.5, 0.5});
  EXPECT_THROW(sample_annotations(gt, 10, Matrix(2, 2, 3.0), 0), ModelError);
}

TEST(ConfusionMatrix, PaperMatrix) {
  const ConfusionMatrix a = default_confusion_k3();
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < 3; ++r) s += a.matrix()(r, c);
    EXPECT_NEAR(s, 1.0, 1e-15);
  }
  const Matrix g = a.gram();
  const Matrix expected{{1, .2, .3}, {.2, .68, .30}, {.3, .30, .34}};
  EXPECT_LE(dcc::testing::max_abs_diff(g, expected), 1e-15);
  EXPECT_THROW(ConfusionMatrix(Matrix{{0.5, 0.5}, {0.6, 0.5}}), DataError);
}

TEST(MachineAnnotate, MatchesPairEnumeration) {
  const std::vector<std::size_t> labels{0, 1, 1, 2, 0, 2};
  const AnnotationSet ann = machine_annotate(labels, 500, 3);
  std::array<std::array<int, 6>, 6> table{};
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) table[i][j] = labels[i] == labels[j] ? 1 : 0;
  for (const auto& a : ann.triplets) EXPECT_EQ(a.y, table[a.i][a.j]);
  EXPECT_EQ(ann.n, 6u);
  EXPECT_EQ(machine_annotate(labels, 50, 3), machine_annotate(labels, 50, 3));
  const std::vector<std::size_t> constant(5, 2);
  for (const auto& a : machine_annotate(constant, 40, 1).triplets) EXPECT_EQ(a.y, 1);
  EXPECT_THROW(machine_annotate(std::vector<std::size_t>{}, 5, 0), ConfigError);
}

TEST(AnnotationErrorRate, CountsDisagreements) {
  GroundTruth gt = synth_generate(40, 3, 0, {40, 0.1, nullptr});
  const auto truth = argmax_labels(gt.m_true);
  AnnotationSet clean = machine_annotate(truth, 10, 4);
  EXPECT_EQ(annotation_error_rate(clean, gt), 0.0);
  AnnotationSet flipped = clean;
  for (auto& a : flipped.triplets) a.y = 1 - a.y;
  EXPECT_EQ(annotation_error_rate(flipped, gt), 1.0);
  AnnotationSet half = clean;
  for (std::size_t i = 0; i < 5; ++i) half.triplets[i].y = 1 - half.triplets[i].y;
  EXPECT_EQ(annotation_error_rate(half, gt), 0.5);
}

TEST(ArgmaxLabels, LowestIndexWinsTies) {
  EXPECT_EQ(argmax_labels(Matrix{{0.5, 0.2}, {0.5, 0.8}}), (std::vector<std::size_t>{0, 1}));
}

TEST(SplitAnnotations, PartitionsTriplets) {
  const GroundTruth gt = synth_generate(100, 3, 1);
  const AnnotationSet ann = sample_annotations(gt, 1000, Matrix::identity(3), 2);
  const AnnotationSplit s = split_annotations(ann, 0.1, 3);
  EXPECT_EQ(s.validation.size(), 100u);
  EXPECT_EQ(s.train.size(), 900u);
  EXPECT_EQ(s.train.n, ann.n);
  EXPECT_THROW(split_annotations(ann, 1.0, 0), ConfigError);
}

TEST(AnnotationSet, Validation) {
  AnnotationSet a{{{0, 5, 1}}, 3};
  EXPECT_THROW(a.validate(), DataError);
  a = {{{0, 1, 2}}, 3};
  EXPECT_THROW(a.validate(), DataError);
}
