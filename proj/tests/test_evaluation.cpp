#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "seqft/errors.hpp"
#include "seqft/evaluation.hpp"

using namespace seqft;

namespace {

// Random score/label sets covering ties, separation and mixtures.
struct ScoreSet {
  std::vector<double> scores;
  std::vector<int> labels;
};

ScoreSet random_score_set(std::mt19937_64& rng, std::size_t max_size) {
  std::uniform_int_distribution<std::size_t> size_dist(2, max_size);
  std::uniform_real_distribution<double> score_dist(0.0, 1.0);
  std::bernoulli_distribution label_dist(0.4);
  std::bernoulli_distribution quantize(0.5);
  ScoreSet set;
  const std::size_t n = size_dist(rng);
  bool has_pos = false, has_neg = false;
  for (std::size_t i = 0; i < n; ++i) {
    double s = score_dist(rng);
    if (quantize(rng)) s = std::round(s * 8.0) / 8.0;  // force ties often
    const int label = label_dist(rng) ? 1 : 0;
    has_pos |= label == 1;
    has_neg |= label == 0;
    set.scores.push_back(s);
    set.labels.push_back(label);
  }
  if (!has_pos) set.labels[0] = 1;
  if (!has_neg) set.labels[set.labels.size() - 1] = 0;
  return set;
}

}  // namespace

TEST_CASE("confusion matrix counts land in the predicted column") {
  ConfusionMatrix cm = confusion_matrix({0, 1, 2}, {1, 1, 1}, 3);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      CHECK(cm.counts[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] ==
            (c == 1 ? 1 : 0));
    }
  }
  CHECK(cm.total() == 3);
  CHECK(cm.class_names == std::vector<std::string>{"class0", "class1", "class2"});
}

TEST_CASE("confusion matrix matches a brute count on random labels") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> label(0, 3);
  std::vector<int> truth(200), pred(200);
  for (int i = 0; i < 200; ++i) {
    truth[static_cast<std::size_t>(i)] = label(rng);
    pred[static_cast<std::size_t>(i)] = label(rng);
  }
  ConfusionMatrix cm = confusion_matrix(truth, pred, 4);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      int64_t expected = 0;
      for (int i = 0; i < 200; ++i) {
        if (truth[static_cast<std::size_t>(i)] == r && pred[static_cast<std::size_t>(i)] == c) {
          ++expected;
        }
      }
      CHECK(cm.counts[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] == expected);
    }
  }
  CHECK(cm.total() == 200);
}

TEST_CASE("confusion matrix rejects inconsistent input") {
  CHECK_THROWS_AS(confusion_matrix({0, 1}, {0}, 2), ContractError);
  CHECK_THROWS_AS(confusion_matrix({0, 2}, {0, 0}, 2), ContractError);
  CHECK_THROWS_AS(confusion_matrix({0, 1}, {0, 1}, 2, {"only_one"}), ContractError);
}

TEST_CASE("normalizing a confusion row divides by the row total") {
  ConfusionMatrix cm;
  cm.class_names = {"a", "b", "c"};
  cm.counts = {{1, 1, 2}, {0, 0, 0}, {4, 0, 0}};
  NormalizedConfusion norm = normalize_confusion(cm);
  CHECK(norm.rows[0] == std::vector<double>{0.25, 0.25, 0.5});
  CHECK(norm.zero_row == std::vector<bool>{false, true, false});
  CHECK(norm.rows[1] == std::vector<double>{0.0, 0.0, 0.0});
  CHECK(norm.rows[2][0] == 1.0);
}

TEST_CASE("accuracy is the diagonal mass") {
  ConfusionMatrix uniform;
  uniform.class_names = {"a", "b", "c"};
  uniform.counts = {{1, 1, 1}, {1, 1, 1}, {1, 1, 1}};
  CHECK(accuracy(uniform) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  ConfusionMatrix perfect;
  perfect.class_names = {"a", "b"};
  perfect.counts = {{7, 0}, {0, 5}};
  CHECK(accuracy(perfect) == 1.0);

  ConfusionMatrix empty;
  empty.class_names = {"a"};
  empty.counts = {{0}};
  CHECK_THROWS_AS(accuracy(empty), ContractError);
}

TEST_CASE("binary projections derive scores from the probability rows") {
  Tensor probs = Tensor::from_data({3, 3},
                                   {1.0, 0.0, 0.0,    // confident normal
                                    0.0, 0.5, 0.5,    // abnormal, tb/cancer tied
                                    0.1, 0.2, 0.7});  // cancer-leaning
  std::vector<int> truth = {0, 1, 2};

  BinaryScores abnormal = binary_scores(probs, truth, BinaryProjection::ABNORMAL_VS_NORMAL);
  REQUIRE(abnormal.scores.size() == 3);
  CHECK(abnormal.scores[0] == 0.0);
  CHECK(abnormal.scores[1] == 1.0);
  CHECK(abnormal.scores[2] == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(abnormal.labels == std::vector<int>({0, 1, 1}));

  BinaryScores tb_cancer = binary_scores(probs, truth, BinaryProjection::TB_VS_CANCER);
  REQUIRE(tb_cancer.scores.size() == 2);  // the normal sample drops out
  CHECK(tb_cancer.scores[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(tb_cancer.scores[1] == doctest::Approx(0.7 / 0.9).epsilon(1e-12));
  CHECK(tb_cancer.labels == std::vector<int>({0, 1}));

  BinaryScores cancer = binary_scores(probs, truth, BinaryProjection::CANCER_VS_REST);
  REQUIRE(cancer.scores.size() == 3);
  CHECK(cancer.scores[0] == 0.0);
  CHECK(cancer.scores[1] == 0.5);
  CHECK(cancer.scores[2] == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(cancer.labels == std::vector<int>({0, 0, 1}));
}

TEST_CASE("tb_vs_cancer falls back to one half when both probabilities vanish") {
  Tensor probs = Tensor::from_data({2, 3}, {1.0, 0.0, 0.0, 1.0, 0.0, 0.0});
  BinaryScores scores = binary_scores(probs, {1, 2}, BinaryProjection::TB_VS_CANCER);
  CHECK(scores.scores[0] == 0.5);
  CHECK(scores.scores[1] == 0.5);
}

TEST_CASE("projections with one empty side are rejected") {
  Tensor probs = Tensor::from_data({2, 3}, {0.8, 0.1, 0.1, 0.7, 0.2, 0.1});
  CHECK_THROWS_AS(binary_scores(probs, {0, 0}, BinaryProjection::ABNORMAL_VS_NORMAL), EvalError);
  CHECK_THROWS_AS(binary_scores(probs, {1, 1}, BinaryProjection::TB_VS_CANCER), EvalError);
  CHECK_THROWS_AS(binary_scores(probs, {0, 1}, BinaryProjection::CANCER_VS_REST), EvalError);
}

TEST_CASE("roc of perfectly separated scores has area one") {
  RocCurve curve = roc_and_auc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0});
  CHECK(curve.auc == 1.0);
  REQUIRE_FALSE(curve.points.empty());
  CHECK(std::isinf(curve.points.front().threshold));
  CHECK(curve.points.front().fpr == 0.0);
  CHECK(curve.points.front().tpr == 0.0);
  CHECK(curve.points.back().fpr == 1.0);
  CHECK(curve.points.back().tpr == 1.0);
}

TEST_CASE("roc of all-tied scores has area one half") {
  RocCurve curve = roc_and_auc({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0});
  CHECK(curve.auc == 0.5);
  // One distinct score: the +inf start plus a single jump straight to (1,1).
  CHECK(curve.points.size() == 2);
}

TEST_CASE("trapezoid area equals the pairwise statistic on random sets") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    ScoreSet set = random_score_set(rng, 200);
    CAPTURE(trial);
    RocCurve curve = roc_and_auc(set.scores, set.labels);
    const double expected = oracles::mann_whitney_auc(set.scores, set.labels);
    CHECK(std::fabs(curve.auc - expected) < 1e-9);
  }
}

TEST_CASE("auc is invariant under strictly increasing transforms") {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 20; ++trial) {
    ScoreSet set = random_score_set(rng, 60);
    std::vector<double> warped = set.scores;
    for (double& s : warped) s = std::exp(3.0 * s) + 1.0;
    CHECK(roc_and_auc(set.scores, set.labels).auc ==
          doctest::Approx(roc_and_auc(warped, set.labels).auc).epsilon(1e-12));
  }
}

TEST_CASE("swapping positive and negative labels mirrors the auc") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    ScoreSet set = random_score_set(rng, 60);
    std::vector<int> flipped = set.labels;
    for (int& l : flipped) l = 1 - l;
    CHECK(roc_and_auc(set.scores, set.labels).auc ==
          doctest::Approx(1.0 - roc_and_auc(set.scores, flipped).auc).epsilon(1e-12));
  }
}

TEST_CASE("roc rejects degenerate label sets") {
  CHECK_THROWS_AS(roc_and_auc({0.5, 0.6}, {1, 1}), EvalError);
  CHECK_THROWS_AS(roc_and_auc({0.5, 0.6}, {0, 0}), EvalError);
  CHECK_THROWS_AS(roc_and_auc({0.5}, {1, 0}), ContractError);
}

TEST_CASE("build_report assembles the full metric set") {
  // 6 samples, 2 per class, one mistake: a tb sample predicted cancer.
  Tensor probs = Tensor::from_data({6, 3},
                                   {0.8, 0.1, 0.1,
                                    0.7, 0.2, 0.1,
                                    0.1, 0.8, 0.1,
                                    0.2, 0.3, 0.5,
                                    0.1, 0.1, 0.8,
                                    0.0, 0.3, 0.7});
  std::vector<int> truth = {0, 0, 1, 1, 2, 2};
  std::vector<int> pred = {0, 0, 1, 2, 2, 2};
  std::vector<std::string> names = {"normal", "tb", "cancer"};

  EvalReport report = build_report(probs, truth, pred, names);
  CHECK(report.acc == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
  REQUIRE(report.per_class_accuracy.size() == 3);
  CHECK(report.per_class_accuracy[0] == 1.0);
  CHECK(report.per_class_accuracy[1] == 0.5);
  CHECK(report.per_class_accuracy[2] == 1.0);
  REQUIRE(report.projections.size() == 3);
  CHECK(report.projections[0].first == BinaryProjection::ABNORMAL_VS_NORMAL);
  for (const auto& [projection, curve] : report.projections) {
    CAPTURE(to_string(projection));
    CHECK(curve.auc >= 0.0);
    CHECK(curve.auc <= 1.0);
  }

  CHECK_THROWS_AS(build_report(probs, truth, pred, {"a", "b"}), EvalError);
}

TEST_CASE("report json is stable and carries the expected keys") {
  Tensor probs = Tensor::from_data({4, 3},
                                   {0.6, 0.3, 0.1,
                                    0.2, 0.6, 0.2,
                                    0.1, 0.2, 0.7,
                                    0.3, 0.3, 0.4});
  std::vector<int> truth = {0, 1, 2, 2};
  std::vector<int> pred = {0, 1, 2, 2};
  EvalReport report = build_report(probs, truth, pred, {"normal", "tb", "cancer"});
  const std::string a = report_json(report);
  const std::string b = report_json(report);
  CHECK(a == b);
  CHECK(a.find("\"accuracy\"") != std::string::npos);
  CHECK(a.find("\"confusion\"") != std::string::npos);
  CHECK(a.find("\"per_class_accuracy\"") != std::string::npos);
  CHECK(a.find("\"auc\"") != std::string::npos);
  CHECK(a.find("abnormal_vs_normal") != std::string::npos);
  CHECK(a.find("tb_vs_cancer") != std::string::npos);
  CHECK(a.find("cancer_vs_rest") != std::string::npos);
  CHECK(a.back() == '\n');
}

TEST_CASE("roc csv starts at the infinite threshold") {
  RocCurve curve = roc_and_auc({0.9, 0.1}, {1, 0});
  const std::string csv = roc_csv(curve);
  CHECK(csv.rfind("threshold,fpr,tpr\n", 0) == 0);
  CHECK(csv.find("inf,0,0") != std::string::npos);
}

TEST_CASE("confusion csv carries counts and normalized sections") {
  ConfusionMatrix cm = confusion_matrix({0, 1, 1}, {0, 1, 0}, 2, {"x", "y"});
  const std::string csv = confusion_csv(cm, normalize_confusion(cm));
  CHECK(csv.find("counts") != std::string::npos);
  CHECK(csv.find("normalized") != std::string::npos);
  CHECK(csv.find("x") != std::string::npos);
  CHECK(csv.find("0.5") != std::string::npos);
}

TEST_CASE("format_double round-trips exactly") {
  for (double v : {0.1, 1.0 / 3.0, 1e-17, 123456.789, 0.0}) {
    CHECK(std::stod(format_double(v)) == v);
  }
}
