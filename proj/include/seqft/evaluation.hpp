#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "seqft/tensor.hpp"

namespace seqft {

struct ConfusionMatrix {
  std::vector<std::vector<int64_t>> counts;  // rows = true class, cols = predicted
  std::vector<std::string> class_names;

  int64_t total() const;
};

/// The three binary reductions of the 3-class output, with class order
/// normal=0, tb=1, cancer=2.
enum class BinaryProjection {
  ABNORMAL_VS_NORMAL,  // all samples; positive = abnormal; score = p(tb)+p(cancer)
  TB_VS_CANCER,        // tb and cancer samples; positive = cancer; score renormalized
  CANCER_VS_REST,      // all samples; positive = cancer; score = p(cancer)
};

constexpr std::array<BinaryProjection, 3> kAllProjections = {
    BinaryProjection::ABNORMAL_VS_NORMAL,
    BinaryProjection::TB_VS_CANCER,
    BinaryProjection::CANCER_VS_REST,
};

std::string to_string(BinaryProjection projection);

/// How each projection turns class probabilities into a positive-class score.
std::string score_derivation(BinaryProjection projection);

struct RocPoint {
  double threshold = 0.0;  // samples with score >= threshold predict positive
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // from (0,0) at threshold +inf to (1,1)
  double auc = 0.0;
};

struct NormalizedConfusion {
  std::vector<std::vector<double>> rows;
  std::vector<bool> zero_row;  // true where a class had no samples
};

ConfusionMatrix confusion_matrix(const std::vector<int>& true_labels,
                                 const std::vector<int>& predicted_labels, int k,
                                 std::vector<std::string> class_names = {});

NormalizedConfusion normalize_confusion(const ConfusionMatrix& cm);

double accuracy(const ConfusionMatrix& cm);

struct BinaryScores {
  std::vector<double> scores;
  std::vector<int> labels;  // 1 = positive
};

BinaryScores binary_scores(const Tensor& probabilities, const std::vector<int>& true_labels,
                           BinaryProjection projection);

/// Thresholds at every distinct score, descending, preceded by a +inf
/// start point. Ties at a threshold predict positive, which makes the
/// trapezoid area equal the Mann-Whitney statistic with half-credit ties.
RocCurve roc_and_auc(const std::vector<double>& scores, const std::vector<int>& binary_labels);

struct EvalReport {
  ConfusionMatrix confusion;
  NormalizedConfusion normalized;
  double acc = 0.0;
  std::vector<double> per_class_accuracy;  // diagonal of the normalized matrix
  std::vector<std::pair<BinaryProjection, RocCurve>> projections;  // kAllProjections order
};

/// Pools one vector of predictions into the full metric set. Requires the
/// three-class layout (normal, tb, cancer).
EvalReport build_report(const Tensor& probabilities, const std::vector<int>& true_labels,
                        const std::vector<int>& predicted_labels,
                        const std::vector<std::string>& class_names);

/// Stable JSON rendering of a report (2-space indent, sorted keys, trailing
/// newline), suitable for byte-for-byte comparison across runs.
std::string report_json(const EvalReport& report);

/// CSV with columns threshold,fpr,tpr. The infinite starting threshold is
/// written as "inf".
std::string roc_csv(const RocCurve& curve);

/// CSV holding both the raw counts and the normalized rows.
std::string confusion_csv(const ConfusionMatrix& cm, const NormalizedConfusion& normalized);

/// Doubles formatted with enough digits to round-trip exactly.
std::string format_double(double value);

}  // namespace seqft
