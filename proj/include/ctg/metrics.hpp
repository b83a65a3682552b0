#pragma once
// Classification, calibration, and aggregation metrics plus report assembly.

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ctg/types.hpp"

namespace ctg {

// Mann-Whitney AUROC via midranks: (concordant + 0.5 ties) / (n+ * n-).
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

using MetricFn =
    std::function<double(const std::vector<double>&, const std::vector<int>&)>;

// Percentile bootstrap over B resamples; degenerate resamples (metric throws)
// are redrawn.  The interval is widened if needed so it contains the point
// estimate.
std::pair<double, double> bootstrap_ci(const MetricFn& metric,
                                       const std::vector<double>& scores,
                                       const std::vector<int>& labels, int B,
                                       std::uint64_t seed);

// Expected calibration error over equal-width bins on [0,1].
double ece(const std::vector<double>& scores, const std::vector<int>& labels,
           int bins = 10);

// Youden's J over midpoint candidate thresholds; ties resolve to the larger
// threshold (higher specificity).  Predicted positive means score >= t.
double youden_threshold(const std::vector<double>& scores,
                        const std::vector<int>& labels);

struct OperatingPoint {
    double sensitivity = 0, specificity = 0, f1 = 0;
};
OperatingPoint operating_point(const std::vector<double>& scores,
                               const std::vector<int>& labels, double threshold);

struct CaseScore {
    std::string ctg_id;
    int label = 0;
    int n_segments = 0;
    double median = 0, mean = 0, min = 0, max = 0;
};

// Median (mean of middle two when even) per case, plus mean/min/max.
// Output sorted by ctg_id.
std::vector<CaseScore> aggregate_case(const std::vector<std::string>& seg_ids,
                                      const std::vector<double>& seg_scores,
                                      const std::vector<CaseInfo>& cases);

struct ConditionEntry {
    std::string condition;
    int n_cases = 0;  // APO cases carrying the tag
    bool absent = true;
    double segment_auroc = 0, segment_lo = 0, segment_hi = 0;
    double case_auroc = 0, case_lo = 0, case_hi = 0;
};

struct MetricsReport {
    int n_segments = 0, n_segments_pos = 0;
    int n_cases = 0, n_cases_pos = 0;
    double segment_auroc = 0, segment_auroc_lo = 0, segment_auroc_hi = 0;
    double case_auroc = 0, case_auroc_lo = 0, case_auroc_hi = 0;
    double mse_bpm2 = 0;
    double ece_segment = 0;
    double youden = 0;
    double sensitivity = 0, sensitivity_lo = 0, sensitivity_hi = 0;
    double specificity = 0, specificity_lo = 0, specificity_hi = 0;
    double f1 = 0, f1_lo = 0, f1_hi = 0;
    std::vector<CaseScore> case_scores;
    std::vector<ConditionEntry> per_condition;
};

// Assembles the full report.  Segment-level metrics bootstrap over segments,
// case-level metrics over cases; the operating point is held at the Youden
// threshold across resamples.
MetricsReport compute_metrics(const std::vector<std::string>& seg_ids,
                              const std::vector<double>& seg_scores,
                              const std::vector<int>& seg_labels, double mse_bpm2,
                              const std::vector<CaseInfo>& cases, int B,
                              std::uint64_t seed);

std::string metrics_text(const MetricsReport& r);
std::string roc_csv(const std::vector<double>& scores, const std::vector<int>& labels);
std::string hist_csv(const std::vector<double>& scores, const std::vector<int>& labels,
                     int bins = 20);
std::string calibration_csv(const std::vector<double>& scores,
                            const std::vector<int>& labels, int bins = 10);
std::string per_condition_csv(const MetricsReport& r);
std::string case_scores_csv(const MetricsReport& r);

// ---------------------------------------------------------------------------
// trace intervals (Figure-4 style record timelines)
// ---------------------------------------------------------------------------
struct SegmentSpan {
    double t0 = 0, t1 = 0;  // seconds, non-PAD extent
    double score = 0;
};

struct TraceInterval {
    int index = 0;
    double t0 = 0, t1 = 0;
    int n_segments = 0;
    bool absent = true;
    double mean_score = 0;
};

// Mean score of all spans overlapping each `interval_s`-second interval of
// [0, duration_s); intervals no span touches are marked absent.
std::vector<TraceInterval> interval_scores(const std::vector<SegmentSpan>& spans,
                                           double duration_s,
                                           double interval_s = 150.0);

std::string trace_scores_csv(const std::vector<TraceInterval>& intervals);

}  // namespace ctg
