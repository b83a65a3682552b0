#pragma once
// The nine clinical features computed per segment.  All of them respect the
// mask: MISSING/PAD positions never contribute, whatever value they hold.

#include <utility>
#include <vector>

#include "ctg/types.hpp"

namespace ctg {

// Trimmed baseline estimate: running 60 s median over VALID samples, then
// the mean of VALID samples within +-10 bpm of their local median.
// Throws when fewer than 240 VALID samples (60 s) are available.
double feat_baseline(const FhrSegment& seg);

// Baseline over the final minute minus baseline over the first minute of the
// non-PAD extent.
double feat_baseline_shift(const FhrSegment& seg);

// Dawes-Redman-style epoch statistics on 3.75 s (15-sample) epochs; an epoch
// counts only when all 15 samples are VALID.
double feat_stv(const FhrSegment& seg);
double feat_ltv(const FhrSegment& seg);

// Population SD and max-min over VALID samples.
std::pair<double, double> feat_sd_range(const FhrSegment& seg);

// Excursions of >= 15 bpm beyond the baseline sustained >= 15 s; runs closer
// than 5 s merge.  Returns (accelerations, decelerations).
std::pair<int, int> count_events(const FhrSegment& seg, double baseline,
                                 double threshold_bpm = 15.0,
                                 double min_duration_s = 15.0,
                                 double merge_gap_s = 5.0);

// All nine features in feature_names() order; throws when a feature's
// precondition fails.
FeatureRow compute_features(const FhrSegment& seg);

// Dataset-level driver: segments whose preconditions fail are skipped.
std::vector<FeatureRow> compute_feature_rows(const std::vector<FhrSegment>& segments);

}  // namespace ctg
