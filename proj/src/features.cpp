#include "ctg/features.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ctg {

namespace {

constexpr int kMinuteSamples = 240;  // 60 s at 4 Hz
constexpr int kEpochSamples = 15;    // 3.75 s at 4 Hz
constexpr int kEpochsPerMinute = 16;

double median_of(std::vector<double>& buf) {
    const std::size_t n = buf.size();
    const std::size_t mid = n / 2;
    std::nth_element(buf.begin(), buf.begin() + mid, buf.end());
    double m = buf[mid];
    if (n % 2 == 0) {
        std::nth_element(buf.begin(), buf.begin() + mid - 1, buf.begin() + mid);
        m = (m + buf[mid - 1]) / 2.0;
    }
    return m;
}

// Baseline estimator over values[i0, i1) of the segment.  `min_valid` guards
// windows where missing bursts ate most of the minute.
double baseline_over(const FhrSegment& seg, int i0, int i1, int min_valid) {
    int n_valid = 0;
    for (int i = i0; i < i1; ++i) n_valid += (seg.mask[i] == Mask::VALID);
    if (n_valid < min_valid)
        throw std::invalid_argument("baseline: insufficient VALID samples");

    double sum = 0.0;
    int cnt = 0;
    std::vector<double> window;
    window.reserve(kMinuteSamples);
    for (int i = i0; i < i1; ++i) {
        if (seg.mask[i] != Mask::VALID) continue;
        window.clear();
        const int lo = std::max(i0, i - kMinuteSamples / 2);
        const int hi = std::min(i1, i + kMinuteSamples / 2);
        for (int j = lo; j < hi; ++j)
            if (seg.mask[j] == Mask::VALID) window.push_back(seg.values[j]);
        const double med = median_of(window);
        if (std::abs(seg.values[i] - med) <= 10.0) {
            sum += seg.values[i];
            ++cnt;
        }
    }
    if (cnt == 0) throw std::invalid_argument("baseline: no samples near running median");
    return sum / cnt;
}

int non_pad_len(const FhrSegment& seg) {
    int n = kSegmentLen;
    while (n > 0 && seg.mask[n - 1] == Mask::PAD) --n;
    return n;
}

// Epoch means; NaN where the epoch has any non-VALID sample.
std::vector<double> epoch_means(const FhrSegment& seg) {
    const int n_epochs = kSegmentLen / kEpochSamples;
    std::vector<double> em(n_epochs, missing_value());
    for (int e = 0; e < n_epochs; ++e) {
        double sum = 0.0;
        bool ok = true;
        for (int i = e * kEpochSamples; i < (e + 1) * kEpochSamples; ++i) {
            if (seg.mask[i] != Mask::VALID) {
                ok = false;
                break;
            }
            sum += seg.values[i];
        }
        if (ok) em[e] = sum / kEpochSamples;
    }
    return em;
}

void require_epoch_coverage(const std::vector<double>& em) {
    int good_minutes = 0;
    for (std::size_t m = 0; m + kEpochsPerMinute <= em.size(); m += kEpochsPerMinute) {
        int valid = 0;
        for (std::size_t e = m; e < m + kEpochsPerMinute; ++e) valid += !is_missing(em[e]);
        if (valid * 2 >= kEpochsPerMinute) ++good_minutes;
    }
    if (good_minutes < 4)
        throw std::invalid_argument("stv/ltv: need 4 minutes of VALID-majority epochs");
}

}  // namespace

double feat_baseline(const FhrSegment& seg) {
    return baseline_over(seg, 0, non_pad_len(seg), kMinuteSamples);
}

double feat_baseline_shift(const FhrSegment& seg) {
    const int n = non_pad_len(seg);
    if (n < 2 * kMinuteSamples)
        throw std::invalid_argument("baseline_shift: segment shorter than 2 minutes");
    const double first = baseline_over(seg, 0, kMinuteSamples, kMinuteSamples / 2);
    const double last = baseline_over(seg, n - kMinuteSamples, n, kMinuteSamples / 2);
    return last - first;
}

double feat_stv(const FhrSegment& seg) {
    const auto em = epoch_means(seg);
    require_epoch_coverage(em);
    double sum = 0.0;
    int cnt = 0;
    for (std::size_t e = 0; e + 1 < em.size(); ++e) {
        if (is_missing(em[e]) || is_missing(em[e + 1])) continue;
        sum += std::abs(em[e + 1] - em[e]);
        ++cnt;
    }
    if (cnt == 0) throw std::invalid_argument("stv: no adjacent valid epoch pairs");
    return sum / cnt;
}

double feat_ltv(const FhrSegment& seg) {
    const auto em = epoch_means(seg);
    require_epoch_coverage(em);
    double sum = 0.0;
    int minutes = 0;
    for (std::size_t m = 0; m + kEpochsPerMinute <= em.size(); m += kEpochsPerMinute) {
        double lo = 0.0, hi = 0.0;
        int valid = 0;
        for (std::size_t e = m; e < m + kEpochsPerMinute; ++e) {
            if (is_missing(em[e])) continue;
            if (valid == 0) lo = hi = em[e];
            lo = std::min(lo, em[e]);
            hi = std::max(hi, em[e]);
            ++valid;
        }
        // A minute counts when most of its epochs are usable.
        if (valid * 2 >= kEpochsPerMinute) {
            sum += hi - lo;
            ++minutes;
        }
    }
    if (minutes == 0) throw std::invalid_argument("ltv: no usable minutes");
    return sum / minutes;
}

std::pair<double, double> feat_sd_range(const FhrSegment& seg) {
    double sum = 0.0, sum2 = 0.0, lo = 0.0, hi = 0.0;
    int cnt = 0;
    for (int i = 0; i < kSegmentLen; ++i) {
        if (seg.mask[i] != Mask::VALID) continue;
        const double v = seg.values[i];
        if (cnt == 0) lo = hi = v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        sum += v;
        sum2 += v * v;
        ++cnt;
    }
    if (cnt == 0) throw std::invalid_argument("sd_range: no VALID samples");
    const double mean = sum / cnt;
    const double var = std::max(0.0, sum2 / cnt - mean * mean);
    return {std::sqrt(var), hi - lo};
}

std::pair<int, int> count_events(const FhrSegment& seg, double baseline,
                                 double threshold_bpm, double min_duration_s,
                                 double merge_gap_s) {
    const int min_len = static_cast<int>(min_duration_s * kSampleRate);
    const int merge_gap = static_cast<int>(merge_gap_s * kSampleRate);

    auto count_side = [&](double sign) {
        // Maximal marked runs.
        std::vector<std::pair<int, int>> runs;
        int start = -1;
        for (int i = 0; i <= kSegmentLen; ++i) {
            const bool marked =
                i < kSegmentLen && seg.mask[i] == Mask::VALID &&
                sign * (seg.values[i] - baseline) >= threshold_bpm;
            if (marked && start < 0) start = i;
            if (!marked && start >= 0) {
                runs.emplace_back(start, i - 1);
                start = -1;
            }
        }
        // Merge runs separated by less than the gap, then apply the duration
        // rule to the merged extent.
        int count = 0;
        std::size_t r = 0;
        while (r < runs.size()) {
            int lo = runs[r].first, hi = runs[r].second;
            while (r + 1 < runs.size() && runs[r + 1].first - hi - 1 < merge_gap) {
                ++r;
                hi = runs[r].second;
            }
            if (hi - lo + 1 >= min_len) ++count;
            ++r;
        }
        return count;
    };

    return {count_side(+1.0), count_side(-1.0)};
}

FeatureRow compute_features(const FhrSegment& seg) {
    FeatureRow row;
    row.ctg_id = seg.ctg_id;
    row.start_offset = seg.start_offset;
    row.label = seg.label;
    const double base = feat_baseline(seg);
    const auto [sd, range] = feat_sd_range(seg);
    const auto [accels, decels] = count_events(seg, base);
    row.values[0] = base;
    row.values[1] = feat_baseline_shift(seg);
    row.values[2] = base - 140.0;
    row.values[3] = feat_stv(seg);
    row.values[4] = feat_ltv(seg);
    row.values[5] = sd;
    row.values[6] = range;
    row.values[7] = accels;
    row.values[8] = decels;
    return row;
}

std::vector<FeatureRow> compute_feature_rows(const std::vector<FhrSegment>& segments) {
    std::vector<FeatureRow> rows;
    rows.reserve(segments.size());
    for (const auto& seg : segments) {
        try {
            rows.push_back(compute_features(seg));
        } catch (const std::invalid_argument&) {
            // Segments with too much missing data for a stable estimate are
            // simply absent from the table.
        }
    }
    return rows;
}

}  // namespace ctg
