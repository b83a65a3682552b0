#include "ctg/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "ctg/rng.hpp"

namespace ctg {

std::vector<double> resample_epoch(const std::vector<double>& epochs) {
    if (epochs.size() < 2)
        throw std::invalid_argument("resample_epoch: need at least 2 epoch samples");
    const int E = static_cast<int>(epochs.size());
    const int per = 15;  // 3.75 s at 4 Hz
    const int n = E * per;

    std::vector<double> interp(n);
    for (int j = 0; j < n; ++j) {
        const int e0 = j / per;
        const int r = j % per;
        if (r == 0 || e0 >= E - 1) {
            // Exactly on an epoch, or past the last interpolation interval
            // (the final 14 samples hold the last epoch value).
            interp[j] = epochs[std::min(e0, E - 1)];
        } else {
            const double frac = static_cast<double>(r) / per;
            const double a = epochs[e0], b = epochs[e0 + 1];
            interp[j] = (is_missing(a) || is_missing(b))
                            ? missing_value()
                            : (1.0 - frac) * a + frac * b;
        }
    }

    // 5-point moving average over whatever is present in the window; output
    // stays missing exactly where the interpolation was missing.
    std::vector<double> out(n);
    for (int j = 0; j < n; ++j) {
        if (is_missing(interp[j])) {
            out[j] = missing_value();
            continue;
        }
        double sum = 0.0;
        int cnt = 0;
        for (int k = std::max(0, j - 2); k <= std::min(n - 1, j + 2); ++k) {
            if (!is_missing(interp[k])) {
                sum += interp[k];
                ++cnt;
            }
        }
        out[j] = sum / cnt;
    }
    return out;
}

std::vector<double> denoise(std::vector<double> series) {
    const int n = static_cast<int>(series.size());
    for (double& v : series) {
        if (!is_missing(v) && (v < kBandLo || v > kBandHi)) v = missing_value();
    }
    // Spike detection runs on the banded signal and all replacements apply
    // simultaneously, so one spike cannot unmask its neighbour.
    std::vector<std::pair<int, double>> repl;
    for (int i = 1; i + 1 < n; ++i) {
        const double a = series[i - 1], b = series[i], c = series[i + 1];
        if (is_missing(a) || is_missing(b) || is_missing(c)) continue;
        if (std::abs(b - a) > 25.0 && std::abs(b - c) > 25.0)
            repl.emplace_back(i, (a + c) / 2.0);
    }
    for (const auto& [i, v] : repl) series[i] = v;
    return series;
}

std::vector<FhrSegment> segment_record(const CtgRecord& record) {
    if (record.sample_rate != kSampleRate)
        throw std::invalid_argument("segment_record: record must be at 4 Hz");
    const int n = static_cast<int>(record.fhr.size());
    std::vector<FhrSegment> out;
    for (int start = 0; start + kMinTailLen <= n; start += kSegmentStride) {
        const int avail = std::min(kSegmentLen, n - start);
        FhrSegment seg;
        seg.ctg_id = record.ctg_id;
        seg.start_offset = static_cast<double>(start) / kSampleRate;
        seg.label = record.group;
        seg.values.assign(kSegmentLen, 0.0);
        seg.mask.assign(kSegmentLen, Mask::PAD);
        int n_missing = 0;
        for (int i = 0; i < avail; ++i) {
            const double v = record.fhr[start + i];
            if (is_missing(v)) {
                seg.mask[i] = Mask::MISSING;
                ++n_missing;
            } else {
                seg.mask[i] = Mask::VALID;
                seg.values[i] = v;
            }
        }
        if (n_missing > 300) continue;

        // Flat-line exclusion on the valid samples.
        double sum = 0.0, sum2 = 0.0, lo = 0.0, hi = 0.0;
        int cnt = 0;
        for (int i = 0; i < avail; ++i) {
            if (seg.mask[i] != Mask::VALID) continue;
            const double v = seg.values[i];
            if (cnt == 0) lo = hi = v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            sum += v;
            sum2 += v * v;
            ++cnt;
        }
        if (cnt == 0) continue;
        const double mean = sum / cnt;
        const double var = std::max(0.0, sum2 / cnt - mean * mean);
        if (std::sqrt(var) < 1.0 || (hi - lo) < 5.0) continue;
        out.push_back(std::move(seg));
    }
    return out;
}

CtgRecord clean_record(const CtgRecord& rec) {
    CtgRecord working = rec;
    if (rec.sample_rate != kSampleRate) {
        working.fhr = resample_epoch(rec.fhr);
        working.sample_rate = kSampleRate;
    }
    working.fhr = denoise(std::move(working.fhr));
    return working;
}

SegmentSet preprocess_corpus(const std::vector<CtgRecord>& records) {
    SegmentSet set;
    for (const auto& rec : records) {
        CaseInfo info;
        info.ctg_id = rec.ctg_id;
        info.label = rec.group;
        info.conditions = rec.conditions;
        set.cases.push_back(std::move(info));

        auto segs = segment_record(clean_record(rec));
        for (auto& s : segs) set.segments.push_back(std::move(s));
    }
    return set;
}

NormStats fit_norm_stats(const std::vector<FhrSegment>& train_segments) {
    double sum = 0.0, sum2 = 0.0;
    std::size_t cnt = 0;
    for (const auto& seg : train_segments) {
        for (int i = 0; i < kSegmentLen; ++i) {
            if (seg.mask[i] != Mask::VALID) continue;
            sum += seg.values[i];
            sum2 += seg.values[i] * seg.values[i];
            ++cnt;
        }
    }
    if (cnt == 0) throw std::invalid_argument("fit_norm_stats: no VALID samples");
    NormStats s;
    s.mean = sum / static_cast<double>(cnt);
    s.sd = std::sqrt(std::max(0.0, sum2 / static_cast<double>(cnt) - s.mean * s.mean));
    if (!(s.sd > 0.0)) throw std::invalid_argument("fit_norm_stats: zero variance");
    return s;
}

std::vector<double> standardize(const FhrSegment& seg, const NormStats& stats) {
    std::vector<double> out(kSegmentLen, 0.0);
    for (int i = 0; i < kSegmentLen; ++i)
        if (seg.mask[i] == Mask::VALID) out[i] = (seg.values[i] - stats.mean) / stats.sd;
    return out;
}

std::vector<double> fft_input(const FhrSegment& seg) {
    // Mean-fill compromised positions so sentinels don't leak into the
    // spectrum.
    double mean = 0.0;
    int cnt = 0;
    for (int i = 0; i < kSegmentLen; ++i) {
        if (seg.mask[i] == Mask::VALID) {
            mean += seg.values[i];
            ++cnt;
        }
    }
    mean = cnt ? mean / cnt : 0.0;
    std::vector<double> x(kSegmentLen);
    for (int i = 0; i < kSegmentLen; ++i)
        x[i] = seg.mask[i] == Mask::VALID ? seg.values[i] : mean;

    // Direct real DFT over bins 0..600 via a (j*k mod N) twiddle table.
    static const int N = kSegmentLen;
    static const std::vector<double>& cos_tab = [] {
        static std::vector<double> t(N);
        for (int i = 0; i < N; ++i) t[i] = std::cos(2.0 * 3.14159265358979323846 * i / N);
        return t;
    }();
    static const std::vector<double>& sin_tab = [] {
        static std::vector<double> t(N);
        for (int i = 0; i < N; ++i) t[i] = std::sin(2.0 * 3.14159265358979323846 * i / N);
        return t;
    }();

    std::vector<double> mag(kFftBins);
    double mx = 0.0;
    for (int k = 0; k < kFftBins; ++k) {
        double re = 0.0, im = 0.0;
        int idx = 0;
        for (int j = 0; j < N; ++j) {
            re += x[j] * cos_tab[idx];
            im -= x[j] * sin_tab[idx];
            idx += k;
            if (idx >= N) idx -= N;
        }
        mag[k] = std::sqrt(re * re + im * im);
        mx = std::max(mx, mag[k]);
    }
    if (mx > 0.0)
        for (double& v : mag) v /= mx;
    return mag;
}

std::map<std::string, Split> split_by_ctg(const SegmentSet& set, double val_frac,
                                          double test_frac, std::uint64_t seed) {
    // Distinct parent ids per class, in deterministic (sorted) base order.
    std::set<std::string> seen;
    std::vector<std::string> ids_by_class[2];
    for (const auto& seg : set.segments) {
        if (!seen.insert(seg.ctg_id).second) continue;
        if (seg.label != 0 && seg.label != 1)
            throw std::invalid_argument("split_by_ctg: bad label");
        ids_by_class[seg.label].push_back(seg.ctg_id);
    }
    if (seen.size() < 3)
        throw std::invalid_argument("split_by_ctg: need at least 3 distinct ctg_ids");

    std::map<std::string, Split> out;
    for (int cls = 0; cls < 2; ++cls) {
        auto& ids = ids_by_class[cls];
        std::sort(ids.begin(), ids.end());
        Rng rng(derive_seed(seed, 0x73706c69ULL, static_cast<std::uint64_t>(cls)));
        rng.shuffle(ids);
        const int n = static_cast<int>(ids.size());
        const int n_test = static_cast<int>(std::llround(test_frac * n));
        const int n_val = static_cast<int>(std::llround(val_frac * n));
        for (int i = 0; i < n; ++i) {
            Split s = Split::TRAIN;
            if (i < n_test)
                s = Split::TEST;
            else if (i < n_test + n_val)
                s = Split::VAL;
            out[ids[i]] = s;
        }
    }
    return out;
}

}  // namespace ctg
