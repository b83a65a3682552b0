#include "ctg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include "ctg/io.hpp"
#include "ctg/rng.hpp"

namespace ctg {

namespace {

void check_two_classes(const std::vector<int>& labels, const char* who) {
    bool pos = false, neg = false;
    for (int l : labels) (l == 1 ? pos : neg) = true;
    if (!pos || !neg) throw std::invalid_argument(std::string(who) + ": needs both classes");
}

// Candidate thresholds: midpoints of adjacent sorted unique scores, bracketed
// by 0 and 1 (scores live strictly inside (0,1)).
std::vector<double> candidate_thresholds(const std::vector<double>& scores) {
    std::vector<double> uniq(scores);
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    std::vector<double> cand;
    cand.push_back(0.0);
    for (std::size_t i = 0; i + 1 < uniq.size(); ++i)
        cand.push_back(0.5 * (uniq[i] + uniq[i + 1]));
    cand.push_back(1.0);
    return cand;
}

struct Rates {
    double tpr = 0, fpr = 0;
};

Rates rates_at(const std::vector<double>& scores, const std::vector<int>& labels,
               double thr) {
    long tp = 0, fp = 0, np = 0, nn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] == 1) {
            ++np;
            if (scores[i] >= thr) ++tp;
        } else {
            ++nn;
            if (scores[i] >= thr) ++fp;
        }
    }
    Rates r;
    r.tpr = np ? static_cast<double>(tp) / np : 0.0;
    r.fpr = nn ? static_cast<double>(fp) / nn : 0.0;
    return r;
}

double percentile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * (static_cast<double>(v.size()) - 1.0);
    const std::size_t i = static_cast<std::size_t>(pos);
    if (i + 1 >= v.size()) return v.back();
    const double frac = pos - static_cast<double>(i);
    return v[i] + (v[i + 1] - v[i]) * frac;
}

std::string fmt_ci(double x, double lo, double hi) {
    return fmt(x) + " [" + fmt(lo) + ", " + fmt(hi) + "]";
}

}  // namespace

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw std::invalid_argument("auroc: bad input sizes");
    check_two_classes(labels, "auroc");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // midranks over tie groups
    std::vector<double> rank(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double mid = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
        i = j + 1;
    }
    double rank_pos = 0;
    long np = 0;
    for (std::size_t k = 0; k < n; ++k)
        if (labels[k] == 1) {
            rank_pos += rank[k];
            ++np;
        }
    const long nn = static_cast<long>(n) - np;
    const double u = rank_pos - 0.5 * static_cast<double>(np) * (np + 1.0);
    return u / (static_cast<double>(np) * static_cast<double>(nn));
}

std::pair<double, double> bootstrap_ci(const MetricFn& metric,
                                       const std::vector<double>& scores,
                                       const std::vector<int>& labels, int B,
                                       std::uint64_t seed) {
    if (B < 2) throw std::invalid_argument("bootstrap_ci: B must be >= 2");
    const std::size_t n = scores.size();
    if (n == 0) throw std::invalid_argument("bootstrap_ci: empty input");
    const double point = metric(scores, labels);

    std::vector<double> vals;
    vals.reserve(B);
    for (int b = 0; b < B; ++b) {
        bool ok = false;
        for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
            Rng rng(derive_seed(seed, 0x62747374ULL, static_cast<std::uint64_t>(b),
                                static_cast<std::uint64_t>(attempt)));
            std::vector<double> s(n);
            std::vector<int> l(n);
            for (std::size_t k = 0; k < n; ++k) {
                const std::size_t j = rng.uniform_int(n);
                s[k] = scores[j];
                l[k] = labels[j];
            }
            try {
                vals.push_back(metric(s, l));
                ok = true;
            } catch (const std::exception&) {
            }
        }
        if (!ok) throw std::runtime_error("bootstrap_ci: resamples persistently degenerate");
    }
    double lo = percentile(vals, 0.025);
    double hi = percentile(vals, 0.975);
    lo = std::min(lo, point);
    hi = std::max(hi, point);
    return {lo, hi};
}

double ece(const std::vector<double>& scores, const std::vector<int>& labels, int bins) {
    if (scores.empty() || scores.size() != labels.size())
        throw std::invalid_argument("ece: bad input sizes");
    if (bins < 1) throw std::invalid_argument("ece: bins must be >= 1");
    std::vector<double> sum_score(bins, 0.0), sum_label(bins, 0.0);
    std::vector<long> count(bins, 0);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        int b = static_cast<int>(scores[i] * bins);
        b = std::clamp(b, 0, bins - 1);
        sum_score[b] += scores[i];
        sum_label[b] += labels[i];
        ++count[b];
    }
    double out = 0;
    for (int b = 0; b < bins; ++b) {
        if (!count[b]) continue;
        const double w = static_cast<double>(count[b]) / static_cast<double>(scores.size());
        out += w * std::abs(sum_label[b] / count[b] - sum_score[b] / count[b]);
    }
    return out;
}

double youden_threshold(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw std::invalid_argument("youden_threshold: bad input sizes");
    check_two_classes(labels, "youden_threshold");
    double best_j = -2.0, best_thr = 0.0;
    for (double thr : candidate_thresholds(scores)) {
        const Rates r = rates_at(scores, labels, thr);
        const double j = r.tpr - r.fpr;
        if (j > best_j || (j == best_j && thr > best_thr)) {
            best_j = j;
            best_thr = thr;
        }
    }
    return best_thr;
}

OperatingPoint operating_point(const std::vector<double>& scores,
                               const std::vector<int>& labels, double threshold) {
    if (scores.size() != labels.size() || scores.empty())
        throw std::invalid_argument("operating_point: bad input sizes");
    check_two_classes(labels, "operating_point");
    long tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool pred = scores[i] >= threshold;
        if (labels[i] == 1)
            (pred ? tp : fn) += 1;
        else
            (pred ? fp : tn) += 1;
    }
    OperatingPoint op;
    op.sensitivity = static_cast<double>(tp) / static_cast<double>(tp + fn);
    op.specificity = static_cast<double>(tn) / static_cast<double>(tn + fp);
    op.f1 = (2 * tp + fp + fn) > 0
                ? 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn)
                : 0.0;
    return op;
}

std::vector<CaseScore> aggregate_case(const std::vector<std::string>& seg_ids,
                                      const std::vector<double>& seg_scores,
                                      const std::vector<CaseInfo>& cases) {
    if (seg_ids.size() != seg_scores.size())
        throw std::invalid_argument("aggregate_case: bad input sizes");
    std::map<std::string, std::vector<double>> by_id;
    for (std::size_t i = 0; i < seg_ids.size(); ++i) by_id[seg_ids[i]].push_back(seg_scores[i]);

    std::map<std::string, int> label_by_id;
    for (const auto& c : cases) label_by_id[c.ctg_id] = c.label;

    std::vector<CaseScore> out;
    for (auto& [id, v] : by_id) {  // std::map iterates sorted by ctg_id
        auto it = label_by_id.find(id);
        if (it == label_by_id.end())
            throw std::invalid_argument("aggregate_case: unknown ctg_id " + id);
        std::sort(v.begin(), v.end());
        CaseScore cs;
        cs.ctg_id = id;
        cs.label = it->second;
        cs.n_segments = static_cast<int>(v.size());
        const std::size_t n = v.size();
        cs.median = (n % 2) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
        cs.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(n);
        cs.min = v.front();
        cs.max = v.back();
        out.push_back(std::move(cs));
    }
    return out;
}

MetricsReport compute_metrics(const std::vector<std::string>& seg_ids,
                              const std::vector<double>& seg_scores,
                              const std::vector<int>& seg_labels, double mse_bpm2,
                              const std::vector<CaseInfo>& cases, int B,
                              std::uint64_t seed) {
    if (seg_ids.size() != seg_scores.size() || seg_ids.size() != seg_labels.size() ||
        seg_ids.empty())
        throw std::invalid_argument("compute_metrics: bad input sizes");

    MetricsReport r;
    r.n_segments = static_cast<int>(seg_scores.size());
    for (int l : seg_labels) r.n_segments_pos += l;
    r.mse_bpm2 = mse_bpm2;

    const MetricFn auroc_fn = [](const std::vector<double>& s, const std::vector<int>& l) {
        return auroc(s, l);
    };

    r.segment_auroc = auroc(seg_scores, seg_labels);
    std::tie(r.segment_auroc_lo, r.segment_auroc_hi) =
        bootstrap_ci(auroc_fn, seg_scores, seg_labels, B, derive_seed(seed, 0x73656761ULL));
    r.ece_segment = ece(seg_scores, seg_labels);

    r.case_scores = aggregate_case(seg_ids, seg_scores, cases);
    std::vector<double> cs;
    std::vector<int> cl;
    for (const auto& c : r.case_scores) {
        cs.push_back(c.median);
        cl.push_back(c.label);
    }
    r.n_cases = static_cast<int>(cs.size());
    for (int l : cl) r.n_cases_pos += l;

    r.case_auroc = auroc(cs, cl);
    std::tie(r.case_auroc_lo, r.case_auroc_hi) =
        bootstrap_ci(auroc_fn, cs, cl, B, derive_seed(seed, 0x63617361ULL));

    r.youden = youden_threshold(cs, cl);
    const double thr = r.youden;
    const OperatingPoint op = operating_point(cs, cl, thr);
    r.sensitivity = op.sensitivity;
    r.specificity = op.specificity;
    r.f1 = op.f1;
    const auto op_metric = [thr](int which) {
        return MetricFn([thr, which](const std::vector<double>& s, const std::vector<int>& l) {
            const OperatingPoint o = operating_point(s, l, thr);
            return which == 0 ? o.sensitivity : which == 1 ? o.specificity : o.f1;
        });
    };
    std::tie(r.sensitivity_lo, r.sensitivity_hi) =
        bootstrap_ci(op_metric(0), cs, cl, B, derive_seed(seed, 0x73656e73ULL));
    std::tie(r.specificity_lo, r.specificity_hi) =
        bootstrap_ci(op_metric(1), cs, cl, B, derive_seed(seed, 0x73706563ULL));
    std::tie(r.f1_lo, r.f1_hi) =
        bootstrap_ci(op_metric(2), cs, cl, B, derive_seed(seed, 0x66317363ULL));

    // Per-condition: condition-positive APO cases versus all NPO cases.
    std::map<std::string, CaseInfo> case_by_id;
    for (const auto& c : cases) case_by_id[c.ctg_id] = c;
    for (const auto& tag : condition_tags()) {
        ConditionEntry e;
        e.condition = tag;
        std::set<std::string> cond_ids;
        for (const auto& c : cases)
            if (c.label == 1 &&
                std::find(c.conditions.begin(), c.conditions.end(), tag) != c.conditions.end())
                cond_ids.insert(c.ctg_id);
        // restrict to ids that actually have scored segments
        std::set<std::string> scored;
        for (const auto& id : seg_ids) scored.insert(id);
        for (auto it = cond_ids.begin(); it != cond_ids.end();)
            it = scored.count(*it) ? std::next(it) : cond_ids.erase(it);
        e.n_cases = static_cast<int>(cond_ids.size());
        if (e.n_cases == 0) {
            r.per_condition.push_back(std::move(e));
            continue;
        }
        std::vector<double> ss, cs2;
        std::vector<int> sl, cl2;
        for (std::size_t i = 0; i < seg_ids.size(); ++i) {
            const auto& info = case_by_id.at(seg_ids[i]);
            if (info.label == 0) {
                ss.push_back(seg_scores[i]);
                sl.push_back(0);
            } else if (cond_ids.count(seg_ids[i])) {
                ss.push_back(seg_scores[i]);
                sl.push_back(1);
            }
        }
        for (const auto& c : r.case_scores) {
            if (c.label == 0) {
                cs2.push_back(c.median);
                cl2.push_back(0);
            } else if (cond_ids.count(c.ctg_id)) {
                cs2.push_back(c.median);
                cl2.push_back(1);
            }
        }
        e.absent = false;
        e.segment_auroc = auroc(ss, sl);
        std::tie(e.segment_lo, e.segment_hi) = bootstrap_ci(
            auroc_fn, ss, sl, B, derive_seed(seed, 0x636f7365ULL, std::hash<std::string>{}(tag)));
        e.case_auroc = auroc(cs2, cl2);
        std::tie(e.case_lo, e.case_hi) = bootstrap_ci(
            auroc_fn, cs2, cl2, B, derive_seed(seed, 0x636f6361ULL, std::hash<std::string>{}(tag)));
        r.per_condition.push_back(std::move(e));
    }
    return r;
}

std::string metrics_text(const MetricsReport& r) {
    std::string out;
    out += "segments: " + std::to_string(r.n_segments) + " (" +
           std::to_string(r.n_segments_pos) + " apo, " +
           std::to_string(r.n_segments - r.n_segments_pos) + " npo)\n";
    out += "cases: " + std::to_string(r.n_cases) + " (" + std::to_string(r.n_cases_pos) +
           " apo, " + std::to_string(r.n_cases - r.n_cases_pos) + " npo)\n";
    out += "segment_auroc = " + fmt_ci(r.segment_auroc, r.segment_auroc_lo, r.segment_auroc_hi) + "\n";
    out += "case_auroc = " + fmt_ci(r.case_auroc, r.case_auroc_lo, r.case_auroc_hi) + "\n";
    out += "mse_bpm2 = " + fmt(r.mse_bpm2) + "\n";
    out += "ece = " + fmt(r.ece_segment) + "\n";
    out += "youden_threshold = " + fmt(r.youden) + "\n";
    out += "sensitivity = " + fmt_ci(r.sensitivity, r.sensitivity_lo, r.sensitivity_hi) + "\n";
    out += "specificity = " + fmt_ci(r.specificity, r.specificity_lo, r.specificity_hi) + "\n";
    out += "f1 = " + fmt_ci(r.f1, r.f1_lo, r.f1_hi) + "\n";
    out += "\nper-condition (condition APO cases vs all NPO cases):\n";
    for (const auto& e : r.per_condition) {
        if (e.absent) {
            out += "  " + e.condition + ": absent\n";
        } else {
            out += "  " + e.condition + ": n=" + std::to_string(e.n_cases) +
                   " segment_auroc = " + fmt_ci(e.segment_auroc, e.segment_lo, e.segment_hi) +
                   " case_auroc = " + fmt_ci(e.case_auroc, e.case_lo, e.case_hi) + "\n";
        }
    }
    return out;
}

std::string roc_csv(const std::vector<double>& scores, const std::vector<int>& labels) {
    std::string out = "threshold,fpr,tpr\n";
    auto cand = candidate_thresholds(scores);
    std::sort(cand.begin(), cand.end(), std::greater<double>());
    for (double thr : cand) {
        const Rates r = rates_at(scores, labels, thr);
        out += fmt(thr) + "," + fmt(r.fpr) + "," + fmt(r.tpr) + "\n";
    }
    return out;
}

std::string hist_csv(const std::vector<double>& scores, const std::vector<int>& labels,
                     int bins) {
    std::vector<long> npo(bins, 0), apo(bins, 0);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        int b = std::clamp(static_cast<int>(scores[i] * bins), 0, bins - 1);
        (labels[i] == 1 ? apo : npo)[b] += 1;
    }
    std::string out = "bin_lo,bin_hi,count_npo,count_apo\n";
    for (int b = 0; b < bins; ++b)
        out += fmt(static_cast<double>(b) / bins) + "," + fmt(static_cast<double>(b + 1) / bins) +
               "," + std::to_string(npo[b]) + "," + std::to_string(apo[b]) + "\n";
    return out;
}

std::string calibration_csv(const std::vector<double>& scores,
                            const std::vector<int>& labels, int bins) {
    std::vector<double> sum_score(bins, 0.0), sum_label(bins, 0.0);
    std::vector<long> count(bins, 0);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        int b = std::clamp(static_cast<int>(scores[i] * bins), 0, bins - 1);
        sum_score[b] += scores[i];
        sum_label[b] += labels[i];
        ++count[b];
    }
    std::string out = "bin_lo,bin_hi,n,mean_score,frac_positive\n";
    for (int b = 0; b < bins; ++b) {
        out += fmt(static_cast<double>(b) / bins) + "," + fmt(static_cast<double>(b + 1) / bins) +
               "," + std::to_string(count[b]) + ",";
        if (count[b]) {
            out += fmt(sum_score[b] / count[b]) + "," + fmt(sum_label[b] / count[b]);
        } else {
            out += ",";
        }
        out += "\n";
    }
    return out;
}

std::string per_condition_csv(const MetricsReport& r) {
    std::string out =
        "condition,n_cases,segment_auroc,segment_lo,segment_hi,case_auroc,case_lo,case_hi\n";
    for (const auto& e : r.per_condition) {
        out += e.condition + "," + std::to_string(e.n_cases) + ",";
        if (e.absent) {
            out += ",,,,,";
        } else {
            out += fmt(e.segment_auroc) + "," + fmt(e.segment_lo) + "," + fmt(e.segment_hi) +
                   "," + fmt(e.case_auroc) + "," + fmt(e.case_lo) + "," + fmt(e.case_hi);
        }
        out += "\n";
    }
    return out;
}

std::string case_scores_csv(const MetricsReport& r) {
    std::string out = "ctg_id,label,n_segments,median,mean,min,max\n";
    for (const auto& c : r.case_scores)
        out += c.ctg_id + "," + std::to_string(c.label) + "," + std::to_string(c.n_segments) +
               "," + fmt(c.median) + "," + fmt(c.mean) + "," + fmt(c.min) + "," + fmt(c.max) +
               "\n";
    return out;
}

std::vector<TraceInterval> interval_scores(const std::vector<SegmentSpan>& spans,
                                           double duration_s, double interval_s) {
    if (duration_s <= 0 || interval_s <= 0)
        throw std::invalid_argument("interval_scores: nonpositive duration or interval");
    const int n = static_cast<int>(std::ceil(duration_s / interval_s));
    std::vector<TraceInterval> out(n);
    for (int k = 0; k < n; ++k) {
        TraceInterval& iv = out[k];
        iv.index = k;
        iv.t0 = k * interval_s;
        iv.t1 = std::min(duration_s, (k + 1) * interval_s);
        double sum = 0;
        for (const auto& sp : spans)
            if (sp.t0 < iv.t1 && sp.t1 > iv.t0) {
                sum += sp.score;
                ++iv.n_segments;
            }
        if (iv.n_segments) {
            iv.absent = false;
            iv.mean_score = sum / iv.n_segments;
        }
    }
    return out;
}

std::string trace_scores_csv(const std::vector<TraceInterval>& intervals) {
    std::string out = "interval,t_start_s,t_end_s,n_segments,mean_score\n";
    for (const auto& iv : intervals) {
        out += std::to_string(iv.index) + "," + fmt(iv.t0) + "," + fmt(iv.t1) + "," +
               std::to_string(iv.n_segments) + ",";
        if (!iv.absent) out += fmt(iv.mean_score);
        out += "\n";
    }
    return out;
}

}  // namespace ctg
