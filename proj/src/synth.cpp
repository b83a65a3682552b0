#include "ctg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "ctg/rng.hpp"

namespace ctg {

namespace {

constexpr double kPi = 3.14159265358979323846;

double quantize_bpm(double x) {
    return static_cast<double>(std::llround(x * 4.0)) / 4.0;
}

std::string make_ctg_id(std::uint64_t index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "ctg_%05llu",
                  static_cast<unsigned long long>(index));
    return buf;
}

// Largest severity weight across a record's tags; 1.0 for NPO.
double record_severity(const SynthConfig& cfg, const std::vector<std::string>& conditions) {
    double sev = 1.0;
    for (const auto& tag : conditions) {
        auto it = cfg.condition_severity.find(tag);
        if (it != cfg.condition_severity.end()) sev = std::max(sev, it->second);
    }
    return sev;
}

// Raised-cosine bump of the given amplitude added in place.
void add_bump(std::vector<double>& x, double center_s, double amp, double dur_s,
              double rate, double sign) {
    const double half = dur_s / 2.0;
    const int lo = std::max(0, static_cast<int>(std::ceil((center_s - half) * rate)));
    const int hi = std::min(static_cast<int>(x.size()) - 1,
                            static_cast<int>(std::floor((center_s + half) * rate)));
    for (int i = lo; i <= hi; ++i) {
        const double t = static_cast<double>(i) / rate - center_s;
        x[i] += sign * amp * 0.5 * (1.0 + std::cos(kPi * t / half));
    }
}

std::vector<std::string> draw_conditions(const SynthConfig& cfg, Rng& rng) {
    const auto& tags = condition_tags();
    auto draw_one = [&]() -> std::string {
        double u = rng.uniform01();
        double acc = 0.0;
        for (const auto& t : tags) {
            auto it = cfg.condition_mix.find(t);
            acc += it == cfg.condition_mix.end() ? 0.0 : it->second;
            if (u < acc) return t;
        }
        return tags.back();
    };
    std::vector<std::string> out{draw_one()};
    if (rng.uniform01() < cfg.co_occur_prob) {
        const std::string second = draw_one();
        if (second != out[0]) out.push_back(second);
    }
    return out;
}

}  // namespace

CtgRecord generate_record(const SynthConfig& cfg, std::uint64_t record_index,
                          int group, const std::vector<std::string>& conditions,
                          bool legacy) {
    Rng rng(derive_seed(cfg.seed, 0x7265636fULL, record_index));

    CtgRecord rec;
    rec.ctg_id = make_ctg_id(record_index);
    rec.group = group;
    rec.conditions = conditions;
    rec.gestational_age = std::round(rng.uniform(27.0, 36.0) * 10.0) / 10.0;

    const double severity = record_severity(cfg, conditions);
    const double minutes = cfg.record_minutes;
    const double rate = cfg.sample_rate;
    const int n = static_cast<int>(minutes * 60.0 * rate);
    const double duration_s = static_cast<double>(n) / rate;

    // Record-level physiology.
    double baseline = rng.normal(cfg.npo_baseline_mean, cfg.npo_baseline_sd);
    double variability = 1.0;
    double accel_rate = rng.uniform(cfg.accel_rate_lo, cfg.accel_rate_hi);
    if (group == 1) {
        baseline += severity * rng.normal(cfg.apo_baseline_offset_mean,
                                          cfg.apo_baseline_offset_sd);
        variability = rng.uniform(cfg.apo_variability_lo, cfg.apo_variability_hi) / severity;
        variability = std::clamp(variability, 0.05, 1.0);
        double accel_factor =
            rng.uniform(cfg.apo_accel_factor_lo, cfg.apo_accel_factor_hi) / severity;
        accel_rate *= std::clamp(accel_factor, 0.02, 1.0);
    }
    baseline = std::clamp(baseline, 90.0, 180.0);

    const double f_slow = rng.uniform(cfg.slow_freq_lo, cfg.slow_freq_hi);
    const double f_fast = rng.uniform(cfg.fast_freq_lo, cfg.fast_freq_hi);
    const double a_slow = rng.uniform(cfg.slow_amp_lo, cfg.slow_amp_hi) * variability;
    const double a_fast = rng.uniform(cfg.fast_amp_lo, cfg.fast_amp_hi) * variability;
    const double ph_slow = rng.uniform(0.0, 2.0 * kPi);
    const double ph_fast = rng.uniform(0.0, 2.0 * kPi);

    std::vector<double> x(n);
    const double ar_sd = cfg.ar_innovation_sd * variability;
    const double stationary_sd = ar_sd / std::sqrt(1.0 - cfg.ar_rho * cfg.ar_rho);
    double ar = rng.normal(0.0, stationary_sd);
    for (int i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / rate;
        if (i > 0) ar = cfg.ar_rho * ar + rng.normal(0.0, ar_sd);
        x[i] = baseline + a_slow * std::sin(2.0 * kPi * f_slow * t + ph_slow) +
               a_fast * std::sin(2.0 * kPi * f_fast * t + ph_fast) + ar;
    }

    // Accelerations.
    const double hours = minutes / 60.0;
    const int n_accel = rng.poisson(accel_rate * hours);
    for (int k = 0; k < n_accel; ++k) {
        const double center = rng.uniform(0.0, duration_s);
        const double amp = rng.uniform(cfg.accel_amp_lo, cfg.accel_amp_hi);
        const double dur = rng.uniform(cfg.accel_dur_lo, cfg.accel_dur_hi);
        add_bump(x, center, amp, dur, rate, +1.0);
    }

    // Decelerations (APO only, severity raises the odds).
    if (group == 1 && rng.uniform01() < std::min(1.0, cfg.apo_decel_prob * severity)) {
        const double decel_rate = rng.uniform(cfg.decel_rate_lo, cfg.decel_rate_hi);
        const int n_decel = rng.poisson(decel_rate * hours);
        for (int k = 0; k < n_decel; ++k) {
            const double center = rng.uniform(0.0, duration_s);
            const double amp = rng.uniform(cfg.decel_amp_lo, cfg.decel_amp_hi);
            const double dur = rng.uniform(cfg.decel_dur_lo, cfg.decel_dur_hi);
            add_bump(x, center, amp, dur, rate, -1.0);
        }
    }

    // Out-of-band spike artifacts (single samples the denoiser should catch).
    const int n_spikes = rng.poisson(cfg.spike_rate * minutes / 10.0);
    for (int k = 0; k < n_spikes; ++k) {
        const int idx = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n)));
        x[idx] = rng.uniform01() < 0.5 ? rng.uniform(kBpmLo, kBandLo - 1.0)
                                       : rng.uniform(kBandHi + 1.0, kBpmHi);
    }

    // Transducer-loss bursts.
    const int n_bursts = rng.poisson(cfg.missing_burst_rate * minutes / 10.0);
    std::vector<bool> missing(n, false);
    for (int k = 0; k < n_bursts; ++k) {
        const int start = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n)));
        const int len =
            static_cast<int>(rng.uniform(cfg.missing_dur_lo, cfg.missing_dur_hi) * rate);
        for (int i = start; i < std::min(n, start + len); ++i) missing[i] = true;
    }

    for (int i = 0; i < n; ++i)
        x[i] = quantize_bpm(std::clamp(x[i], kBpmLo, kBpmHi));

    if (!legacy) {
        rec.sample_rate = rate;
        rec.fhr.resize(n);
        for (int i = 0; i < n; ++i) rec.fhr[i] = missing[i] ? missing_value() : x[i];
        return rec;
    }

    // Legacy records store 3.75 s epoch means; an epoch with no valid samples
    // is missing.
    const int per_epoch = static_cast<int>(kEpochSeconds * rate);  // 15 at 4 Hz
    const int n_epochs = n / per_epoch;
    rec.sample_rate = 1.0 / kEpochSeconds;
    rec.fhr.resize(n_epochs);
    for (int e = 0; e < n_epochs; ++e) {
        double sum = 0.0;
        int cnt = 0;
        for (int i = e * per_epoch; i < (e + 1) * per_epoch; ++i) {
            if (!missing[i]) {
                sum += x[i];
                ++cnt;
            }
        }
        rec.fhr[e] = cnt == 0 ? missing_value() : quantize_bpm(sum / cnt);
    }
    return rec;
}

std::vector<CtgRecord> generate_corpus(const SynthConfig& cfg) {
    cfg.validate();
    const int total = cfg.n_npo_records + cfg.n_apo_records;
    if (total == 0) throw std::invalid_argument("generate_corpus: empty corpus requested");

    // Exactly round(fraction * total) records carry the legacy rate; which
    // ones is a seeded draw, so the count is stable while membership varies
    // with the seed.
    const int legacy_quota =
        static_cast<int>(std::llround(cfg.legacy_epoch_fraction * total));
    std::vector<int> order(total);
    std::iota(order.begin(), order.end(), 0);
    Rng legacy_rng(derive_seed(cfg.seed, 0x6c656761ULL));
    legacy_rng.shuffle(order);
    std::vector<bool> legacy(total, false);
    for (int i = 0; i < legacy_quota; ++i) legacy[order[i]] = true;

    std::vector<CtgRecord> records;
    records.reserve(total);
    for (int i = 0; i < total; ++i) {
        const int group = i < cfg.n_npo_records ? 0 : 1;
        std::vector<std::string> conditions;
        if (group == 1) {
            Rng cond_rng(derive_seed(cfg.seed, 0x636f6e64ULL, static_cast<std::uint64_t>(i)));
            conditions = draw_conditions(cfg, cond_rng);
        }
        records.push_back(generate_record(cfg, static_cast<std::uint64_t>(i), group,
                                          conditions, legacy[i]));
    }
    return records;
}

CorpusSummary corpus_summary(const std::vector<CtgRecord>& records) {
    if (records.empty()) throw std::invalid_argument("corpus_summary: empty corpus");
    CorpusSummary s;
    double ga_npo = 0.0, ga_apo = 0.0;
    std::size_t n_samples = 0, n_missing = 0;
    for (const auto& rec : records) {
        if (rec.group == 1) {
            ++s.n_apo;
            ga_apo += rec.gestational_age;
        } else {
            ++s.n_npo;
            ga_npo += rec.gestational_age;
        }
        for (const auto& tag : rec.conditions) ++s.condition_counts[tag];
        n_samples += rec.fhr.size();
        for (double v : rec.fhr) n_missing += is_missing(v);
    }
    s.mean_ga_npo = s.n_npo ? ga_npo / s.n_npo : missing_value();
    s.mean_ga_apo = s.n_apo ? ga_apo / s.n_apo : missing_value();
    s.missing_pct = n_samples ? 100.0 * static_cast<double>(n_missing) /
                                    static_cast<double>(n_samples)
                              : 0.0;
    return s;
}

std::string summary_text(const CorpusSummary& s) {
    std::string out;
    out += "records_npo " + std::to_string(s.n_npo) + "\n";
    out += "records_apo " + std::to_string(s.n_apo) + "\n";
    auto ga = [](double v) {
        return std::isnan(v) ? std::string("n/a") : std::to_string(v);
    };
    out += "mean_gestational_age_npo " + ga(s.mean_ga_npo) + "\n";
    out += "mean_gestational_age_apo " + ga(s.mean_ga_apo) + "\n";
    out += "missing_pct " + std::to_string(s.missing_pct) + "\n";
    for (const auto& [tag, count] : s.condition_counts)
        out += "condition_" + tag + " " + std::to_string(count) + "\n";
    return out;
}

}  // namespace ctg
