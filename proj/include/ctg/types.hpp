#pragma once
// Core domain types shared across the pipeline.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctg {

// Mask codes used in segment files and model inputs.
enum class Mask : std::uint8_t { VALID = 0, MISSING = 1, PAD = 2 };

constexpr int kSegmentLen = 1200;      // 5 min at 4 Hz
constexpr int kSegmentStride = 600;    // 50% overlap
constexpr int kMinTailLen = 900;       // shortest padded trailing window
constexpr double kSampleRate = 4.0;    // Hz, working rate
constexpr double kEpochSeconds = 3.75; // legacy epoch length
constexpr double kBpmLo = 30.0;        // physiological plausibility band for
constexpr double kBpmHi = 240.0;       // stored samples
constexpr double kBandLo = 50.0;       // denoising acceptance band
constexpr double kBandHi = 210.0;

// The eleven adverse-outcome condition tags.
inline const std::vector<std::string>& condition_tags() {
    static const std::vector<std::string> tags = {
        "iugr",          "acidaemia",           "low_apgars",
        "stillbirth",    "early_death",         "asphyxia",
        "hie",           "neonatal_sepsis",     "perinatal_infection",
        "respiratory",   "neonatal_care",
    };
    return tags;
}

struct CtgRecord {
    std::string ctg_id;
    int group = 0;                        // 0 = NPO, 1 = APO
    std::vector<std::string> conditions;  // empty for NPO
    double gestational_age = 0.0;         // weeks
    double sample_rate = 0.0;             // 4.0 or 1/3.75
    std::vector<double> fhr;              // NaN marks a missing sample
};

inline bool is_missing(double x) { return std::isnan(x); }
inline double missing_value() { return std::nan(""); }

struct FhrSegment {
    std::string ctg_id;
    double start_offset = 0.0;  // seconds from record start
    int label = 0;              // 0 = NPO, 1 = APO
    std::vector<double> values; // length kSegmentLen, raw bpm (0 where not VALID)
    std::vector<Mask> mask;     // length kSegmentLen

    int count(Mask m) const {
        int n = 0;
        for (Mask v : mask) n += (v == m);
        return n;
    }
};

// Case metadata carried alongside segments so downstream stages don't need
// the corpus file.
struct CaseInfo {
    std::string ctg_id;
    int label = 0;
    std::vector<std::string> conditions;
};

struct NormStats {
    double mean = 0.0;
    double sd = 1.0;
};

enum class Split { TRAIN = 0, VAL = 1, TEST = 2 };

inline std::string split_name(Split s) {
    switch (s) {
        case Split::TRAIN: return "train";
        case Split::VAL: return "val";
        default: return "test";
    }
}

// ---------------------------------------------------------------------------
// Synthetic generator configuration.  Rates are per hour unless noted.
// ---------------------------------------------------------------------------
struct SynthConfig {
    int n_npo_records = 267;
    int n_apo_records = 133;
    double record_minutes = 30.0;
    double sample_rate = 4.0;  // generation always happens at 4 Hz
    std::uint64_t seed = 1;

    // Baseline level: NPO ~ N(mean, sd); APO adds a (severity-scaled) offset.
    double npo_baseline_mean = 140.0;
    double npo_baseline_sd = 10.0;
    double apo_baseline_offset_mean = -5.0;
    double apo_baseline_offset_sd = 6.0;

    // Within-record variability: two sinusoids plus AR(1) noise.
    double slow_freq_lo = 0.02, slow_freq_hi = 0.05;   // Hz
    double fast_freq_lo = 0.10, fast_freq_hi = 0.25;   // Hz
    double slow_amp_lo = 4.0, slow_amp_hi = 8.0;       // bpm
    double fast_amp_lo = 1.5, fast_amp_hi = 4.0;       // bpm
    double ar_rho = 0.95;
    double ar_innovation_sd = 1.0;

    // Accelerations (raised-cosine bumps).
    double accel_rate_lo = 15.0, accel_rate_hi = 25.0;  // per hour, NPO
    double accel_amp_lo = 15.0, accel_amp_hi = 25.0;    // bpm
    double accel_dur_lo = 20.0, accel_dur_hi = 60.0;    // seconds

    // APO modulation.
    double apo_variability_lo = 0.2, apo_variability_hi = 0.6;
    double apo_accel_factor_lo = 0.15, apo_accel_factor_hi = 0.45;
    double apo_decel_prob = 0.5;
    double decel_rate_lo = 2.0, decel_rate_hi = 6.0;    // per hour
    double decel_amp_lo = 15.0, decel_amp_hi = 35.0;    // bpm
    double decel_dur_lo = 30.0, decel_dur_hi = 90.0;    // seconds

    // Artifacts.
    double missing_burst_rate = 0.5;  // expected bursts per 10 min
    double missing_dur_lo = 5.0, missing_dur_hi = 60.0;  // seconds
    double spike_rate = 1.0;          // out-of-band single samples per 10 min

    double legacy_epoch_fraction = 0.2;  // records stored at 3.75 s epochs

    // Condition tagging for APO records.
    std::map<std::string, double> condition_mix;       // sums to 1
    std::map<std::string, double> condition_severity;  // default 1.0 each
    double co_occur_prob = 0.2;  // chance of a second tag

    SynthConfig() {
        const auto& tags = condition_tags();
        for (const auto& t : tags) {
            condition_mix[t] = 1.0 / static_cast<double>(tags.size());
            condition_severity[t] = 1.0;
        }
    }

    void validate() const {
        if (n_npo_records < 0 || n_apo_records < 0)
            throw std::invalid_argument("synth: record counts must be >= 0");
        if (record_minutes < 5.0)
            throw std::invalid_argument("synth: record_minutes must be >= 5");
        if (legacy_epoch_fraction < 0.0 || legacy_epoch_fraction > 1.0)
            throw std::invalid_argument("synth: legacy_epoch_fraction outside [0,1]");
        if (missing_burst_rate < 0.0 || spike_rate < 0.0)
            throw std::invalid_argument("synth: artifact rates must be >= 0");
        double mix_sum = 0.0;
        for (const auto& [tag, p] : condition_mix) {
            if (p < 0.0 || p > 1.0)
                throw std::invalid_argument("synth: condition_mix probability outside [0,1] for " + tag);
            mix_sum += p;
        }
        if (std::abs(mix_sum - 1.0) > 1e-9)
            throw std::invalid_argument("synth: condition_mix must sum to 1");
        if (co_occur_prob < 0.0 || co_occur_prob > 1.0)
            throw std::invalid_argument("synth: co_occur_prob outside [0,1]");
    }
};

// The nine engineered features, in canonical column order.
inline const std::array<std::string, 9>& feature_names() {
    static const std::array<std::string, 9> names = {
        "baseline",     "baseline_shift", "baseline_anomaly",
        "stv",          "ltv",            "sd",
        "range",        "accel_count",    "decel_count",
    };
    return names;
}

struct FeatureRow {
    std::string ctg_id;
    double start_offset = 0.0;
    int label = 0;
    std::array<double, 9> values{};  // in feature_names() order
};

}  // namespace ctg
