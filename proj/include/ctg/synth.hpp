#pragma once
// Synthetic CTG corpus generator.
//
// NPO records: baseline ~ N(140, 10) bpm, two sinusoids plus AR(1) noise,
// accelerations at a Poisson rate.  APO records shrink variability and the
// acceleration rate, optionally add decelerations, and shift the baseline;
// per-condition severity weights scale those deviations.  Per-record streams
// are derived from (seed, record index), so generation order is irrelevant.

#include <map>
#include <string>
#include <vector>

#include "ctg/types.hpp"

namespace ctg {

std::vector<CtgRecord> generate_corpus(const SynthConfig& cfg);

// Exposed for tests: generate one record on its derived stream.  `group`,
// `conditions` and `legacy` are decided by generate_corpus.
CtgRecord generate_record(const SynthConfig& cfg, std::uint64_t record_index,
                          int group, const std::vector<std::string>& conditions,
                          bool legacy);

struct CorpusSummary {
    int n_npo = 0;
    int n_apo = 0;
    double mean_ga_npo = 0.0;  // NaN when the group is empty
    double mean_ga_apo = 0.0;
    double missing_pct = 0.0;  // over all samples, in [0, 100]
    std::map<std::string, int> condition_counts;
};

CorpusSummary corpus_summary(const std::vector<CtgRecord>& records);

std::string summary_text(const CorpusSummary& s);

}  // namespace ctg
