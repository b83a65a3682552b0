#pragma once
// File formats: NDJSON corpus, binary segment sets, JSON sidecars, CSV
// reports.  All writes go through a temp-file + rename so partially written
// outputs never appear, and all float formatting uses shortest round-trip
// so identical data always serialises to identical bytes.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ctg/tensor.hpp"
#include "ctg/types.hpp"

namespace ctg {

// Shortest decimal string that round-trips the exact double.
std::string fmt(double x);

void write_text_atomic(const std::string& path, const std::string& content);
std::string read_text(const std::string& path);

// ---- corpus (NDJSON, leading header line) ---------------------------------
void write_corpus(const std::string& path, const std::vector<CtgRecord>& records);
std::vector<CtgRecord> read_corpus(const std::string& path);

// ---- segments (JSON header line + binary blocks) --------------------------
struct SegmentSet {
    std::vector<FhrSegment> segments;
    std::vector<CaseInfo> cases;  // every parent record, segment-bearing or not

    const CaseInfo* find_case(const std::string& ctg_id) const;
};

void write_segments(const std::string& path, const SegmentSet& set);
SegmentSet read_segments(const std::string& path);

// ---- sidecars --------------------------------------------------------------
void write_splits(const std::string& path, const std::map<std::string, Split>& splits);
std::map<std::string, Split> read_splits(const std::string& path);

void write_norm_stats(const std::string& path, const NormStats& stats);
NormStats read_norm_stats(const std::string& path);

// ---- features --------------------------------------------------------------
void write_features_csv(const std::string& path, const std::vector<FeatureRow>& rows);
std::vector<FeatureRow> read_features_csv(const std::string& path);

// ---- resolved-config echo ---------------------------------------------------
void write_resolved_config(const std::string& out_dir,
                           const std::map<std::string, std::string>& resolved);

// ---- model checkpoints -------------------------------------------------------
struct Checkpoint {
    std::map<std::string, std::string> config;    // resolved model config
    NormStats norm;
    std::map<std::string, std::string> training;  // final controller state etc.
    std::vector<std::string> param_names;
    std::vector<ad::Array<double>> params;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ctg
