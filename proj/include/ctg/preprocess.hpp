#pragma once
// Raw records -> model-ready segments: resampling, denoising, windowing,
// normalisation, FFT inputs, and record-level splits.

#include <cstdint>
#include <map>
#include <vector>

#include "ctg/io.hpp"
#include "ctg/types.hpp"

namespace ctg {

// Upsample a 3.75 s/sample epoch series to 4 Hz: 15x linear interpolation
// followed by a 5-point moving average.  NaN epochs propagate.
std::vector<double> resample_epoch(const std::vector<double>& epochs);

// Band rule then spike rule: values outside [50, 210] become missing;
// single-sample excursions with |delta| > 25 on both flanks are replaced by
// the mean of their neighbours.
std::vector<double> denoise(std::vector<double> series);

// Windows of 1200 samples at stride 600; trailing windows of 900..1199
// samples are PAD-suffixed; windows with > 300 missing or flat-line valid
// content are dropped.  The record must already be at 4 Hz.
std::vector<FhrSegment> segment_record(const CtgRecord& record);

// resample (if legacy) + denoise + segment for every record; cases carry
// labels and condition tags for downstream aggregation.
// Bring a record to the working rate and denoise it (no segmentation).
CtgRecord clean_record(const CtgRecord& rec);

SegmentSet preprocess_corpus(const std::vector<CtgRecord>& records);

// Mean/SD over VALID samples only, population convention.
NormStats fit_norm_stats(const std::vector<FhrSegment>& train_segments);

// VALID positions -> (v - mean)/sd; MISSING/PAD positions are zeroed (their
// mask entry is what downstream consumers must respect).
std::vector<double> standardize(const FhrSegment& seg, const NormStats& stats);

inline double unstandardize(double v, const NormStats& s) { return v * s.sd + s.mean; }

// Magnitude of the 1200-point real DFT (bins 0..600) of the mean-filled
// signal, divided by its own maximum.
std::vector<double> fft_input(const FhrSegment& seg);
constexpr int kFftBins = 601;

// Group segments by parent record, stratify by label, and deal whole records
// into train/val/test.
std::map<std::string, Split> split_by_ctg(const SegmentSet& set, double val_frac,
                                          double test_frac, std::uint64_t seed);

}  // namespace ctg
