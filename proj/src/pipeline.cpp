#include "ctg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ctg/config.hpp"
#include "ctg/features.hpp"
#include "ctg/interpret.hpp"
#include "ctg/io.hpp"
#include "ctg/metrics.hpp"
#include "ctg/preprocess.hpp"
#include "ctg/synth.hpp"
#include "ctg/train.hpp"

namespace ctg {

namespace {

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (!std::isspace(static_cast<unsigned char>(c))) {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

// Binds a Config to a RunConfig while recording the resolved echo.
struct Binder {
    const Config& cfg;
    RunConfig& run;

    void note(const std::string& key) {
        if (cfg.has(key)) run.explicit_keys.insert(key);
    }
    void d(const std::string& key, double& field) {
        note(key);
        field = cfg.get_double(key, field);
        run.resolved[key] = fmt(field);
    }
    void i(const std::string& key, int& field) {
        note(key);
        field = cfg.get_int(key, field);
        run.resolved[key] = std::to_string(field);
    }
    void u(const std::string& key, std::uint64_t& field) {
        note(key);
        field = cfg.get_u64(key, field);
        run.resolved[key] = std::to_string(field);
    }
    void s(const std::string& key, std::string& field) {
        note(key);
        field = cfg.get_string(key, field);
        run.resolved[key] = field;
    }
};

std::string segments_path(const std::string& dir) { return dir + "/segments.bin"; }
std::string splits_path(const std::string& dir) { return dir + "/splits.json"; }
std::string norm_path(const std::string& dir) { return dir + "/norm_stats.json"; }

struct DataBundle {
    SegmentSet set;
    std::map<std::string, Split> splits;
    NormStats norm;
};

DataBundle load_data(const std::string& dir) {
    DataBundle d;
    d.set = read_segments(segments_path(dir));
    d.splits = read_splits(splits_path(dir));
    d.norm = read_norm_stats(norm_path(dir));
    return d;
}

std::vector<FhrSegment> split_segments(const SegmentSet& set,
                                       const std::map<std::string, Split>& splits,
                                       Split which) {
    std::vector<FhrSegment> out;
    for (const auto& seg : set.segments) {
        auto it = splits.find(seg.ctg_id);
        if (it != splits.end() && it->second == which) out.push_back(seg);
    }
    return out;
}

// Guard against evaluating/interpreting with a config that contradicts the
// checkpoint: any explicitly-set model key must match the stored value.
void check_config_matches(const RunConfig& run, const Checkpoint& ck) {
    for (const auto& [key, stored] : ck.config) {
        if (!run.explicit_keys.count(key)) continue;
        auto it = run.resolved.find(key);
        if (it != run.resolved.end() && it->second != stored)
            throw std::runtime_error("config mismatch with checkpoint: " + key + " = " +
                                     it->second + " but checkpoint was trained with " +
                                     stored);
    }
}

struct TestEval {
    std::vector<std::string> ids;
    std::vector<double> scores;
    std::vector<int> labels;
    double mse_bpm2 = 0;
    std::vector<SegmentInference> inferences;
};

TestEval eval_test_split(const Model<double>& model, const DataBundle& data, int threads) {
    const auto test_segs = split_segments(data.set, data.splits, Split::TEST);
    if (test_segs.empty()) throw std::runtime_error("no test segments in data directory");
    const auto prepared = prepare_segments<double>(test_segs, data.norm, threads);
    TestEval te;
    te.inferences = infer_all(model, prepared, threads);
    double sum_sqerr = 0;
    long n_valid = 0;
    for (const auto& inf : te.inferences) {
        te.ids.push_back(inf.ctg_id);
        te.scores.push_back(inf.score);
        te.labels.push_back(inf.label);
        sum_sqerr += inf.sqerr;
        n_valid += inf.n_valid;
    }
    if (n_valid == 0) throw std::runtime_error("test split has no VALID samples");
    te.mse_bpm2 = data.norm.sd * data.norm.sd * sum_sqerr / static_cast<double>(n_valid);
    return te;
}

std::vector<CaseInfo> cases_in_split(const SegmentSet& set,
                                     const std::map<std::string, Split>& splits,
                                     Split which) {
    std::vector<CaseInfo> out;
    for (const auto& c : set.cases) {
        auto it = splits.find(c.ctg_id);
        if (it != splits.end() && it->second == which) out.push_back(c);
    }
    return out;
}

std::string sanitize_id(const std::string& id) {
    std::string out;
    for (char c : id) out += (std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
    return out;
}

}  // namespace

RunConfig load_run_config(const std::string& config_path, const Overrides& overrides) {
    Config cfg = config_path.empty() ? Config() : Config::load_file(config_path);
    for (const auto& [k, v] : overrides) cfg.set(k, v);

    RunConfig run;
    Binder b{cfg, run};

    b.u("seed", run.seed);
    b.i("threads", run.threads);

    SynthConfig& sy = run.synth;
    b.i("synth.n_npo", sy.n_npo_records);
    b.i("synth.n_apo", sy.n_apo_records);
    b.d("synth.record_minutes", sy.record_minutes);
    b.d("synth.npo_baseline_mean", sy.npo_baseline_mean);
    b.d("synth.npo_baseline_sd", sy.npo_baseline_sd);
    b.d("synth.apo_baseline_offset_mean", sy.apo_baseline_offset_mean);
    b.d("synth.apo_baseline_offset_sd", sy.apo_baseline_offset_sd);
    b.d("synth.slow_freq_lo", sy.slow_freq_lo);
    b.d("synth.slow_freq_hi", sy.slow_freq_hi);
    b.d("synth.fast_freq_lo", sy.fast_freq_lo);
    b.d("synth.fast_freq_hi", sy.fast_freq_hi);
    b.d("synth.slow_amp_lo", sy.slow_amp_lo);
    b.d("synth.slow_amp_hi", sy.slow_amp_hi);
    b.d("synth.fast_amp_lo", sy.fast_amp_lo);
    b.d("synth.fast_amp_hi", sy.fast_amp_hi);
    b.d("synth.ar_rho", sy.ar_rho);
    b.d("synth.ar_innovation_sd", sy.ar_innovation_sd);
    b.d("synth.accel_rate_lo", sy.accel_rate_lo);
    b.d("synth.accel_rate_hi", sy.accel_rate_hi);
    b.d("synth.accel_amp_lo", sy.accel_amp_lo);
    b.d("synth.accel_amp_hi", sy.accel_amp_hi);
    b.d("synth.accel_dur_lo", sy.accel_dur_lo);
    b.d("synth.accel_dur_hi", sy.accel_dur_hi);
    b.d("synth.apo_variability_lo", sy.apo_variability_lo);
    b.d("synth.apo_variability_hi", sy.apo_variability_hi);
    b.d("synth.apo_accel_factor_lo", sy.apo_accel_factor_lo);
    b.d("synth.apo_accel_factor_hi", sy.apo_accel_factor_hi);
    b.d("synth.apo_decel_prob", sy.apo_decel_prob);
    b.d("synth.decel_rate_lo", sy.decel_rate_lo);
    b.d("synth.decel_rate_hi", sy.decel_rate_hi);
    b.d("synth.decel_amp_lo", sy.decel_amp_lo);
    b.d("synth.decel_amp_hi", sy.decel_amp_hi);
    b.d("synth.decel_dur_lo", sy.decel_dur_lo);
    b.d("synth.decel_dur_hi", sy.decel_dur_hi);
    b.d("synth.missing_burst_rate", sy.missing_burst_rate);
    b.d("synth.missing_dur_lo", sy.missing_dur_lo);
    b.d("synth.missing_dur_hi", sy.missing_dur_hi);
    b.d("synth.spike_rate", sy.spike_rate);
    b.d("synth.legacy_epoch_fraction", sy.legacy_epoch_fraction);
    b.d("synth.co_occur_prob", sy.co_occur_prob);

    for (const auto& [tag, value] : cfg.get_group("synth.condition_mix")) {
        if (!sy.condition_mix.count(tag))
            throw std::invalid_argument("unknown condition tag: synth.condition_mix." + tag);
        sy.condition_mix[tag] = value;
        run.explicit_keys.insert("synth.condition_mix." + tag);
    }
    for (const auto& [tag, value] : cfg.get_group("synth.condition_severity")) {
        if (!sy.condition_severity.count(tag))
            throw std::invalid_argument("unknown condition tag: synth.condition_severity." +
                                        tag);
        sy.condition_severity[tag] = value;
        run.explicit_keys.insert("synth.condition_severity." + tag);
    }
    for (const auto& [tag, v] : sy.condition_mix)
        run.resolved["synth.condition_mix." + tag] = fmt(v);
    for (const auto& [tag, v] : sy.condition_severity)
        run.resolved["synth.condition_severity." + tag] = fmt(v);

    b.d("preprocess.val_fraction", run.val_fraction);
    b.d("preprocess.test_fraction", run.test_fraction);

    ModelConfig& mc = run.model;
    b.i("model.latent_dim", mc.latent_dim);
    b.i("model.d_model", mc.d_model);
    b.i("model.token_patch", mc.token_patch);
    b.d("model.kl_target_per_dim", mc.kl_target_per_dim);
    b.d("model.tc_target", mc.tc_target);
    b.d("model.focal_gamma", mc.focal_gamma);
    b.d("model.learning_rate", mc.learning_rate);
    b.i("model.batch_size", mc.batch_size);
    b.i("model.max_epochs", mc.max_epochs);
    b.i("model.patience", mc.patience);
    b.i("model.min_epochs", mc.min_epochs);
    b.d("model.beta_init", mc.beta_init);
    b.d("model.lambda_init", mc.lambda_init);
    b.d("model.ctrl_gain", mc.ctrl_gain);
    b.d("model.beta_min", mc.beta_min);
    b.d("model.beta_max", mc.beta_max);
    b.d("model.lambda_min", mc.lambda_min);
    b.d("model.lambda_max", mc.lambda_max);

    b.i("eval.bootstrap_b", run.bootstrap_b);
    b.i("interpret.components", run.components);
    b.i("interpret.traverse_steps", run.traverse_steps);

    std::string targets, seeds;
    for (std::size_t i = 0; i < run.sweep_targets.size(); ++i)
        targets += (i ? "," : "") + fmt(run.sweep_targets[i]);
    for (std::size_t i = 0; i < run.sweep_seeds.size(); ++i)
        seeds += (i ? "," : "") + std::to_string(run.sweep_seeds[i]);
    b.s("sweep.tc_targets", targets);
    b.s("sweep.seeds", seeds);
    run.sweep_targets.clear();
    for (const auto& tok : split_list(targets)) {
        if (tok.empty()) throw std::invalid_argument("sweep.tc_targets: empty entry");
        run.sweep_targets.push_back(std::stod(tok));
    }
    run.sweep_seeds.clear();
    for (const auto& tok : split_list(seeds)) {
        if (tok.empty()) throw std::invalid_argument("sweep.seeds: empty entry");
        run.sweep_seeds.push_back(std::stoull(tok));
    }

    cfg.reject_unknown();

    run.synth.seed = run.seed;
    run.model.seed = run.seed;
    run.model.threads = run.threads;
    run.resolved["seed"] = std::to_string(run.seed);
    run.resolved["threads"] = std::to_string(run.threads);

    run.synth.validate();
    run.model.validate();
    if (run.val_fraction <= 0 || run.test_fraction <= 0 ||
        run.val_fraction + run.test_fraction >= 1.0)
        throw std::invalid_argument("preprocess fractions must be positive and sum below 1");
    if (run.bootstrap_b < 2) throw std::invalid_argument("eval.bootstrap_b must be >= 2");
    if (run.components < 1) throw std::invalid_argument("interpret.components must be >= 1");
    if (run.traverse_steps < 1)
        throw std::invalid_argument("interpret.traverse_steps must be >= 1");
    if (run.sweep_targets.empty() || run.sweep_seeds.empty())
        throw std::invalid_argument("sweep lists must be nonempty");
    return run;
}

void cmd_synth(const RunConfig& run, const std::string& out_dir) {
    const auto records = generate_corpus(run.synth);
    write_corpus(out_dir + "/corpus.ndjson", records);
    write_text_atomic(out_dir + "/corpus_summary.txt", summary_text(corpus_summary(records)));
    write_resolved_config(out_dir, run.resolved);
}

void cmd_preprocess(const RunConfig& run, const std::string& corpus_path,
                    const std::string& out_dir) {
    const auto records = read_corpus(corpus_path);
    SegmentSet set = preprocess_corpus(records);
    if (set.segments.empty()) throw std::runtime_error("preprocess produced no segments");
    const auto splits = split_by_ctg(set, run.val_fraction, run.test_fraction, run.seed);
    const auto train_segs = split_segments(set, splits, Split::TRAIN);
    const NormStats norm = fit_norm_stats(train_segs);

    write_segments(segments_path(out_dir), set);
    write_splits(splits_path(out_dir), splits);
    write_norm_stats(norm_path(out_dir), norm);

    int n_train = 0, n_val = 0, n_test = 0;
    for (const auto& seg : set.segments) {
        switch (splits.at(seg.ctg_id)) {
            case Split::TRAIN: ++n_train; break;
            case Split::VAL: ++n_val; break;
            case Split::TEST: ++n_test; break;
        }
    }
    std::string summary;
    summary += "records: " + std::to_string(records.size()) + "\n";
    summary += "segments: " + std::to_string(set.segments.size()) + "\n";
    summary += "train_segments: " + std::to_string(n_train) + "\n";
    summary += "val_segments: " + std::to_string(n_val) + "\n";
    summary += "test_segments: " + std::to_string(n_test) + "\n";
    summary += "norm_mean = " + fmt(norm.mean) + "\n";
    summary += "norm_sd = " + fmt(norm.sd) + "\n";
    write_text_atomic(out_dir + "/preprocess_summary.txt", summary);
    write_resolved_config(out_dir, run.resolved);
}

void cmd_features(const RunConfig& run, const std::string& data_dir,
                  const std::string& out_dir) {
    const SegmentSet set = read_segments(segments_path(data_dir));
    const auto rows = compute_feature_rows(set.segments);
    write_features_csv(out_dir + "/features.csv", rows);
    write_resolved_config(out_dir, run.resolved);
}

void cmd_train(const RunConfig& run, const std::string& data_dir,
               const std::string& out_dir) {
    const DataBundle data = load_data(data_dir);
    const TrainOutput to = train_model<float>(run.model, data.set.segments, data.splits,
                                              data.norm);
    save_checkpoint(out_dir + "/checkpoint.bin", to.checkpoint);
    write_text_atomic(out_dir + "/history.csv", history_csv(to.history));
    std::string summary;
    for (const auto& [k, v] : to.checkpoint.training) summary += k + " = " + v + "\n";
    write_text_atomic(out_dir + "/training_summary.txt", summary);
    write_resolved_config(out_dir, run.resolved);
}

void cmd_eval(const RunConfig& run, const std::string& checkpoint_path,
              const std::string& data_dir, const std::string& out_dir,
              const std::string& corpus_path, const std::string& trace_ctg) {
    const Checkpoint ck = load_checkpoint(checkpoint_path);
    check_config_matches(run, ck);
    const Model<double> model = model_from_checkpoint<double>(ck);
    const DataBundle data = load_data(data_dir);
    const int threads = run.model.resolved_threads();

    const TestEval te = eval_test_split(model, data, threads);
    const auto test_cases = cases_in_split(data.set, data.splits, Split::TEST);
    const MetricsReport report = compute_metrics(te.ids, te.scores, te.labels, te.mse_bpm2,
                                                 test_cases, run.bootstrap_b, run.seed);

    write_text_atomic(out_dir + "/metrics.txt", metrics_text(report));
    write_text_atomic(out_dir + "/roc_segment.csv", roc_csv(te.scores, te.labels));
    write_text_atomic(out_dir + "/hist_segment.csv", hist_csv(te.scores, te.labels));
    write_text_atomic(out_dir + "/calibration_segment.csv",
                      calibration_csv(te.scores, te.labels));
    std::vector<double> cs;
    std::vector<int> cl;
    for (const auto& c : report.case_scores) {
        cs.push_back(c.median);
        cl.push_back(c.label);
    }
    write_text_atomic(out_dir + "/roc_case.csv", roc_csv(cs, cl));
    write_text_atomic(out_dir + "/hist_case.csv", hist_csv(cs, cl));
    write_text_atomic(out_dir + "/per_condition.csv", per_condition_csv(report));
    write_text_atomic(out_dir + "/case_scores.csv", case_scores_csv(report));

    if (!trace_ctg.empty()) {
        if (corpus_path.empty())
            throw std::invalid_argument("trace output requires the corpus file");
        const auto records = read_corpus(corpus_path);
        const CtgRecord* rec = nullptr;
        for (const auto& r : records)
            if (r.ctg_id == trace_ctg) rec = &r;
        if (!rec) throw std::invalid_argument("trace ctg_id not found: " + trace_ctg);

        const CtgRecord clean = clean_record(*rec);
        const auto segs = segment_record(clean);
        const auto prepared = prepare_segments<double>(segs, data.norm, threads);
        const auto inf = infer_all(model, prepared, threads, /*keep_recon=*/true);

        std::vector<SegmentSpan> spans;
        for (std::size_t i = 0; i < segs.size(); ++i) {
            int non_pad = kSegmentLen;
            while (non_pad > 0 && segs[i].mask[non_pad - 1] == Mask::PAD) --non_pad;
            SegmentSpan sp;
            sp.t0 = segs[i].start_offset;
            sp.t1 = segs[i].start_offset + non_pad / kSampleRate;
            sp.score = inf[i].score;
            spans.push_back(sp);
        }
        const double duration = static_cast<double>(clean.fhr.size()) / kSampleRate;
        const auto intervals = interval_scores(spans, duration);
        const std::string tag = sanitize_id(trace_ctg);
        write_text_atomic(out_dir + "/trace_scores_" + tag + ".csv",
                          trace_scores_csv(intervals));

        // reconstruction overlay: average the decoded segments at each sample
        std::vector<double> recon_sum(clean.fhr.size(), 0.0);
        std::vector<int> recon_n(clean.fhr.size(), 0);
        for (std::size_t i = 0; i < segs.size(); ++i) {
            const int base = static_cast<int>(segs[i].start_offset * kSampleRate);
            for (int j = 0; j < kSegmentLen; ++j) {
                if (segs[i].mask[j] == Mask::PAD) continue;
                const std::size_t pos = static_cast<std::size_t>(base + j);
                if (pos >= clean.fhr.size()) continue;
                recon_sum[pos] += unstandardize(inf[i].recon_std[j], data.norm);
                recon_n[pos] += 1;
            }
        }
        std::string sig = "time_s,fhr,recon\n";
        for (std::size_t p = 0; p < clean.fhr.size(); ++p) {
            sig += fmt(static_cast<double>(p) / kSampleRate) + ",";
            if (!is_missing(clean.fhr[p])) sig += fmt(clean.fhr[p]);
            sig += ",";
            if (recon_n[p]) sig += fmt(recon_sum[p] / recon_n[p]);
            sig += "\n";
        }
        write_text_atomic(out_dir + "/trace_signal_" + tag + ".csv", sig);
    }
    write_resolved_config(out_dir, run.resolved);
}

void cmd_tc_sweep(const RunConfig& run, const std::string& data_dir,
                  const std::string& out_dir) {
    const DataBundle data = load_data(data_dir);
    const int threads = run.model.resolved_threads();

    struct Row {
        double target = 0;
        std::uint64_t seed = 0;
        int epochs = 0, best_epoch = 0;
        double final_beta = 0, final_lambda = 0, final_kl = 0, final_tc = 0;
        double mse = 0, seg_auroc = 0, case_auroc = 0, ece_v = 0;
    };
    std::vector<Row> rows;

    for (double target : run.sweep_targets) {
        for (std::uint64_t seed : run.sweep_seeds) {
            ModelConfig mc = run.model;
            mc.tc_target = target;
            mc.seed = seed;
            const TrainOutput to = train_model<float>(mc, data.set.segments, data.splits,
                                                      data.norm);
            const Model<double> model = model_from_checkpoint<double>(to.checkpoint);
            const TestEval te = eval_test_split(model, data, threads);
            const auto case_scores =
                aggregate_case(te.ids, te.scores,
                               cases_in_split(data.set, data.splits, Split::TEST));
            std::vector<double> cs;
            std::vector<int> cl;
            for (const auto& c : case_scores) {
                cs.push_back(c.median);
                cl.push_back(c.label);
            }

            Row r;
            r.target = target;
            r.seed = seed;
            r.epochs = static_cast<int>(to.history.size());
            r.best_epoch = to.best_epoch;
            r.final_beta = std::stod(to.checkpoint.training.at("final_beta"));
            r.final_lambda = std::stod(to.checkpoint.training.at("final_lambda"));
            r.final_kl = std::stod(to.checkpoint.training.at("final_train_kl_per_dim"));
            r.final_tc = std::stod(to.checkpoint.training.at("final_train_tc"));
            r.mse = te.mse_bpm2;
            r.seg_auroc = auroc(te.scores, te.labels);
            r.case_auroc = auroc(cs, cl);
            r.ece_v = ece(te.scores, te.labels);
            rows.push_back(r);

            const std::string sub = out_dir + "/run_t" + fmt(target) + "_s" +
                                    std::to_string(seed);
            write_text_atomic(sub + "/history.csv", history_csv(to.history));
        }
    }

    std::string csv =
        "tc_target,seed,epochs,best_epoch,final_beta,final_lambda,final_kl_per_dim,"
        "final_tc,test_mse_bpm2,segment_auroc,case_auroc,ece\n";
    for (const auto& r : rows)
        csv += fmt(r.target) + "," + std::to_string(r.seed) + "," + std::to_string(r.epochs) +
               "," + std::to_string(r.best_epoch) + "," + fmt(r.final_beta) + "," +
               fmt(r.final_lambda) + "," + fmt(r.final_kl) + "," + fmt(r.final_tc) + "," +
               fmt(r.mse) + "," + fmt(r.seg_auroc) + "," + fmt(r.case_auroc) + "," +
               fmt(r.ece_v) + "\n";
    write_text_atomic(out_dir + "/tc_sweep.csv", csv);

    // per-target mean +- sample SD over seeds
    auto mean_sd = [](const std::vector<double>& v) {
        const double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
        double s = 0;
        for (double x : v) s += (x - m) * (x - m);
        return std::pair<double, double>(
            m, v.size() > 1 ? std::sqrt(s / (static_cast<double>(v.size()) - 1.0)) : 0.0);
    };
    std::string summary =
        "tc_target,n_runs,final_tc_mean,final_tc_sd,mse_mean,mse_sd,segment_auroc_mean,"
        "segment_auroc_sd,case_auroc_mean,case_auroc_sd,ece_mean,ece_sd\n";
    for (double target : run.sweep_targets) {
        std::vector<double> tcs, mses, segs, cases_v, eces;
        for (const auto& r : rows)
            if (r.target == target) {
                tcs.push_back(r.final_tc);
                mses.push_back(r.mse);
                segs.push_back(r.seg_auroc);
                cases_v.push_back(r.case_auroc);
                eces.push_back(r.ece_v);
            }
        const auto [tcm, tcsd] = mean_sd(tcs);
        const auto [mm, msd] = mean_sd(mses);
        const auto [sm, ssd] = mean_sd(segs);
        const auto [cm, csd] = mean_sd(cases_v);
        const auto [em, esd] = mean_sd(eces);
        summary += fmt(target) + "," + std::to_string(tcs.size()) + "," + fmt(tcm) + "," +
                   fmt(tcsd) + "," + fmt(mm) + "," + fmt(msd) + "," + fmt(sm) + "," +
                   fmt(ssd) + "," + fmt(cm) + "," + fmt(csd) + "," + fmt(em) + "," +
                   fmt(esd) + "\n";
    }
    write_text_atomic(out_dir + "/tc_sweep_summary.csv", summary);
    write_resolved_config(out_dir, run.resolved);
}

void cmd_interpret(const RunConfig& run, const std::string& checkpoint_path,
                   const std::string& data_dir, const std::string& out_dir) {
    const Checkpoint ck = load_checkpoint(checkpoint_path);
    check_config_matches(run, ck);
    const Model<double> model = model_from_checkpoint<double>(ck);
    const DataBundle data = load_data(data_dir);
    const int threads = run.model.resolved_threads();

    const TestEval te = eval_test_split(model, data, threads);
    std::vector<std::vector<double>> mu;
    std::vector<double> offsets;
    for (const auto& inf : te.inferences) {
        mu.push_back(inf.mu);
        offsets.push_back(inf.start_offset);
    }
    const LatentMatrix X = make_latent_matrix(te.ids, offsets, te.labels, mu);
    write_text_atomic(out_dir + "/latents.csv", latents_csv(X));

    const auto test_segs = split_segments(data.set, data.splits, Split::TEST);
    const auto features = compute_feature_rows(test_segs);
    const R2Panel panel = r2_panel(X, features, te.scores, te.labels);
    write_text_atomic(out_dir + "/r2_panel.csv", r2_panel_csv(panel));

    const auto decode = [&](const std::vector<double>& z) {
        return decode_latent(model, z);
    };

    // PLS per feature (aligned on the joined rows), with direction traversals.
    std::map<std::pair<std::string, double>, const FeatureRow*> feat_index;
    for (const auto& f : features) feat_index[{f.ctg_id, f.start_offset}] = &f;
    std::vector<std::vector<double>> mu_sub;
    std::vector<std::string> ids_sub;
    std::vector<double> off_sub;
    std::vector<int> lab_sub;
    std::vector<const FeatureRow*> rows_sub;
    for (int r = 0; r < X.rows; ++r) {
        auto it = feat_index.find({X.ctg_ids[r], X.start_offsets[r]});
        if (it == feat_index.end()) continue;
        std::vector<double> row(X.cols);
        for (int c = 0; c < X.cols; ++c) row[c] = X.at(r, c);
        mu_sub.push_back(std::move(row));
        ids_sub.push_back(X.ctg_ids[r]);
        off_sub.push_back(X.start_offsets[r]);
        lab_sub.push_back(X.labels[r]);
        rows_sub.push_back(it->second);
    }
    if (mu_sub.size() < 2) throw std::runtime_error("interpret: too few segments with features");
    const LatentMatrix Xs = make_latent_matrix(ids_sub, off_sub, lab_sub, mu_sub);

    std::vector<Direction> dirs;
    const auto& names = feature_names();
    for (std::size_t f = 0; f < names.size(); ++f) {
        std::vector<double> y;
        for (const FeatureRow* fr : rows_sub) y.push_back(fr->values[f]);
        try {
            Direction d = pls_direction(Xs, y, names[f]);
            const TraversalFamily fam =
                traverse_direction(decode, Xs, d, run.traverse_steps, 10.0);
            write_text_atomic(out_dir + "/traversal_" + names[f] + ".csv",
                              traversal_csv(fam));
            dirs.push_back(std::move(d));
        } catch (const std::exception&) {
            // degenerate feature on this split; no direction emitted
        }
    }
    write_text_atomic(out_dir + "/pls_directions.csv", directions_csv(dirs));

    // top-variance dimension traversals
    std::vector<int> dim_order(X.cols);
    for (int i = 0; i < X.cols; ++i) dim_order[i] = i;
    std::sort(dim_order.begin(), dim_order.end(),
              [&](int a, int b) { return X.col_sd[a] > X.col_sd[b]; });
    for (int k = 0; k < std::min(run.components, X.cols); ++k) {
        const int dim = dim_order[k];
        const TraversalFamily fam =
            traverse_dimension(decode, X, dim, run.traverse_steps, 5.0);
        write_text_atomic(out_dir + "/traversal_dim_" + std::to_string(dim) + ".csv",
                          traversal_csv(fam));
    }

    const PcaResult p = pca(X);
    write_text_atomic(out_dir + "/pca_components.csv", pca_csv(p));
    for (int k = 0; k < std::min(run.components, p.dims); ++k) {
        Direction d;
        d.feature = "pca_" + std::to_string(k);
        d.v.assign(p.components.begin() + static_cast<std::ptrdiff_t>(k) * p.dims,
                   p.components.begin() + static_cast<std::ptrdiff_t>(k + 1) * p.dims);
        d.projection_sd = std::sqrt(p.variances[k]);
        const TraversalFamily fam = traverse_direction(decode, X, d, run.traverse_steps, 5.0);
        write_text_atomic(out_dir + "/pca_signal_" + std::to_string(k) + ".csv",
                          traversal_csv(fam));
    }

    const IcaResult ic = ica(X, run.components, run.seed);
    write_text_atomic(out_dir + "/ica_components.csv", ica_csv(ic));
    for (int k = 0; k < ic.n_components; ++k) {
        Direction d;
        d.feature = "ica_" + std::to_string(k);
        d.v = ic.components[k].mixing;
        d.projection_sd = projection_sd(X, d.v);
        const TraversalFamily fam = traverse_direction(decode, X, d, run.traverse_steps, 5.0);
        write_text_atomic(out_dir + "/ica_signal_" + std::to_string(k) + ".csv",
                          traversal_csv(fam));
    }
    write_resolved_config(out_dir, run.resolved);
}

}  // namespace ctg
