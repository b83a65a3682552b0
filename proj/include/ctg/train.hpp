#pragma once
// Training loop, checkpoint conversion, and forward-only inference.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ctg/model.hpp"

namespace ctg {

struct EpochStats {
    int epoch = 0;  // 1-based
    double train_total = 0, train_mse = 0, train_focal = 0, train_kl = 0, train_tc = 0;
    double val_total = 0, val_mse = 0, val_focal = 0, val_kl = 0, val_tc = 0;
    double beta = 0, lambda = 0;  // coefficients used during this epoch
};

struct TrainOutput {
    Checkpoint checkpoint;
    std::vector<EpochStats> history;
    int best_epoch = 0;
    double best_val_loss = 0;
};

// ---------------------------------------------------------------------------
// ModelConfig <-> string map (checkpoint echo / resolved-config echo)
// ---------------------------------------------------------------------------
inline std::map<std::string, std::string> model_config_to_map(const ModelConfig& c) {
    std::map<std::string, std::string> m;
    m["model.latent_dim"] = std::to_string(c.latent_dim);
    m["model.d_model"] = std::to_string(c.d_model);
    m["model.token_patch"] = std::to_string(c.token_patch);
    m["model.kl_target_per_dim"] = fmt(c.kl_target_per_dim);
    m["model.tc_target"] = fmt(c.tc_target);
    m["model.focal_gamma"] = fmt(c.focal_gamma);
    m["model.learning_rate"] = fmt(c.learning_rate);
    m["model.batch_size"] = std::to_string(c.batch_size);
    m["model.seed"] = std::to_string(c.seed);
    m["model.max_epochs"] = std::to_string(c.max_epochs);
    m["model.patience"] = std::to_string(c.patience);
    m["model.min_epochs"] = std::to_string(c.min_epochs);
    m["model.beta_init"] = fmt(c.beta_init);
    m["model.lambda_init"] = fmt(c.lambda_init);
    m["model.ctrl_gain"] = fmt(c.ctrl_gain);
    m["model.beta_min"] = fmt(c.beta_min);
    m["model.beta_max"] = fmt(c.beta_max);
    m["model.lambda_min"] = fmt(c.lambda_min);
    m["model.lambda_max"] = fmt(c.lambda_max);
    return m;
}

inline ModelConfig model_config_from_map(const std::map<std::string, std::string>& m) {
    ModelConfig c;
    auto get = [&](const char* k) -> const std::string& {
        auto it = m.find(k);
        if (it == m.end()) throw std::runtime_error(std::string("checkpoint config missing ") + k);
        return it->second;
    };
    c.latent_dim = std::stoi(get("model.latent_dim"));
    c.d_model = std::stoi(get("model.d_model"));
    c.token_patch = std::stoi(get("model.token_patch"));
    c.kl_target_per_dim = std::stod(get("model.kl_target_per_dim"));
    c.tc_target = std::stod(get("model.tc_target"));
    c.focal_gamma = std::stod(get("model.focal_gamma"));
    c.learning_rate = std::stod(get("model.learning_rate"));
    c.batch_size = std::stoi(get("model.batch_size"));
    c.seed = std::stoull(get("model.seed"));
    c.max_epochs = std::stoi(get("model.max_epochs"));
    c.patience = std::stoi(get("model.patience"));
    c.min_epochs = std::stoi(get("model.min_epochs"));
    c.beta_init = std::stod(get("model.beta_init"));
    c.lambda_init = std::stod(get("model.lambda_init"));
    c.ctrl_gain = std::stod(get("model.ctrl_gain"));
    c.beta_min = std::stod(get("model.beta_min"));
    c.beta_max = std::stod(get("model.beta_max"));
    c.lambda_min = std::stod(get("model.lambda_min"));
    c.lambda_max = std::stod(get("model.lambda_max"));
    return c;
}

template <class S>
Checkpoint make_checkpoint(const Model<S>& model,
                           const std::map<std::string, std::string>& training_meta) {
    Checkpoint ck;
    ck.config = model_config_to_map(model.cfg);
    ck.norm = model.norm;
    ck.training = training_meta;
    ck.param_names = model.params.names;
    for (const auto& a : model.params.values) {
        ad::Array<double> d(a.rows, a.cols);
        for (std::size_t i = 0; i < a.size(); ++i) d.data[i] = static_cast<double>(a.data[i]);
        ck.params.push_back(std::move(d));
    }
    return ck;
}

template <class S>
Model<S> model_from_checkpoint(const Checkpoint& ck) {
    Model<S> model(model_config_from_map(ck.config), ck.norm);
    if (ck.param_names != model.params.names)
        throw std::runtime_error("checkpoint parameter list does not match architecture");
    for (std::size_t p = 0; p < ck.params.size(); ++p) {
        ad::Array<S>& dst = model.params.values[p];
        const ad::Array<double>& src = ck.params[p];
        if (src.rows != dst.rows || src.cols != dst.cols)
            throw std::runtime_error("checkpoint parameter shape mismatch: " +
                                     ck.param_names[p]);
        for (std::size_t i = 0; i < src.size(); ++i) dst.data[i] = static_cast<S>(src.data[i]);
    }
    return model;
}

// ---------------------------------------------------------------------------
// batch processing
// ---------------------------------------------------------------------------
template <class S>
struct BatchOutcome {
    double sum_sqerr = 0, sum_focal = 0, sum_kl = 0;
    long n_valid = 0;
    double tc = 0;
    bool has_tc = false;
    int m = 0;
};

// Runs forward (and optionally backward) for one batch.  `noise_for` returns
// the reparameterisation noise for a slot; empty array = inference mode.
// Gradients accumulate into `grads` in slot order, so results are identical
// for any thread count.
template <class S, class NoiseFn>
BatchOutcome<S> process_batch(const Model<S>& model,
                              const std::vector<const PreparedSegment<S>*>& batch,
                              NoiseFn&& noise_for, double beta, double lambda,
                              std::size_t dataset_n, bool do_backward,
                              std::vector<ad::Array<S>>* grads, int threads) {
    const int M = static_cast<int>(batch.size());
    const int D = model.cfg.latent_dim;
    const std::size_t P = model.params.values.size();

    std::vector<ad::Tape<S>> tapes(M);
    std::vector<ForwardIds> fwd(M);
    parallel_for(M, threads, [&](int s) {
        auto leaves = model.make_leaves(tapes[s], do_backward);
        fwd[s] = model.forward_segment(tapes[s], *batch[s], leaves, noise_for(s));
    });

    BatchOutcome<S> out;
    out.m = M;
    for (int s = 0; s < M; ++s) {
        out.sum_sqerr += static_cast<double>(tapes[s].val(fwd[s].sqerr).item());
        out.sum_focal += static_cast<double>(tapes[s].val(fwd[s].focal).item());
        out.sum_kl += static_cast<double>(tapes[s].val(fwd[s].kl).item());
        out.n_valid += batch[s]->n_valid;
    }

    // Batch-level TC on its own small tape.
    ad::Tape<S> tc_tape;
    ad::Array<S> Zv(M, D), MUv(M, D), LVv(M, D);
    for (int s = 0; s < M; ++s)
        for (int d = 0; d < D; ++d) {
            Zv.at(s, d) = tapes[s].val(fwd[s].z).data[d];
            MUv.at(s, d) = tapes[s].val(fwd[s].mu).data[d];
            LVv.at(s, d) = tapes[s].val(fwd[s].logvar).data[d];
        }
    int tcZ = -1, tcMU = -1, tcLV = -1, tc_node = -1;
    if (M >= 2) {
        tcZ = tc_tape.leaf(std::move(Zv), do_backward);
        tcMU = tc_tape.leaf(std::move(MUv), do_backward);
        tcLV = tc_tape.leaf(std::move(LVv), do_backward);
        tc_node = build_tc_node(tc_tape, tcZ, tcMU, tcLV, dataset_n);
        out.tc = static_cast<double>(tc_tape.val(tc_node).item());
        out.has_tc = true;
    }

    if (!do_backward) return out;
    if (out.n_valid == 0)
        throw std::runtime_error("total_loss: batch has no VALID positions");

    const bool tc_grads = out.has_tc && lambda != 0.0;
    const ad::Array<S>*gZ = nullptr, *gMU = nullptr, *gLV = nullptr;
    if (tc_grads) {
        tc_tape.backward(tc_node);
        gZ = &tc_tape.grad(tcZ);  // materialize before the parallel section
        gMU = &tc_tape.grad(tcMU);
        gLV = &tc_tape.grad(tcLV);
    }

    // Injected seeds realise d(total)/d(component) analytically:
    //   MSE  = sd^2 * sum(sqerr) / sum(n_valid)
    //   focal, KL averaged over the batch; TC grads come from the batch tape.
    const S w_sqerr = static_cast<S>(model.norm.sd * model.norm.sd /
                                     static_cast<double>(out.n_valid));
    const S w_focal = static_cast<S>(1.0 / M);
    const S w_kl = static_cast<S>(beta / M);
    parallel_for(M, threads, [&](int s) {
        std::vector<std::pair<int, ad::Array<S>>> seeds;
        seeds.emplace_back(fwd[s].sqerr, ad::Array<S>::scalar(w_sqerr));
        seeds.emplace_back(fwd[s].focal, ad::Array<S>::scalar(w_focal));
        seeds.emplace_back(fwd[s].kl, ad::Array<S>::scalar(w_kl));
        if (tc_grads) {
            ad::Array<S> gz(1, D), gmu(1, D), glv(1, D);
            for (int d = 0; d < D; ++d) {
                gz.data[d] = static_cast<S>(lambda) * gZ->at(s, d);
                gmu.data[d] = static_cast<S>(lambda) * gMU->at(s, d);
                glv.data[d] = static_cast<S>(lambda) * gLV->at(s, d);
            }
            seeds.emplace_back(fwd[s].z, std::move(gz));
            seeds.emplace_back(fwd[s].mu, std::move(gmu));
            seeds.emplace_back(fwd[s].logvar, std::move(glv));
        }
        tapes[s].backward_seeded(seeds);
    });

    // Fixed-order reduction (leaf ids are 0..P-1 because make_leaves runs
    // before anything else touches a tape).
    for (int s = 0; s < M; ++s)
        for (std::size_t p = 0; p < P; ++p) ad::axpy_into((*grads)[p], tapes[s].grad(static_cast<int>(p)));
    return out;
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------
template <class S = float>
TrainOutput train_model(const ModelConfig& cfg, const std::vector<FhrSegment>& segments,
                        const std::map<std::string, Split>& splits, const NormStats& norm) {
    cfg.validate();
    const int threads = cfg.resolved_threads();

    std::vector<FhrSegment> train_raw, val_raw;
    for (const auto& seg : segments) {
        auto it = splits.find(seg.ctg_id);
        if (it == splits.end()) continue;
        if (it->second == Split::TRAIN) train_raw.push_back(seg);
        if (it->second == Split::VAL) val_raw.push_back(seg);
    }
    if (train_raw.empty() || val_raw.empty())
        throw std::invalid_argument("train: empty train or validation split");

    const auto train_set = prepare_segments<S>(train_raw, norm, threads);
    const auto val_set = prepare_segments<S>(val_raw, norm, threads);

    std::vector<int> pool_npo, pool_apo;
    for (int i = 0; i < static_cast<int>(train_set.size()); ++i)
        (train_set[i].label == 1 ? pool_apo : pool_npo).push_back(i);
    if (pool_npo.empty() || pool_apo.empty())
        throw std::invalid_argument("train: a class is missing from the training split");

    Model<S> model(cfg, norm);
    const std::size_t P = model.params.values.size();
    ad::AdamState<S> adam;
    adam.init_like(model.params.values);
    std::vector<ad::Array<S>> grads;
    for (const auto& a : model.params.values) grads.emplace_back(a.rows, a.cols, S(0));

    const int half = cfg.batch_size / 2;
    const bool npo_major = pool_npo.size() >= pool_apo.size();
    const std::size_t n_major = std::max(pool_npo.size(), pool_apo.size());
    const int n_batches = std::max<int>(1, static_cast<int>(n_major) / half);
    const std::size_t dataset_n = train_set.size();

    double beta = cfg.beta_init, lambda = cfg.lambda_init;
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    std::vector<ad::Array<S>> best_params = model.params.values;
    std::vector<EpochStats> history;
    double final_train_kl = 0, final_train_tc = 0;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        // Majority class: one pass over a fresh shuffle.  Minority class:
        // uniform draws with replacement.
        std::vector<int> major = npo_major ? pool_npo : pool_apo;
        const std::vector<int>& minor = npo_major ? pool_apo : pool_npo;
        Rng shuffle_rng(derive_seed(cfg.seed, 0x73687566ULL, static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(major);
        Rng minor_rng(derive_seed(cfg.seed, 0x6d696e6fULL, static_cast<std::uint64_t>(epoch)));

        EpochStats es;
        es.epoch = epoch;
        es.beta = beta;
        es.lambda = lambda;

        double sum_mse = 0, sum_focal = 0, sum_kl = 0, sum_tc = 0;
        for (int b = 0; b < n_batches; ++b) {
            std::vector<const PreparedSegment<S>*> batch;
            batch.reserve(cfg.batch_size);
            for (int k = 0; k < half; ++k)
                batch.push_back(&train_set[major[(static_cast<std::size_t>(b) * half + k) %
                                                 major.size()]]);
            for (int k = 0; k < half; ++k)
                batch.push_back(&train_set[minor[minor_rng.uniform_int(minor.size())]]);

            for (auto& g : grads) std::fill(g.data.begin(), g.data.end(), S(0));
            auto noise_for = [&](int s) {
                Rng r(derive_seed(cfg.seed, 0x6e6f6973ULL, static_cast<std::uint64_t>(epoch),
                                  static_cast<std::uint64_t>(b), static_cast<std::uint64_t>(s)));
                ad::Array<S> n(1, cfg.latent_dim);
                for (S& v : n.data) v = static_cast<S>(r.normal());
                return n;
            };
            const auto oc = process_batch(model, batch, noise_for, beta, lambda, dataset_n,
                                          true, &grads, threads);
            ad::adam_step(model.params.values, grads, adam, cfg.learning_rate);

            sum_mse += norm.sd * norm.sd * oc.sum_sqerr / static_cast<double>(oc.n_valid);
            sum_focal += oc.sum_focal / oc.m;
            sum_kl += oc.sum_kl / oc.m;
            sum_tc += oc.tc;
        }
        es.train_mse = sum_mse / n_batches;
        es.train_focal = sum_focal / n_batches;
        es.train_kl = sum_kl / n_batches;
        es.train_tc = sum_tc / n_batches;
        es.train_total = es.train_mse + es.train_focal + beta * es.train_kl + lambda * es.train_tc;

        // Validation: fixed sequential batches, fixed per-segment noise so
        // epochs are comparable.
        double v_sqerr = 0, v_focal = 0, v_kl = 0, v_tc = 0;
        long v_nvalid = 0;
        int v_tc_batches = 0;
        const int n_val = static_cast<int>(val_set.size());
        for (int start = 0; start < n_val; start += cfg.batch_size) {
            const int stop = std::min(n_val, start + cfg.batch_size);
            std::vector<const PreparedSegment<S>*> batch;
            for (int i = start; i < stop; ++i) batch.push_back(&val_set[i]);
            auto noise_for = [&](int s) {
                Rng r(derive_seed(cfg.seed, 0x76616c6eULL,
                                  static_cast<std::uint64_t>(start + s)));
                ad::Array<S> n(1, cfg.latent_dim);
                for (S& v : n.data) v = static_cast<S>(r.normal());
                return n;
            };
            const auto oc =
                process_batch(model, batch, noise_for, beta, lambda, dataset_n, false,
                              static_cast<std::vector<ad::Array<S>>*>(nullptr), threads);
            v_sqerr += oc.sum_sqerr;
            v_nvalid += oc.n_valid;
            v_focal += oc.sum_focal;
            v_kl += oc.sum_kl;
            if (oc.has_tc) {
                v_tc += oc.tc;
                ++v_tc_batches;
            }
        }
        es.val_mse = norm.sd * norm.sd * v_sqerr / static_cast<double>(v_nvalid);
        es.val_focal = v_focal / n_val;
        es.val_kl = v_kl / n_val;
        es.val_tc = v_tc_batches ? v_tc / v_tc_batches : 0.0;
        es.val_total = es.val_mse + es.val_focal + beta * es.val_kl + lambda * es.val_tc;
        history.push_back(es);
        final_train_kl = es.train_kl;
        final_train_tc = es.train_tc;

        if (es.val_total < best_val) {
            best_val = es.val_total;
            best_epoch = epoch;
            best_params = model.params.values;
        }

        // Epoch-granularity controller updates; gain 0 pins both coefficients.
        if (cfg.ctrl_gain != 0.0) {
            beta = coeff_update(beta, es.train_kl, cfg.kl_target_per_dim, cfg.ctrl_gain,
                                cfg.beta_min, cfg.beta_max);
            lambda = coeff_update(lambda, es.train_tc, cfg.tc_target, cfg.ctrl_gain,
                                  cfg.lambda_min, cfg.lambda_max, /*snap_to_zero=*/true);
        }

        if (epoch >= cfg.min_epochs && epoch - best_epoch >= cfg.patience) break;
    }

    model.params.values = best_params;
    (void)P;

    std::map<std::string, std::string> meta;
    meta["epochs_run"] = std::to_string(history.size());
    meta["best_epoch"] = std::to_string(best_epoch);
    meta["best_val_loss"] = fmt(best_val);
    meta["final_beta"] = fmt(beta);
    meta["final_lambda"] = fmt(lambda);
    meta["final_train_kl_per_dim"] = fmt(final_train_kl);
    meta["final_train_tc"] = fmt(final_train_tc);

    TrainOutput out;
    out.checkpoint = make_checkpoint(model, meta);
    out.history = std::move(history);
    out.best_epoch = best_epoch;
    out.best_val_loss = best_val;
    return out;
}

inline std::string history_csv(const std::vector<EpochStats>& history) {
    std::string out =
        "epoch,train_total,train_mse,train_focal,train_kl_per_dim,train_tc,"
        "val_total,val_mse,val_focal,val_kl_per_dim,val_tc,beta,lambda\n";
    for (const auto& e : history) {
        out += std::to_string(e.epoch) + "," + fmt(e.train_total) + "," + fmt(e.train_mse) +
               "," + fmt(e.train_focal) + "," + fmt(e.train_kl) + "," + fmt(e.train_tc) + "," +
               fmt(e.val_total) + "," + fmt(e.val_mse) + "," + fmt(e.val_focal) + "," +
               fmt(e.val_kl) + "," + fmt(e.val_tc) + "," + fmt(e.beta) + "," + fmt(e.lambda) +
               "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// forward-only inference (z = mu)
// ---------------------------------------------------------------------------
struct SegmentInference {
    std::string ctg_id;
    double start_offset = 0.0;
    int label = 0;
    double score = 0.0;
    double sqerr = 0.0;  // standardized units, summed over VALID
    int n_valid = 0;
    std::vector<double> mu;
    std::vector<double> recon_std;
};

template <class S>
SegmentInference infer_segment(const Model<S>& model, const PreparedSegment<S>& seg,
                               bool keep_recon = false) {
    ad::Tape<S> t;
    auto leaves = model.make_leaves(t, false);
    const auto f = model.forward_segment(t, seg, leaves, ad::Array<S>());
    SegmentInference r;
    r.ctg_id = seg.ctg_id;
    r.start_offset = seg.start_offset;
    r.label = seg.label;
    r.score = static_cast<double>(t.val(f.score).item());
    r.sqerr = static_cast<double>(t.val(f.sqerr).item());
    r.n_valid = seg.n_valid;
    r.mu.resize(model.cfg.latent_dim);
    for (int d = 0; d < model.cfg.latent_dim; ++d)
        r.mu[d] = static_cast<double>(t.val(f.mu).data[d]);
    if (keep_recon) {
        r.recon_std.resize(kSegmentLen);
        for (int i = 0; i < kSegmentLen; ++i)
            r.recon_std[i] = static_cast<double>(t.val(f.recon).data[i]);
    }
    return r;
}

template <class S>
std::vector<SegmentInference> infer_all(const Model<S>& model,
                                        const std::vector<PreparedSegment<S>>& segs,
                                        int threads, bool keep_recon = false) {
    std::vector<SegmentInference> out(segs.size());
    parallel_for(static_cast<int>(segs.size()), threads,
                 [&](int i) { out[i] = infer_segment(model, segs[i], keep_recon); });
    return out;
}

// Decode an arbitrary latent vector to raw bpm units.
template <class S>
std::vector<double> decode_latent(const Model<S>& model, const std::vector<double>& z) {
    if (static_cast<int>(z.size()) != model.cfg.latent_dim)
        throw std::invalid_argument("decode_latent: wrong latent size");
    ad::Tape<S> t;
    auto leaves = model.make_leaves(t, false);
    ad::Array<S> zv(1, model.cfg.latent_dim);
    for (int d = 0; d < model.cfg.latent_dim; ++d) zv.data[d] = static_cast<S>(z[d]);
    const int recon = model.decode(t, t.constant(std::move(zv)), leaves);
    std::vector<double> out(kSegmentLen);
    for (int i = 0; i < kSegmentLen; ++i)
        out[i] = unstandardize(static_cast<double>(t.val(recon).data[i]), model.norm);
    return out;
}

}  // namespace ctg
