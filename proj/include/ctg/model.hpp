#pragma once
// The supervised beta-TC-VAE: dual-branch single-head transformer encoder,
// reparameterised latent, transformer decoder, sigmoid classifier, four-term
// loss with dynamic coefficient control.
//
// Everything is templated on the scalar: float for training, double for
// gradient checks and evaluation.  Each segment's graph lives on its own
// tape; the TC term couples segments through a separate batch-level tape
// whose gradients are injected as seeds, so segment tapes stay independent
// and can run on worker threads.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "ctg/io.hpp"
#include "ctg/preprocess.hpp"
#include "ctg/rng.hpp"
#include "ctg/tensor.hpp"
#include "ctg/types.hpp"

namespace ctg {

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------
struct ModelConfig {
    int latent_dim = 32;
    int d_model = 32;
    int token_patch = 8;  // 1 recovers per-sample tokens
    double kl_target_per_dim = 0.5;
    double tc_target = 200.0;
    double focal_gamma = 2.0;
    double learning_rate = 1e-3;
    int batch_size = 64;
    std::uint64_t seed = 1;

    int max_epochs = 60;
    int patience = 10;
    int min_epochs = 30;  // runway for the coefficient controllers

    double beta_init = 1.0;
    double lambda_init = 0.1;
    double ctrl_gain = 0.05;  // 0 pins both coefficients at their init values
    double beta_min = 1e-4, beta_max = 10.0;
    double lambda_min = 0.0, lambda_max = 10.0;

    int threads = 0;  // 0 = hardware concurrency

    void validate() const {
        if (latent_dim < 2) throw std::invalid_argument("model: latent_dim must be >= 2");
        if (batch_size < 2 || batch_size % 2 != 0)
            throw std::invalid_argument("model: batch_size must be even and >= 2");
        if (token_patch < 1 || kSegmentLen % token_patch != 0)
            throw std::invalid_argument("model: token_patch must divide 1200");
        if (d_model < 1) throw std::invalid_argument("model: d_model must be >= 1");
        if (focal_gamma < 0.0) throw std::invalid_argument("model: focal_gamma must be >= 0");
        if (max_epochs < 1) throw std::invalid_argument("model: max_epochs must be >= 1");
    }

    int fhr_tokens() const { return kSegmentLen / token_patch; }
    int fft_tokens() const { return (kFftBins + token_patch - 1) / token_patch; }
    int resolved_threads() const {
        if (threads > 0) return threads;
        const unsigned hc = std::thread::hardware_concurrency();
        return hc == 0 ? 1 : static_cast<int>(hc);
    }
};

// ---------------------------------------------------------------------------
// deterministic chunked parallel-for (results must not depend on scheduling;
// callers do any cross-item reduction in fixed order afterwards)
// ---------------------------------------------------------------------------
template <class Fn>
void parallel_for(int n, int threads, Fn&& fn) {
    threads = std::max(1, std::min(threads, n));
    if (threads == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(threads);
    std::exception_ptr error;
    std::mutex error_mu;
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&]() {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mu);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// model-ready segment
// ---------------------------------------------------------------------------
template <class S>
struct PreparedSegment {
    std::string ctg_id;
    double start_offset = 0.0;
    int label = 0;
    int n_valid = 0;
    std::vector<S> values_std;  // standardized, 0 at non-VALID
    std::vector<S> fft;         // kFftBins entries in [0,1]
    std::vector<Mask> mask;
};

template <class S>
std::vector<PreparedSegment<S>> prepare_segments(const std::vector<FhrSegment>& segs,
                                                 const NormStats& norm, int threads) {
    std::vector<PreparedSegment<S>> out(segs.size());
    parallel_for(static_cast<int>(segs.size()), threads, [&](int i) {
        const FhrSegment& seg = segs[i];
        PreparedSegment<S>& p = out[i];
        p.ctg_id = seg.ctg_id;
        p.start_offset = seg.start_offset;
        p.label = seg.label;
        p.mask = seg.mask;
        const auto std_vals = standardize(seg, norm);
        p.values_std.resize(kSegmentLen);
        for (int j = 0; j < kSegmentLen; ++j) p.values_std[j] = static_cast<S>(std_vals[j]);
        p.n_valid = seg.count(Mask::VALID);
        const auto spec = fft_input(seg);
        p.fft.resize(kFftBins);
        for (int j = 0; j < kFftBins; ++j) p.fft[j] = static_cast<S>(spec[j]);
    });
    return out;
}

// ---------------------------------------------------------------------------
// parameters
// ---------------------------------------------------------------------------
template <class S>
struct ParamSet {
    std::vector<std::string> names;
    std::vector<ad::Array<S>> values;

    int add(const std::string& name, int rows, int cols) {
        names.push_back(name);
        values.emplace_back(rows, cols, S(0));
        return static_cast<int>(values.size()) - 1;
    }
};

// Handles into the ParamSet for each architectural role.
struct BlockParams {
    int ln1_g, ln1_b, wq, wk, wv, wo, ln2_g, ln2_b, ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

struct ParamIndex {
    int fhr_val_w, fhr_val_b, fhr_tok_missing, fhr_tok_pad, fhr_patch_w, fhr_patch_b, fhr_pos;
    int fft_val_w, fft_val_b, fft_patch_w, fft_patch_b, fft_pos;
    BlockParams enc_fhr, enc_fft, dec;
    int latent_w, latent_b;
    int dec_expand_w, dec_expand_b, dec_out_w, dec_out_b;
    int cls_ln_g, cls_ln_b, cls_w, cls_b;
};

// Per-segment node handles used by the loss assembly.
struct ForwardIds {
    int mu = -1, logvar = -1, z = -1, recon = -1, score = -1;
    int sqerr = -1, focal = -1, kl = -1;
};

constexpr double kLayerNormEps = 1e-5;
constexpr double kLogvarClamp = 8.0;
constexpr double kScoreClamp = 1e-7;
constexpr double kLog2Pi = 1.8378770664093453;

// ---------------------------------------------------------------------------
// the model
// ---------------------------------------------------------------------------
template <class S>
class Model {
public:
    ModelConfig cfg;
    NormStats norm;
    ParamSet<S> params;
    ParamIndex idx{};

    Model(const ModelConfig& config, const NormStats& stats) : cfg(config), norm(stats) {
        cfg.validate();
        register_params();
        init_params();
    }

    // ---- parameter registry -------------------------------------------------

    void register_params() {
        const int d = cfg.d_model;
        const int P = cfg.token_patch;
        const int L = cfg.latent_dim;
        auto& ps = params;
        idx.fhr_val_w = ps.add("fhr_val_w", 1, d);
        idx.fhr_val_b = ps.add("fhr_val_b", 1, d);
        idx.fhr_tok_missing = ps.add("fhr_tok_missing", 1, d);
        idx.fhr_tok_pad = ps.add("fhr_tok_pad", 1, d);
        idx.fhr_patch_w = ps.add("fhr_patch_w", P * d, d);
        idx.fhr_patch_b = ps.add("fhr_patch_b", 1, d);
        idx.fhr_pos = ps.add("fhr_pos", cfg.fhr_tokens(), d);
        idx.fft_val_w = ps.add("fft_val_w", 1, d);
        idx.fft_val_b = ps.add("fft_val_b", 1, d);
        idx.fft_patch_w = ps.add("fft_patch_w", P * d, d);
        idx.fft_patch_b = ps.add("fft_patch_b", 1, d);
        idx.fft_pos = ps.add("fft_pos", cfg.fft_tokens(), d);
        idx.enc_fhr = register_block("enc_fhr");
        idx.enc_fft = register_block("enc_fft");
        idx.latent_w = ps.add("latent_w", 2 * d, 2 * L);
        idx.latent_b = ps.add("latent_b", 1, 2 * L);
        idx.dec_expand_w = ps.add("dec_expand_w", L, cfg.fhr_tokens() * d);
        idx.dec_expand_b = ps.add("dec_expand_b", 1, cfg.fhr_tokens() * d);
        idx.dec = register_block("dec");
        idx.dec_out_w = ps.add("dec_out_w", d, P);
        idx.dec_out_b = ps.add("dec_out_b", 1, P);
        idx.cls_ln_g = ps.add("cls_ln_g", 1, L);
        idx.cls_ln_b = ps.add("cls_ln_b", 1, L);
        idx.cls_w = ps.add("cls_w", L, 1);
        idx.cls_b = ps.add("cls_b", 1, 1);
    }

    BlockParams register_block(const std::string& prefix) {
        const int d = cfg.d_model;
        auto& ps = params;
        BlockParams b;
        b.ln1_g = ps.add(prefix + "_ln1_g", 1, d);
        b.ln1_b = ps.add(prefix + "_ln1_b", 1, d);
        b.wq = ps.add(prefix + "_wq", d, d);
        b.wk = ps.add(prefix + "_wk", d, d);
        b.wv = ps.add(prefix + "_wv", d, d);
        b.wo = ps.add(prefix + "_wo", d, d);
        b.ln2_g = ps.add(prefix + "_ln2_g", 1, d);
        b.ln2_b = ps.add(prefix + "_ln2_b", 1, d);
        b.ffn_w1 = ps.add(prefix + "_ffn_w1", d, 4 * d);
        b.ffn_b1 = ps.add(prefix + "_ffn_b1", 1, 4 * d);
        b.ffn_w2 = ps.add(prefix + "_ffn_w2", 4 * d, d);
        b.ffn_b2 = ps.add(prefix + "_ffn_b2", 1, d);
        return b;
    }

    // Xavier-uniform matrices, N(0, 0.02) token/positional tables, identity
    // layer norms, zero biases.  Draws happen in registration order from one
    // stream, always in double, so float and double models start identically
    // up to rounding.
    void init_params() {
        Rng rng(derive_seed(cfg.seed, 0x696e6974ULL));
        for (std::size_t p = 0; p < params.values.size(); ++p) {
            const std::string& name = params.names[p];
            ad::Array<S>& a = params.values[p];
            const bool is_ln_gain = name.size() > 2 && name.substr(name.size() - 2) == "_g" &&
                                    name.find("_ln") != std::string::npos;
            auto ends_with = [&](const char* suf) {
                const std::size_t n = std::string(suf).size();
                return name.size() >= n && name.compare(name.size() - n, n, suf) == 0;
            };
            const bool is_bias = ends_with("_b") || ends_with("_b1") || ends_with("_b2");
            const bool is_table = name.find("_pos") != std::string::npos ||
                                  name.find("_tok_") != std::string::npos;
            if (is_ln_gain) {
                for (S& v : a.data) v = S(1);
            } else if (is_table) {
                for (S& v : a.data) v = static_cast<S>(rng.normal(0.0, 0.02));
            } else if (is_bias) {
                // zeros, already the fill value
            } else {
                const double limit = std::sqrt(6.0 / (a.rows + a.cols));
                for (S& v : a.data) v = static_cast<S>(rng.uniform(-limit, limit));
            }
        }
    }

    // ---- graph builders -------------------------------------------------------

    // Leaves for every parameter, in registry order.  Call once per tape.
    std::vector<int> make_leaves(ad::Tape<S>& t, bool requires_grad) const {
        std::vector<int> ids;
        ids.reserve(params.values.size());
        for (const auto& a : params.values) ids.push_back(t.leaf(a, requires_grad));
        return ids;
    }

    int transformer_block(ad::Tape<S>& t, int x, const BlockParams& b,
                          const std::vector<int>& L) const {
        const int d = cfg.d_model;
        auto ln = [&](int in, int g, int bb) {
            int y = t.layer_norm_rows(in, static_cast<S>(kLayerNormEps));
            y = t.mul_rowvec(y, L[g]);
            return t.add_rowvec(y, L[bb]);
        };
        const int n1 = ln(x, b.ln1_g, b.ln1_b);
        const int q = t.matmul(n1, L[b.wq]);
        const int k = t.matmul(n1, L[b.wk]);
        const int v = t.matmul(n1, L[b.wv]);
        int scores = t.matmul(q, t.transpose(k));
        scores = t.scale(scores, static_cast<S>(1.0 / std::sqrt(static_cast<double>(d))));
        const int attn = t.matmul(t.softmax_rows(scores), v);
        const int h = t.add(x, t.matmul(attn, L[b.wo]));
        const int n2 = ln(h, b.ln2_g, b.ln2_b);
        int f = t.add_rowvec(t.matmul(n2, L[b.ffn_w1]), L[b.ffn_b1]);
        f = t.relu(f);
        f = t.add_rowvec(t.matmul(f, L[b.ffn_w2]), L[b.ffn_b2]);
        return t.add(h, f);
    }

    // Token sequence for the FHR branch: per-position value embedding with
    // learned MISSING/PAD substitution, patch aggregation, positional table.
    int embed_fhr(ad::Tape<S>& t, const PreparedSegment<S>& seg,
                  const std::vector<int>& L) const {
        const int d = cfg.d_model;
        ad::Array<S> vals(kSegmentLen, 1), m_valid(kSegmentLen, 1),
            m_missing(kSegmentLen, 1), m_pad(kSegmentLen, 1), valid_full(kSegmentLen, d);
        for (int i = 0; i < kSegmentLen; ++i) {
            vals.at(i, 0) = seg.values_std[i];
            const Mask m = seg.mask[i];
            m_valid.at(i, 0) = m == Mask::VALID ? S(1) : S(0);
            m_missing.at(i, 0) = m == Mask::MISSING ? S(1) : S(0);
            m_pad.at(i, 0) = m == Mask::PAD ? S(1) : S(0);
            for (int c = 0; c < d; ++c) valid_full.at(i, c) = m_valid.at(i, 0);
        }
        const int c_vals = t.constant(std::move(vals));
        const int c_missing = t.constant(std::move(m_missing));
        const int c_pad = t.constant(std::move(m_pad));
        const int c_valid_full = t.constant(std::move(valid_full));

        int e = t.add_rowvec(t.matmul(c_vals, L[idx.fhr_val_w]), L[idx.fhr_val_b]);
        e = t.mul(e, c_valid_full);
        e = t.add(e, t.matmul(c_missing, L[idx.fhr_tok_missing]));
        e = t.add(e, t.matmul(c_pad, L[idx.fhr_tok_pad]));

        int x = t.reshape(e, cfg.fhr_tokens(), cfg.token_patch * d);
        x = t.add_rowvec(t.matmul(x, L[idx.fhr_patch_w]), L[idx.fhr_patch_b]);
        return t.add(x, L[idx.fhr_pos]);
    }

    // FFT branch: every bin is present, so no token substitution; the
    // spectrum is zero-padded up to a whole number of patches.
    int embed_fft(ad::Tape<S>& t, const PreparedSegment<S>& seg,
                  const std::vector<int>& L) const {
        const int d = cfg.d_model;
        const int padded = cfg.fft_tokens() * cfg.token_patch;
        ad::Array<S> vals(padded, 1, S(0));
        for (int i = 0; i < kFftBins; ++i) vals.at(i, 0) = seg.fft[i];
        const int c_vals = t.constant(std::move(vals));
        int e = t.add_rowvec(t.matmul(c_vals, L[idx.fft_val_w]), L[idx.fft_val_b]);
        int x = t.reshape(e, cfg.fft_tokens(), cfg.token_patch * d);
        x = t.add_rowvec(t.matmul(x, L[idx.fft_patch_w]), L[idx.fft_patch_b]);
        return t.add(x, L[idx.fft_pos]);
    }

    // Encoder: branch blocks, mean pooling, concat, affine to (mu, logvar).
    std::pair<int, int> encode(ad::Tape<S>& t, const PreparedSegment<S>& seg,
                               const std::vector<int>& L) const {
        const int hf = transformer_block(t, embed_fhr(t, seg, L), idx.enc_fhr, L);
        const int hs = transformer_block(t, embed_fft(t, seg, L), idx.enc_fft, L);
        const int pooled = t.concat_cols(t.mean_rows(hf), t.mean_rows(hs));
        const int lat = t.add_rowvec(t.matmul(pooled, L[idx.latent_w]), L[idx.latent_b]);
        const int mu = t.slice_cols(lat, 0, cfg.latent_dim);
        int logvar = t.slice_cols(lat, cfg.latent_dim, 2 * cfg.latent_dim);
        logvar = t.clamp(logvar, static_cast<S>(-kLogvarClamp), static_cast<S>(kLogvarClamp));
        return {mu, logvar};
    }

    int reparameterize(ad::Tape<S>& t, int mu, int logvar, const ad::Array<S>& noise) const {
        const int sd = t.exp_(t.scale(logvar, S(0.5)));
        return t.add(mu, t.mul(sd, t.constant(noise)));
    }

    int decode(ad::Tape<S>& t, int z, const std::vector<int>& L) const {
        const int d = cfg.d_model;
        int x = t.add_rowvec(t.matmul(z, L[idx.dec_expand_w]), L[idx.dec_expand_b]);
        x = t.reshape(x, cfg.fhr_tokens(), d);
        x = transformer_block(t, x, idx.dec, L);
        x = t.add_rowvec(t.matmul(x, L[idx.dec_out_w]), L[idx.dec_out_b]);
        return t.reshape(x, 1, kSegmentLen);
    }

    int classify(ad::Tape<S>& t, int z, const std::vector<int>& L) const {
        int y = t.layer_norm_rows(z, static_cast<S>(kLayerNormEps));
        y = t.add_rowvec(t.mul_rowvec(y, L[idx.cls_ln_g]), L[idx.cls_ln_b]);
        y = t.add(t.matmul(y, L[idx.cls_w]), L[idx.cls_b]);
        y = t.sigmoid(y);
        return t.clamp(y, static_cast<S>(kScoreClamp), static_cast<S>(1.0 - kScoreClamp));
    }

    // (1/D) sum_d 0.5 (mu^2 + e^lv - 1 - lv)
    int kl_per_dim(ad::Tape<S>& t, int mu, int logvar) const {
        int acc = t.add(t.mul(mu, mu), t.exp_(logvar));
        acc = t.shift(acc, S(-1));
        acc = t.sub(acc, logvar);
        return t.scale(t.mean_all(acc), S(0.5));
    }

    // -(1 - p_t)^gamma log(p_t); the score clamp keeps both logs in domain.
    int focal_bce(ad::Tape<S>& t, int score, int label) const {
        const int pt = label == 1 ? score : t.shift(t.scale(score, S(-1)), S(1));
        const int one_minus = t.shift(t.scale(pt, S(-1)), S(1));
        const int mod = t.exp_(t.scale(t.log_(one_minus), static_cast<S>(cfg.focal_gamma)));
        return t.scale(t.mul(mod, t.log_(pt)), S(-1));
    }

    // Full per-segment graph.  `noise` empty => z = mu (inference mode).
    ForwardIds forward_segment(ad::Tape<S>& t, const PreparedSegment<S>& seg,
                               const std::vector<int>& L, const ad::Array<S>& noise) const {
        ForwardIds f;
        auto [mu, logvar] = encode(t, seg, L);
        f.mu = mu;
        f.logvar = logvar;
        f.z = noise.size() ? reparameterize(t, mu, logvar, noise) : mu;
        f.recon = decode(t, f.z, L);
        f.score = classify(t, f.z, L);

        ad::Array<S> target(1, kSegmentLen), vmask(1, kSegmentLen);
        for (int i = 0; i < kSegmentLen; ++i) {
            target.at(0, i) = seg.values_std[i];
            vmask.at(0, i) = seg.mask[i] == Mask::VALID ? S(1) : S(0);
        }
        const int masked = t.mul(t.sub(f.recon, t.constant(std::move(target))),
                                 t.constant(std::move(vmask)));
        f.sqerr = t.sum_all(t.mul(masked, masked));
        f.focal = focal_bce(t, f.score, seg.label);
        f.kl = kl_per_dim(t, mu, logvar);
        return f;
    }
};

// ---------------------------------------------------------------------------
// total correlation (minibatch stratified weighting of the aggregate
// posterior; gives exactly 0 for factorized identical posteriors and stays
// within the acceptance bound on factorized batches)
// ---------------------------------------------------------------------------
template <class S>
int build_tc_node(ad::Tape<S>& t, int Z, int MU, int LV, std::size_t dataset_n) {
    const int M = t.val(Z).rows;
    const int D = t.val(Z).cols;
    if (M < 2) throw std::invalid_argument("tc_estimate: batch size must be >= 2");
    const double N = static_cast<double>(std::max<std::size_t>(dataset_n, 2));

    // log-weights: own posterior 1/N, every other (N-1)/(N(M-1))
    ad::Array<S> W(M, M, static_cast<S>(std::log(N - 1.0) - std::log(N) -
                                        std::log(static_cast<double>(M - 1))));
    for (int i = 0; i < M; ++i) W.at(i, i) = static_cast<S>(-std::log(N));
    const int cW = t.constant(std::move(W));

    ad::Array<S> ones_row(1, M, S(1));
    ad::Array<S> ones_col(M, 1, S(1));
    const int c_ones_row = t.constant(std::move(ones_row));
    const int c_ones_col = t.constant(std::move(ones_col));

    int joint = -1;      // sum_d log N(z_i,d | mu_j,d)
    int marg_sum = -1;   // sum_d logsumexp_j (log N + W)
    for (int d = 0; d < D; ++d) {
        const int zd = t.slice_cols(Z, d, d + 1);
        const int mud = t.slice_cols(MU, d, d + 1);
        const int lvd = t.slice_cols(LV, d, d + 1);
        const int z_rep = t.matmul(zd, c_ones_row);                  // rows: z_i,d
        const int mu_rep = t.matmul(c_ones_col, t.transpose(mud));   // cols: mu_j,d
        const int lv_rep = t.matmul(c_ones_col, t.transpose(lvd));
        const int diff = t.sub(z_rep, mu_rep);
        const int quad = t.mul(t.mul(diff, diff), t.exp_(t.scale(lv_rep, S(-1))));
        int logn = t.scale(t.add(lv_rep, quad), S(-0.5));
        logn = t.shift(logn, static_cast<S>(-0.5 * kLog2Pi));
        joint = joint < 0 ? logn : t.add(joint, logn);
        const int lse = t.logsumexp_rows(t.add(logn, cW));
        marg_sum = marg_sum < 0 ? lse : t.add(marg_sum, lse);
    }
    const int logqz = t.logsumexp_rows(t.add(joint, cW));
    return t.mean_all(t.sub(logqz, marg_sum));
}

// Value-only convenience used by tests and reporting.
template <class S>
double tc_estimate(const ad::Array<S>& z, const ad::Array<S>& mu, const ad::Array<S>& lv,
                   std::size_t dataset_n) {
    ad::Tape<S> t;
    const int Z = t.leaf(z, false), MU = t.leaf(mu, false), LV = t.leaf(lv, false);
    return static_cast<double>(t.val(build_tc_node(t, Z, MU, LV, dataset_n)).item());
}

// ---------------------------------------------------------------------------
// coefficient controller
// ---------------------------------------------------------------------------
inline double coeff_update(double coeff, double observed, double target, double gain,
                           double lo, double hi, bool snap_to_zero = false) {
    double next = coeff * std::exp(gain * (observed - target) / std::max(target, 1.0));
    next = std::clamp(next, lo, hi);
    if (snap_to_zero && next < 1e-6) next = 0.0;
    return next;
}

}  // namespace ctg
