#include "ctg/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "ctg/io.hpp"
#include "ctg/rng.hpp"

namespace ctg {

namespace {

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double pop_var(const std::vector<double>& v) {
    const double m = mean_of(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size());
}

// Cholesky solve of A x = b for symmetric positive definite A (n x n,
// row-major).  Returns false when the factorization breaks down.
bool cholesky_solve(std::vector<double> a, std::vector<double> b, int n,
                    std::vector<double>& x) {
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = a[i * n + j];
            for (int k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
            if (i == j) {
                if (s <= 0) return false;
                a[i * n + i] = std::sqrt(s);
            } else {
                a[i * n + j] = s / a[j * n + j];
            }
        }
    }
    for (int i = 0; i < n; ++i) {  // L y = b
        double s = b[i];
        for (int k = 0; k < i; ++k) s -= a[i * n + k] * b[k];
        b[i] = s / a[i * n + i];
    }
    x.assign(n, 0.0);
    for (int i = n - 1; i >= 0; --i) {  // L^T x = y
        double s = b[i];
        for (int k = i + 1; k < n; ++k) s -= a[k * n + i] * x[k];
        x[i] = s / a[i * n + i];
    }
    return true;
}

// Cyclic Jacobi eigendecomposition of a symmetric matrix.  `vecs` columns are
// eigenvectors on return.
void jacobi_eigen(std::vector<double> a, int n, std::vector<double>& vals,
                  std::vector<double>& vecs) {
    vecs.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) vecs[i * n + i] = 1.0;
    for (int sweep = 0; sweep < 200; ++sweep) {
        double off = 0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
        double diag = 0;
        for (int p = 0; p < n; ++p) diag += a[p * n + p] * a[p * n + p];
        if (off <= 1e-26 * std::max(diag, 1e-300)) break;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (apq == 0.0) continue;
                const double app = a[p * n + p], aqq = a[q * n + q];
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a[k * n + p], akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a[p * n + k], aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = vecs[k * n + p], vkq = vecs[k * n + q];
                    vecs[k * n + p] = c * vkp - s * vkq;
                    vecs[k * n + q] = s * vkp + c * vkq;
                }
            }
    }
    vals.assign(n, 0.0);
    for (int i = 0; i < n; ++i) vals[i] = a[i * n + i];
}

// E[log cosh(nu)] for standard normal nu, by fine trapezoid; computed once.
double gauss_logcosh_expect() {
    static const double value = [] {
        const double h = 1e-4;
        double acc = 0;
        for (double u = -10.0; u <= 10.0; u += h) {
            const double w = (u == -10.0 || u + h > 10.0) ? 0.5 : 1.0;
            acc += w * std::log(std::cosh(u)) *
                   std::exp(-0.5 * u * u) / std::sqrt(2.0 * 3.14159265358979323846);
        }
        return acc * h;
    }();
    return value;
}

}  // namespace

LatentMatrix make_latent_matrix(const std::vector<std::string>& ctg_ids,
                                const std::vector<double>& start_offsets,
                                const std::vector<int>& labels,
                                const std::vector<std::vector<double>>& mu) {
    if (mu.empty() || ctg_ids.size() != mu.size() || start_offsets.size() != mu.size() ||
        labels.size() != mu.size())
        throw std::invalid_argument("make_latent_matrix: inconsistent inputs");
    LatentMatrix X;
    X.ctg_ids = ctg_ids;
    X.start_offsets = start_offsets;
    X.labels = labels;
    X.rows = static_cast<int>(mu.size());
    X.cols = static_cast<int>(mu[0].size());
    X.data.reserve(static_cast<std::size_t>(X.rows) * X.cols);
    for (const auto& row : mu) {
        if (static_cast<int>(row.size()) != X.cols)
            throw std::invalid_argument("make_latent_matrix: ragged rows");
        for (double v : row) {
            if (!std::isfinite(v)) throw std::invalid_argument("make_latent_matrix: non-finite");
            X.data.push_back(v);
        }
    }
    X.col_mean.assign(X.cols, 0.0);
    X.col_sd.assign(X.cols, 0.0);
    for (int c = 0; c < X.cols; ++c) {
        double m = 0;
        for (int r = 0; r < X.rows; ++r) m += X.at(r, c);
        m /= X.rows;
        double s = 0;
        for (int r = 0; r < X.rows; ++r) s += (X.at(r, c) - m) * (X.at(r, c) - m);
        X.col_mean[c] = m;
        X.col_sd[c] = std::sqrt(s / X.rows);
    }
    return X;
}

double r2_multi(const LatentMatrix& X, const std::vector<double>& y) {
    const int n = X.rows, d = X.cols;
    if (static_cast<int>(y.size()) != n) throw std::invalid_argument("r2_multi: size mismatch");
    if (n < d + 2) throw std::invalid_argument("r2_multi: too few rows");
    const double ss_tot = pop_var(y) * n;
    if (ss_tot == 0) throw std::invalid_argument("r2_multi: constant target");

    // design = [latents | 1]; normal equations with escalating jitter for
    // collapsed (collinear) columns.
    const int p = d + 1;
    std::vector<double> a(static_cast<std::size_t>(p) * p, 0.0), b(p, 0.0);
    for (int r = 0; r < n; ++r) {
        for (int i = 0; i < p; ++i) {
            const double xi = i < d ? X.at(r, i) : 1.0;
            b[i] += xi * y[r];
            for (int j = 0; j <= i; ++j) {
                const double xj = j < d ? X.at(r, j) : 1.0;
                a[i * p + j] += xi * xj;
            }
        }
    }
    for (int i = 0; i < p; ++i)
        for (int j = i + 1; j < p; ++j) a[i * p + j] = a[j * p + i];

    double max_diag = 0;
    for (int i = 0; i < p; ++i) max_diag = std::max(max_diag, a[i * p + i]);
    std::vector<double> coef;
    double jitter = 0.0;
    for (int tries = 0; tries < 8; ++tries) {
        std::vector<double> aj = a;
        for (int i = 0; i < p; ++i) aj[i * p + i] += jitter;
        if (cholesky_solve(std::move(aj), b, p, coef)) break;
        coef.clear();
        jitter = jitter == 0.0 ? 1e-12 * std::max(max_diag, 1.0) : jitter * 100.0;
    }
    if (coef.empty()) throw std::runtime_error("r2_multi: normal equations not solvable");

    double ss_res = 0;
    for (int r = 0; r < n; ++r) {
        double pred = coef[d];
        for (int i = 0; i < d; ++i) pred += coef[i] * X.at(r, i);
        ss_res += (y[r] - pred) * (y[r] - pred);
    }
    return 1.0 - ss_res / ss_tot;
}

double r2_single(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.empty()) throw std::invalid_argument("r2_single: bad sizes");
    const double vy = pop_var(y);
    if (vy == 0) throw std::invalid_argument("r2_single: constant target");
    const double vx = pop_var(x);
    if (vx == 0) return 0.0;
    const double mx = mean_of(x), my = mean_of(y);
    double cov = 0;
    for (std::size_t i = 0; i < x.size(); ++i) cov += (x[i] - mx) * (y[i] - my);
    cov /= static_cast<double>(x.size());
    return (cov * cov) / (vx * vy);
}

double projection_sd(const LatentMatrix& X, const std::vector<double>& v) {
    if (static_cast<int>(v.size()) != X.cols)
        throw std::invalid_argument("projection_sd: size mismatch");
    std::vector<double> proj(X.rows, 0.0);
    for (int r = 0; r < X.rows; ++r)
        for (int c = 0; c < X.cols; ++c) proj[r] += (X.at(r, c) - X.col_mean[c]) * v[c];
    return std::sqrt(pop_var(proj));
}

Direction pls_direction(const LatentMatrix& X, const std::vector<double>& y,
                        const std::string& name) {
    if (static_cast<int>(y.size()) != X.rows)
        throw std::invalid_argument("pls_direction: size mismatch");
    const double my = mean_of(y);
    std::vector<double> c(X.cols, 0.0);
    for (int r = 0; r < X.rows; ++r)
        for (int j = 0; j < X.cols; ++j)
            c[j] += (X.at(r, j) - X.col_mean[j]) * (y[r] - my);
    double norm = 0;
    for (double v : c) norm += v * v;
    norm = std::sqrt(norm);
    double scale = 0;  // covariance magnitude scale for the degeneracy test
    for (int j = 0; j < X.cols; ++j) scale = std::max(scale, X.col_sd[j]);
    if (norm <= 1e-12 * std::max(1.0, scale * static_cast<double>(X.rows)))
        throw std::invalid_argument("pls_direction: zero covariance");
    Direction d;
    d.feature = name;
    d.v.resize(X.cols);
    for (int j = 0; j < X.cols; ++j) d.v[j] = c[j] / norm;
    d.projection_sd = projection_sd(X, d.v);
    return d;
}

PcaResult pca(const LatentMatrix& X) {
    if (X.rows <= X.cols) throw std::invalid_argument("pca: needs rows > cols");
    const int d = X.cols;
    std::vector<double> cov(static_cast<std::size_t>(d) * d, 0.0);
    for (int r = 0; r < X.rows; ++r)
        for (int i = 0; i < d; ++i)
            for (int j = 0; j <= i; ++j)
                cov[i * d + j] +=
                    (X.at(r, i) - X.col_mean[i]) * (X.at(r, j) - X.col_mean[j]);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j <= i; ++j) {
            cov[i * d + j] /= X.rows;
            cov[j * d + i] = cov[i * d + j];
        }
    std::vector<double> vals, vecs;
    jacobi_eigen(cov, d, vals, vecs);

    std::vector<int> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return vals[a] > vals[b]; });

    PcaResult out;
    out.dims = d;
    out.mean = X.col_mean;
    out.variances.resize(d);
    out.components.assign(static_cast<std::size_t>(d) * d, 0.0);
    for (int k = 0; k < d; ++k) {
        out.variances[k] = std::max(0.0, vals[order[k]]);
        // column order[k] of vecs, sign fixed so the largest-|entry| is positive
        int arg = 0;
        double best = -1;
        for (int i = 0; i < d; ++i) {
            const double v = std::abs(vecs[i * d + order[k]]);
            if (v > best) {
                best = v;
                arg = i;
            }
        }
        const double sgn = vecs[arg * d + order[k]] >= 0 ? 1.0 : -1.0;
        for (int i = 0; i < d; ++i) out.components[k * d + i] = sgn * vecs[i * d + order[k]];
    }
    return out;
}

IcaResult ica(const LatentMatrix& X, int n_components, std::uint64_t seed, int max_iter,
              double tol) {
    if (n_components < 1) throw std::invalid_argument("ica: n_components must be >= 1");
    const PcaResult p = pca(X);
    const int d = X.cols;

    // Whitening basis: components with non-negligible variance.
    double max_var = 0;
    for (double v : p.variances) max_var = std::max(max_var, v);
    if (max_var <= 0) throw std::invalid_argument("ica: degenerate latents");
    std::vector<int> keep;
    for (int k = 0; k < d; ++k)
        if (p.variances[k] > 1e-10 * max_var) keep.push_back(k);
    const int dw = static_cast<int>(keep.size());
    const int K = std::min(n_components, dw);

    // whitened data: rows x dw
    std::vector<double> W(static_cast<std::size_t>(X.rows) * dw, 0.0);
    for (int r = 0; r < X.rows; ++r)
        for (int k = 0; k < dw; ++k) {
            double s = 0;
            for (int i = 0; i < d; ++i)
                s += (X.at(r, i) - X.col_mean[i]) * p.components[keep[k] * d + i];
            W[static_cast<std::size_t>(r) * dw + k] = s / std::sqrt(p.variances[keep[k]]);
        }

    Rng rng(derive_seed(seed, 0x69636172ULL));
    IcaResult out;
    std::vector<std::vector<double>> rows;  // accepted unit rows in whitened space
    for (int comp = 0; comp < K; ++comp) {
        std::vector<double> w(dw);
        for (double& v : w) v = rng.normal();
        auto deflate = [&](std::vector<double>& u) {
            for (const auto& prev : rows) {
                double dot = 0;
                for (int k = 0; k < dw; ++k) dot += u[k] * prev[k];
                for (int k = 0; k < dw; ++k) u[k] -= dot * prev[k];
            }
            double n2 = 0;
            for (double v : u) n2 += v * v;
            n2 = std::sqrt(n2);
            if (n2 < 1e-12) {  // re-randomize on degenerate deflation
                for (double& v : u) v = rng.normal();
                n2 = 0;
                for (double v : u) n2 += v * v;
                n2 = std::sqrt(n2);
            }
            for (double& v : u) v /= n2;
        };
        deflate(w);

        bool converged = false;
        for (int it = 0; it < max_iter; ++it) {
            std::vector<double> wn(dw, 0.0);
            double gp_mean = 0;
            for (int r = 0; r < X.rows; ++r) {
                double u = 0;
                for (int k = 0; k < dw; ++k) u += w[k] * W[static_cast<std::size_t>(r) * dw + k];
                const double g = std::tanh(u);
                gp_mean += 1.0 - g * g;
                for (int k = 0; k < dw; ++k) wn[k] += W[static_cast<std::size_t>(r) * dw + k] * g;
            }
            gp_mean /= X.rows;
            for (int k = 0; k < dw; ++k) wn[k] = wn[k] / X.rows - gp_mean * w[k];
            deflate(wn);
            double dot = 0;
            for (int k = 0; k < dw; ++k) dot += wn[k] * w[k];
            w = std::move(wn);
            if (std::abs(std::abs(dot) - 1.0) < tol) {
                converged = true;
                break;
            }
        }

        IcaComponent ic;
        ic.w_white = w;
        ic.converged = converged;
        if (!converged) out.all_converged = false;
        // negentropy proxy via the contrast function
        double gmean = 0;
        for (int r = 0; r < X.rows; ++r) {
            double u = 0;
            for (int k = 0; k < dw; ++k) u += w[k] * W[static_cast<std::size_t>(r) * dw + k];
            gmean += std::log(std::cosh(u));
        }
        gmean /= X.rows;
        const double delta = gmean - gauss_logcosh_expect();
        ic.negentropy = delta * delta;
        // latent-space mixing direction: unit vector along E^T sqrt(var) w
        ic.mixing.assign(d, 0.0);
        for (int i = 0; i < d; ++i)
            for (int k = 0; k < dw; ++k)
                ic.mixing[i] += p.components[keep[k] * d + i] *
                                std::sqrt(p.variances[keep[k]]) * w[k];
        double mn = 0;
        for (double v : ic.mixing) mn += v * v;
        mn = std::sqrt(mn);
        if (mn > 0)
            for (double& v : ic.mixing) v /= mn;
        rows.push_back(ic.w_white);
        out.components.push_back(std::move(ic));
    }
    out.n_components = K;
    std::stable_sort(out.components.begin(), out.components.end(),
                     [](const IcaComponent& a, const IcaComponent& b) {
                         return a.negentropy > b.negentropy;
                     });
    return out;
}

R2Panel r2_panel(const LatentMatrix& X, const std::vector<FeatureRow>& features,
                 const std::vector<double>& scores, const std::vector<int>& labels) {
    if (static_cast<int>(scores.size()) != X.rows ||
        static_cast<int>(labels.size()) != X.rows)
        throw std::invalid_argument("r2_panel: scores/labels must align with latents");

    std::map<std::pair<std::string, double>, std::size_t> feat_index;
    for (std::size_t i = 0; i < features.size(); ++i)
        feat_index[{features[i].ctg_id, features[i].start_offset}] = i;

    std::vector<int> rows_used;
    std::vector<std::size_t> feat_used;
    for (int r = 0; r < X.rows; ++r) {
        auto it = feat_index.find({X.ctg_ids[r], X.start_offsets[r]});
        if (it == feat_index.end()) continue;
        rows_used.push_back(r);
        feat_used.push_back(it->second);
    }
    if (rows_used.size() < static_cast<std::size_t>(X.cols) + 2)
        throw std::invalid_argument("r2_panel: too few segments with features");

    // sub-matrix restricted to the joined rows
    std::vector<std::vector<double>> mu_sub;
    std::vector<std::string> ids_sub;
    std::vector<double> off_sub;
    std::vector<int> lab_sub;
    std::vector<double> score_sub, abserr_sub, label_d;
    for (std::size_t k = 0; k < rows_used.size(); ++k) {
        const int r = rows_used[k];
        std::vector<double> row(X.cols);
        for (int c = 0; c < X.cols; ++c) row[c] = X.at(r, c);
        mu_sub.push_back(std::move(row));
        ids_sub.push_back(X.ctg_ids[r]);
        off_sub.push_back(X.start_offsets[r]);
        lab_sub.push_back(X.labels[r]);
        score_sub.push_back(scores[r]);
        abserr_sub.push_back(std::abs(scores[r] - labels[r]));
        label_d.push_back(static_cast<double>(labels[r]));
    }
    const LatentMatrix Xs = make_latent_matrix(ids_sub, off_sub, lab_sub, mu_sub);

    R2Panel panel;
    panel.n_rows_used = static_cast<int>(rows_used.size());
    const auto names = feature_names();
    for (std::size_t f = 0; f < names.size(); ++f) {
        R2PanelRow row;
        row.feature = names[f];
        std::vector<double> fv;
        for (std::size_t k : feat_used) fv.push_back(features[k].values[f]);

        auto try_cell = [&](int cell, auto&& compute) {
            try {
                row.value[cell] = compute();
                row.present[cell] = true;
            } catch (const std::exception&) {
            }
        };
        try_cell(0, [&] { return r2_multi(Xs, fv); });
        try_cell(1, [&] { return r2_single(fv, label_d); });
        try_cell(2, [&] { return r2_single(fv, score_sub); });
        try_cell(3, [&] { return r2_single(fv, abserr_sub); });
        try_cell(4, [&] {
            const Direction d = pls_direction(Xs, fv, row.feature);
            std::vector<double> proj(Xs.rows, 0.0);
            for (int r = 0; r < Xs.rows; ++r)
                for (int c = 0; c < Xs.cols; ++c)
                    proj[r] += (Xs.at(r, c) - Xs.col_mean[c]) * d.v[c];
            return r2_single(proj, label_d);
        });
        try_cell(5, [&] {
            const Direction d = pls_direction(Xs, fv, row.feature);
            std::vector<double> proj(Xs.rows, 0.0);
            for (int r = 0; r < Xs.rows; ++r)
                for (int c = 0; c < Xs.cols; ++c)
                    proj[r] += (Xs.at(r, c) - Xs.col_mean[c]) * d.v[c];
            return r2_single(proj, score_sub);
        });
        panel.rows.push_back(std::move(row));
    }
    return panel;
}

std::string r2_panel_csv(const R2Panel& p) {
    std::string out =
        "feature,r2_latents,r2_label,r2_score,r2_abs_error,r2_pls_label,r2_pls_score\n";
    for (const auto& row : p.rows) {
        out += row.feature;
        for (int c = 0; c < 6; ++c) {
            out += ",";
            if (row.present[c]) out += fmt(row.value[c]);
        }
        out += "\n";
    }
    return out;
}

std::string traversal_csv(const TraversalFamily& f) {
    std::string out = "sample";
    for (double m : f.multipliers) out += ",m_" + fmt(m);
    out += "\n";
    if (f.signals.empty()) return out;
    const std::size_t n = f.signals[0].size();
    for (std::size_t i = 0; i < n; ++i) {
        out += std::to_string(i);
        for (const auto& sig : f.signals) out += "," + fmt(sig[i]);
        out += "\n";
    }
    return out;
}

std::string pca_csv(const PcaResult& p) {
    double total = 0;
    for (double v : p.variances) total += v;
    std::string out = "component,variance,explained_fraction";
    for (int i = 0; i < p.dims; ++i) out += ",loading_" + std::to_string(i);
    out += "\n";
    for (int k = 0; k < p.dims; ++k) {
        out += std::to_string(k) + "," + fmt(p.variances[k]) + "," +
               fmt(total > 0 ? p.variances[k] / total : 0.0);
        for (int i = 0; i < p.dims; ++i) out += "," + fmt(p.components[k * p.dims + i]);
        out += "\n";
    }
    return out;
}

std::string ica_csv(const IcaResult& r) {
    const int d = r.components.empty() ? 0 : static_cast<int>(r.components[0].mixing.size());
    std::string out = "component,negentropy,converged";
    for (int i = 0; i < d; ++i) out += ",mixing_" + std::to_string(i);
    out += "\n";
    for (std::size_t k = 0; k < r.components.size(); ++k) {
        const auto& c = r.components[k];
        out += std::to_string(k) + "," + fmt(c.negentropy) + "," +
               (c.converged ? "1" : "0");
        for (double v : c.mixing) out += "," + fmt(v);
        out += "\n";
    }
    return out;
}

std::string directions_csv(const std::vector<Direction>& dirs) {
    const int d = dirs.empty() ? 0 : static_cast<int>(dirs[0].v.size());
    std::string out = "feature,projection_sd";
    for (int i = 0; i < d; ++i) out += ",v_" + std::to_string(i);
    out += "\n";
    for (const auto& dir : dirs) {
        out += dir.feature + "," + fmt(dir.projection_sd);
        for (double v : dir.v) out += "," + fmt(v);
        out += "\n";
    }
    return out;
}

std::string latents_csv(const LatentMatrix& X) {
    std::string out = "ctg_id,start_offset,label";
    for (int c = 0; c < X.cols; ++c) out += ",mu_" + std::to_string(c);
    out += "\n";
    for (int r = 0; r < X.rows; ++r) {
        out += X.ctg_ids[r] + "," + fmt(X.start_offsets[r]) + "," +
               std::to_string(X.labels[r]);
        for (int c = 0; c < X.cols; ++c) out += "," + fmt(X.at(r, c));
        out += "\n";
    }
    return out;
}

}  // namespace ctg
