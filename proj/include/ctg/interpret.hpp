#pragma once
// Latent-space interpretability: R^2 analyses, PLS directions, traversals,
// PCA/ICA decompositions, and the feature/latent R^2 panel.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctg/features.hpp"
#include "ctg/types.hpp"

namespace ctg {

struct LatentMatrix {
    std::vector<std::string> ctg_ids;      // per row
    std::vector<double> start_offsets;     // per row
    std::vector<int> labels;               // per row
    int rows = 0, cols = 0;
    std::vector<double> data;              // row-major, rows x cols
    std::vector<double> col_mean;          // mean latent vector
    std::vector<double> col_sd;            // per-dimension population SD

    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

// Builds the matrix and its column statistics from aligned per-row latents.
LatentMatrix make_latent_matrix(const std::vector<std::string>& ctg_ids,
                                const std::vector<double>& start_offsets,
                                const std::vector<int>& labels,
                                const std::vector<std::vector<double>>& mu);

// OLS of target on all latent columns + intercept; R^2 = 1 - SS_res/SS_tot.
// Throws on constant target or row count < cols + 2.
double r2_multi(const LatentMatrix& X, const std::vector<double>& y);

// Simple-regression R^2 (squared correlation); throws on constant y,
// returns 0 for constant x.
double r2_single(const std::vector<double>& x, const std::vector<double>& y);

struct Direction {
    std::string feature;        // associated target name
    std::vector<double> v;      // unit vector, latent_dim entries
    double projection_sd = 0;   // SD of centered latents projected on v
};

// First PLS component: v proportional to X^T y on centered data.
Direction pls_direction(const LatentMatrix& X, const std::vector<double>& y,
                        const std::string& name);

// Population SD of the centered projection onto unit vector v.
double projection_sd(const LatentMatrix& X, const std::vector<double>& v);

struct TraversalFamily {
    std::vector<double> multipliers;            // k entries
    std::vector<std::vector<double>> signals;   // k signals, raw bpm
};

// Evenly spaced multipliers in [-span, +span]; center is exactly 0 for odd k.
inline std::vector<double> traversal_multipliers(int steps, double span) {
    if (steps < 1) throw std::invalid_argument("traversal: steps must be >= 1");
    std::vector<double> m;
    if (steps == 1) {
        m.push_back(0.0);
        return m;
    }
    for (int i = 0; i < steps; ++i) m.push_back(span * (2.0 * i / (steps - 1) - 1.0));
    return m;
}

// decode maps a latent vector to a raw-bpm signal (the model's decoder in
// production, a stub in tests).
template <class DecodeFn>
TraversalFamily traverse_direction(DecodeFn&& decode, const LatentMatrix& X,
                                   const Direction& dir, int steps = 9,
                                   double span = 10.0) {
    if (static_cast<int>(dir.v.size()) != X.cols)
        throw std::invalid_argument("traverse_direction: direction size mismatch");
    TraversalFamily fam;
    fam.multipliers = traversal_multipliers(steps, span);
    for (double m : fam.multipliers) {
        std::vector<double> z = X.col_mean;
        for (int d = 0; d < X.cols; ++d) z[d] += m * dir.projection_sd * dir.v[d];
        fam.signals.push_back(decode(z));
    }
    return fam;
}

template <class DecodeFn>
TraversalFamily traverse_dimension(DecodeFn&& decode, const LatentMatrix& X, int dim,
                                   int steps = 9, double span = 5.0) {
    if (dim < 0 || dim >= X.cols)
        throw std::out_of_range("traverse_dimension: dim out of range");
    Direction d;
    d.feature = "dim_" + std::to_string(dim);
    d.v.assign(X.cols, 0.0);
    d.v[dim] = 1.0;
    d.projection_sd = X.col_sd[dim];
    return traverse_direction(decode, X, d, steps, span);
}

struct PcaResult {
    int dims = 0;
    std::vector<double> variances;     // non-increasing eigenvalues
    std::vector<double> components;    // dims x dims row-major, row = component
    std::vector<double> mean;
};

PcaResult pca(const LatentMatrix& X);

struct IcaComponent {
    std::vector<double> w_white;   // unmixing row in whitened space (unit)
    std::vector<double> mixing;    // latent-space mixing direction (unit)
    double negentropy = 0;
    bool converged = false;
};

struct IcaResult {
    int n_components = 0;          // may be clamped below the request
    std::vector<IcaComponent> components;  // ordered by negentropy, descending
    bool all_converged = true;
};

// Deflation FastICA with tanh contrast on whitened latents.
IcaResult ica(const LatentMatrix& X, int n_components, std::uint64_t seed,
              int max_iter = 500, double tol = 1e-6);

// ---------------------------------------------------------------------------
// R^2 panel (six analyses per feature)
// ---------------------------------------------------------------------------
struct R2PanelRow {
    std::string feature;
    // columns: features~latents, features~labels, features~scores,
    // features~|error|, labels~PLS projection, scores~PLS projection
    double value[6] = {0, 0, 0, 0, 0, 0};
    bool present[6] = {false, false, false, false, false, false};
};

struct R2Panel {
    std::vector<R2PanelRow> rows;  // one per feature, canonical order
    int n_rows_used = 0;           // segments with both latents and features
};

// `scores`/`labels` align with X rows; features join on (ctg_id, start_offset).
// Cells whose inputs are degenerate (constant target, zero covariance) are
// marked absent rather than failing the whole panel.
R2Panel r2_panel(const LatentMatrix& X, const std::vector<FeatureRow>& features,
                 const std::vector<double>& scores, const std::vector<int>& labels);

// ---------------------------------------------------------------------------
// CSV emitters
// ---------------------------------------------------------------------------
std::string r2_panel_csv(const R2Panel& p);
std::string traversal_csv(const TraversalFamily& f);
std::string pca_csv(const PcaResult& p);
std::string ica_csv(const IcaResult& r);
std::string directions_csv(const std::vector<Direction>& dirs);
std::string latents_csv(const LatentMatrix& X);

}  // namespace ctg
