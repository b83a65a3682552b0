#pragma once
// Dense 2-D arrays and a reverse-mode autodiff tape.
//
// Everything is templated on the scalar type: training runs in float, tests
// and gradient checks in double.  The tape is a flat vector of nodes in
// topological order (operands always precede results), each holding its value
// and a pullback closure; backward() just walks the vector in reverse.
// Scalars are 1x1 arrays, row vectors 1xC.

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ctg::ad {

template <class S>
struct Array {
    int rows = 0, cols = 0;
    std::vector<S> data;

    Array() = default;
    Array(int r, int c, S fill = S(0))
        : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {
        if (r < 0 || c < 0) throw std::invalid_argument("Array: negative shape");
    }
    static Array scalar(S v) {
        Array a(1, 1);
        a.data[0] = v;
        return a;
    }

    std::size_t size() const { return data.size(); }
    S& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    S at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
    S item() const {
        if (rows != 1 || cols != 1) throw std::logic_error("Array::item on non-scalar");
        return data[0];
    }
    bool same_shape(const Array& o) const { return rows == o.rows && cols == o.cols; }
};

template <class S>
bool all_finite(const Array<S>& a) {
    for (S v : a.data)
        if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
}

// y += x
template <class S>
void axpy_into(Array<S>& y, const Array<S>& x) {
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += x.data[i];
}

template <class S>
class Tape {
public:
    // When set, every op verifies its output is finite (tests keep this on;
    // the training loop relies on the exp/log/norm guards instead).
    void set_debug_checks(bool on) { debug_checks_ = on; }

    int size() const { return static_cast<int>(nodes_.size()); }

    void clear() { nodes_.clear(); }

    int leaf(Array<S> v, bool requires_grad = true) {
        return push(std::move(v), requires_grad, nullptr);
    }
    int constant(Array<S> v) { return leaf(std::move(v), false); }

    const Array<S>& val(int id) const { return nodes_[id].value; }

    const Array<S>& grad(int id) {
        ensure_grad(id);
        return nodes_[id].grad;
    }

    // ---- arithmetic ------------------------------------------------------

    int add(int a, int b) {
        check_same(a, b, "add");
        Array<S> out = nodes_[a].value;
        axpy_into(out, nodes_[b].value);
        return push_op(std::move(out), {a, b}, [this, a, b](int o) {
            const Array<S>& g = nodes_[o].grad;
            if (wants(a)) axpy_into(grad_buf(a), g);
            if (wants(b)) axpy_into(grad_buf(b), g);
        });
    }

    int sub(int a, int b) {
        check_same(a, b, "sub");
        Array<S> out = nodes_[a].value;
        for (std::size_t i = 0; i < out.data.size(); ++i)
            out.data[i] -= nodes_[b].value.data[i];
        return push_op(std::move(out), {a, b}, [this, a, b](int o) {
            const Array<S>& g = nodes_[o].grad;
            if (wants(a)) axpy_into(grad_buf(a), g);
            if (wants(b)) {
                Array<S>& gb = grad_buf(b);
                for (std::size_t i = 0; i < gb.data.size(); ++i) gb.data[i] -= g.data[i];
            }
        });
    }

    int mul(int a, int b) {  // elementwise
        check_same(a, b, "mul");
        Array<S> out = nodes_[a].value;
        for (std::size_t i = 0; i < out.data.size(); ++i)
            out.data[i] *= nodes_[b].value.data[i];
        return push_op(std::move(out), {a, b}, [this, a, b](int o) {
            const Array<S>& g = nodes_[o].grad;
            if (wants(a)) {
                Array<S>& ga = grad_buf(a);
                const Array<S>& vb = nodes_[b].value;
                for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += g.data[i] * vb.data[i];
            }
            if (wants(b)) {
                Array<S>& gb = grad_buf(b);
                const Array<S>& va = nodes_[a].value;
                for (std::size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += g.data[i] * va.data[i];
            }
        });
    }

    int scale(int a, S s) {
        Array<S> out = nodes_[a].value;
        for (S& v : out.data) v *= s;
        return push_op(std::move(out), {a}, [this, a, s](int o) {
            if (!wants(a)) return;
            const Array<S>& g = nodes_[o].grad;
            Array<S>& ga = grad_buf(a);
            for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += s * g.data[i];
        });
    }

    int shift(int a, S s) {  // add a constant to every element
        Array<S> out = nodes_[a].value;
        for (S& v : out.data) v += s;
        return push_op(std::move(out), {a}, [this, a](int o) {
            if (wants(a)) axpy_into(grad_buf(a), nodes_[o].grad);
        });
    }

    // ---- linear algebra ----------------------------------------------------

    int matmul(int a, int b) {
        const Array<S>& va = nodes_[a].value;
        const Array<S>& vb = nodes_[b].value;
        if (va.cols != vb.rows)
            throw std::invalid_argument("matmul: inner dimensions disagree");
        Array<S> out = mm(va, vb, false, false);
        return push_op(std::move(out), {a, b}, [this, a, b](int o) {
            const Array<S>& g = nodes_[o].grad;
            if (wants(a)) mm_acc(grad_buf(a), g, nodes_[b].value, false, true);
            if (wants(b)) mm_acc(grad_buf(b), nodes_[a].value, g, true, false);
        });
    }

    int transpose(int a) {
        const Array<S>& va = nodes_[a].value;
        Array<S> out(va.cols, va.rows);
        for (int r = 0; r < va.rows; ++r)
            for (int c = 0; c < va.cols; ++c) out.at(c, r) = va.at(r, c);
        return push_op(std::move(out), {a}, [this, a](int o) {
            if (!wants(a)) return;
            const Array<S>& g = nodes_[o].grad;
            Array<S>& ga = grad_buf(a);
            for (int r = 0; r < g.rows; ++r)
                for (int c = 0; c < g.cols; ++c) ga.at(c, r) += g.at(r, c);
        });
    }

    int add_rowvec(int a, int v) {  // broadcast 1xC over RxC
        const Array<S>& va = nodes_[a].value;
        const Array<S>& vv = nodes_[v].value;
        if (vv.rows != 1 || vv.cols != va.cols)
            throw std::invalid_argument("add_rowvec: vector shape mismatch");
        Array<S> out = va;
        for (int r = 0; r < out.rows; ++r)
            for (int c = 0; c < out.cols; ++c) out.at(r, c) += vv.data[c];
        return push_op(std::move(out), {a, v}, [this, a, v](int o) {
            const Array<S>& g = nodes_[o].grad;
            if (wants(a)) axpy_into(grad_buf(a), g);
            if (wants(v)) {
                Array<S>& gv = grad_buf(v);
                for (int r = 0; r < g.rows; ++r)
                    for (int c = 0; c < g.cols; ++c) gv.data[c] += g.at(r, c);
            }
        });
    }

    int mul_rowvec(int a, int v) {  // broadcast multiply 1xC over RxC
        const Array<S>& va = nodes_[a].value;
        const Array<S>& vv = nodes_[v].value;
        if (vv.rows != 1 || vv.cols != va.cols)
            throw std::invalid_argument("mul_rowvec: vector shape mismatch");
        Array<S> out = va;
        for (int r = 0; r < out.rows; ++r)
            for (int c = 0; c < out.cols; ++c) out.at(r, c) *= vv.data[c];
        return push_op(std::move(out), {a, v}, [this, a, v](int o) {
            const Array<S>& g = nodes_[o].grad;
            if (wants(a)) {
                Array<S>& ga = grad_buf(a);
                const Array<S>& vvv = nodes_[v].value;
                for (int r = 0; r < g.rows; ++r)
                    for (int c = 0; c < g.cols; ++c) ga.at(r, c) += g.at(r, c) * vvv.data[c];
            }
            if (wants(v)) {
                Array<S>& gv = grad_buf(v);
                const Array<S>& vaa = nodes_[a].value;
                for (int r = 0; r < g.rows; ++r)
                    for (int c = 0; c < g.cols; ++c) gv.data[c] += g.at(r, c) * vaa.at(r, c);
            }
        });
    }

    // ---- shape ops ---------------------------------------------------------

    int reshape(int a, int r, int c) {
        const Array<S>& va = nodes_[a].value;
        if (static_cast<std::size_t>(r) * c != va.size())
            throw std::invalid_argument("reshape: element count changed");
        Array<S> out = va;
        out.rows = r;
        out.cols = c;
        return push_op(std::move(out), {a}, [this, a](int o) {
            if (!wants(a)) return;
            Array<S>& ga = grad_buf(a);
            const Array<S>& g = nodes_[o].grad;
            for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += g.data[i];
        });
    }

    int concat_cols(int a, int b) {
        const Array<S>& va = nodes_[a].value;
        const Array<S>& vb = nodes_[b].value;
        if (va.rows != vb.rows)
            throw std::invalid_argument("concat_cols: row counts disagree");
        Array<S> out(va.rows, va.cols + vb.cols);
        for (int r = 0; r < va.rows; ++r) {
            for (int c = 0; c < va.cols; ++c) out.at(r, c) = va.at(r, c);
            for (int c = 0; c < vb.cols; ++c) out.at(r, va.cols + c) = vb.at(r, c);
        }
        return push_op(std::move(out), {a, b}, [this, a, b](int o) {
            const Array<S>& g = nodes_[o].grad;
            const int ca = nodes_[a].value.cols;
            if (wants(a)) {
                Array<S>& ga = grad_buf(a);
                for (int r = 0; r < ga.rows; ++r)
                    for (int c = 0; c < ga.cols; ++c) ga.at(r, c) += g.at(r, c);
            }
            if (wants(b)) {
                Array<S>& gb = grad_buf(b);
                for (int r = 0; r < gb.rows; ++r)
                    for (int c = 0; c < gb.cols; ++c) gb.at(r, c) += g.at(r, ca + c);
            }
        });
    }

    int slice_cols(int a, int c0, int c1) {
        const Array<S>& va = nodes_[a].value;
        if (c0 < 0 || c1 > va.cols || c0 >= c1)
            throw std::invalid_argument("slice_cols: bad range");
        Array<S> out(va.rows, c1 - c0);
        for (int r = 0; r < va.rows; ++r)
            for (int c = c0; c < c1; ++c) out.at(r, c - c0) = va.at(r, c);
        return push_op(std::move(out), {a}, [this, a, c0](int o) {
            if (!wants(a)) return;
            const Array<S>& g = nodes_[o].grad;
            Array<S>& ga = grad_buf(a);
            for (int r = 0; r < g.rows; ++r)
                for (int c = 0; c < g.cols; ++c) ga.at(r, c0 + c) += g.at(r, c);
        });
    }

    int slice_rows(int a, int r0, int r1) {
        const Array<S>& va = nodes_[a].value;
        if (r0 < 0 || r1 > va.rows || r0 >= r1)
            throw std::invalid_argument("slice_rows: bad range");
        Array<S> out(r1 - r0, va.cols);
        for (int r = r0; r < r1; ++r)
            for (int c = 0; c < va.cols; ++c) out.at(r - r0, c) = va.at(r, c);
        return push_op(std::move(out), {a}, [this, a, r0](int o) {
            if (!wants(a)) return;
            const Array<S>& g = nodes_[o].grad;
            Array<S>& ga = grad_buf(a);
            for (int r = 0; r < g.rows; ++r)
                for (int c = 0; c < g.cols; ++c) ga.at(r0 + r, c) += g.at(r, c);
        });
    }

    // ---- elementwise nonlinearities -----------------------------------------

    int exp_(int a) {
        const Array<S>& va = nodes_[a].value;
        Array<S> out(va.rows, va.cols);
        for (std::size_t i = 0; i < va.data.size(); ++i) {
            if (va.data[i] > S(700)) throw std::runtime_error("exp: overflow");
            out.data[i] = std::exp(va.data[i]);
        }
        return push_op(std::move(out), {a}, [this, a](int o) {
            if (!wants(a)) return;
            const Array<S>& g = nodes_[o].grad;
            const Array<S>& y = nodes_[o].value;
            Array<S>& ga = grad_buf(a);
            for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += g.data[i] * y.data[i];
        });
    }

    int log_(int a) {
        const Array<S>& va = nodes_[a].value;
        Array<S> out(va.rows, va.cols);
        for (std::size_t i = 0; i < va.data.size(); ++i) {
            if (!(va.data[i] > S(0))) throw std::runtime_error("log: domain error");
            out.data[i] = std::log(va.data[i]);
        }
        return push_op(std::move(out), {a}, [this, a](int o) {
            if (!wants(a)) return;
            const Array<S>& g = nodes_[o].grad;
            const Array<S>& x = nodes_[a].value;
            Array<S>& ga = grad_buf(a);
            for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += g.data[i] / x.data[i];
        });
    }

    int tanh_(int a) {
        const Array<S>& va = nodes_[a].value;
        Array<S> out(va.rows, va.cols);
        for (std::size_t i = 0; i < va.data.size(); ++i) out.data[i] = std::tanh(va.data[i]);
        return push_op(std::move(out), {a}, [this, a](int o) {
            if (!wants(a)) return;
            const Array<S>& g = nodes_[o].grad;
            const Array<S>& y = nodes_[o].value;
            Array<S>& ga = grad_buf(a);
            for (std::size_t i = 0; i < ga.data.size(); ++i)
                ga.data[i] += g.data[i] * (S(1) - y.data[i] * y.data[i]);
        });
    }

    int relu(int a) {
        const Array<S>& va = nodes_[a].value;
        Array<S> out(va.rows, va.cols);
        for (std::size_t i = 0; i < va.data.size(); ++i)
            out.data[i] = va.data[i] > S(0) ? va.data[i] : S(0);
        return push_op(std::move(out), {a}, [this, a](int o) {
            if (!wants(a)) return;
            const Array<S>& g = nodes_[o].grad;
            const Array<S>& x = nodes_[a].value;
            Array<S>& ga = grad_buf(a);
            for (std::size_t i = 0; i < ga.data.size(); ++i)
                if (x.data[i] > S(0)) ga.data[i] += g.data[i];
        });
    }

    int sigmoid(int a) {
        const Array<S>& va = nodes_[a].value;
        Array<S> out(va.rows, va.cols);
        for (std::size_t i = 0; i < va.data.size(); ++i) {
            const S x = va.data[i];
            out.data[i] = x >= S(0) ? S(1) / (S(1) + std::exp(-x))
                                    : std::exp(x) / (S(1) + std::exp(x));
        }
        return push_op(std::move(out), {a}, [this, a](int o) {
            if (!wants(a)) return;
            const Array<S>& g = nodes_[o].grad;
            const Array<S>& y = nodes_[o].value;
            Array<S>& ga = grad_buf(a);
            for (std::size_t i = 0; i < ga.data.size(); ++i)
                ga.data[i] += g.data[i] * y.data[i] * (S(1) - y.data[i]);
        });
    }

    // Gradient is passed through strictly inside (lo, hi) and zero at/beyond
    // the clamp boundaries.
    int clamp(int a, S lo, S hi) {
        const Array<S>& va = nodes_[a].value;
        Array<S> out(va.rows, va.cols);
        for (std::size_t i = 0; i < va.data.size(); ++i)
            out.data[i] = va.data[i] < lo ? lo : (va.data[i] > hi ? hi : va.data[i]);
        return push_op(std::move(out), {a}, [this, a, lo, hi](int o) {
            if (!wants(a)) return;
            const Array<S>& g = nodes_[o].grad;
            const Array<S>& x = nodes_[a].value;
            Array<S>& ga = grad_buf(a);
            for (std::size_t i = 0; i < ga.data.size(); ++i)
                if (x.data[i] > lo && x.data[i] < hi) ga.data[i] += g.data[i];
        });
    }

    // ---- row-structured ops --------------------------------------------------

    int softmax_rows(int a) {
        const Array<S>& va = nodes_[a].value;
        Array<S> out(va.rows, va.cols);
        for (int r = 0; r < va.rows; ++r) {
            S mx = va.at(r, 0);
            for (int c = 1; c < va.cols; ++c) mx = std::max(mx, va.at(r, c));
            S sum = S(0);
            for (int c = 0; c < va.cols; ++c) {
                out.at(r, c) = std::exp(va.at(r, c) - mx);
                sum += out.at(r, c);
            }
            for (int c = 0; c < va.cols; ++c) out.at(r, c) /= sum;
        }
        return push_op(std::move(out), {a}, [this, a](int o) {
            if (!wants(a)) return;
            const Array<S>& g = nodes_[o].grad;
            const Array<S>& y = nodes_[o].value;
            Array<S>& ga = grad_buf(a);
            for (int r = 0; r < g.rows; ++r) {
                S dot = S(0);
                for (int c = 0; c < g.cols; ++c) dot += g.at(r, c) * y.at(r, c);
                for (int c = 0; c < g.cols; ++c)
                    ga.at(r, c) += y.at(r, c) * (g.at(r, c) - dot);
            }
        });
    }

    int logsumexp_rows(int a) {  // RxC -> Rx1
        const Array<S>& va = nodes_[a].value;
        Array<S> out(va.rows, 1);
        for (int r = 0; r < va.rows; ++r) {
            S mx = va.at(r, 0);
            for (int c = 1; c < va.cols; ++c) mx = std::max(mx, va.at(r, c));
            S sum = S(0);
            for (int c = 0; c < va.cols; ++c) sum += std::exp(va.at(r, c) - mx);
            out.at(r, 0) = mx + std::log(sum);
        }
        return push_op(std::move(out), {a}, [this, a](int o) {
            if (!wants(a)) return;
            const Array<S>& g = nodes_[o].grad;
            const Array<S>& x = nodes_[a].value;
            const Array<S>& y = nodes_[o].value;
            Array<S>& ga = grad_buf(a);
            for (int r = 0; r < x.rows; ++r)
                for (int c = 0; c < x.cols; ++c)
                    ga.at(r, c) += g.at(r, 0) * std::exp(x.at(r, c) - y.at(r, 0));
        });
    }

    // Row-wise standardisation with population variance; eps = 0 gives exact
    // unit variance (and throws on constant rows).
    int layer_norm_rows(int a, S eps) {
        const Array<S>& va = nodes_[a].value;
        const int C = va.cols;
        Array<S> out(va.rows, C);
        Array<S> inv_sd(va.rows, 1);
        for (int r = 0; r < va.rows; ++r) {
            S mean = S(0);
            for (int c = 0; c < C; ++c) mean += va.at(r, c);
            mean /= S(C);
            S var = S(0);
            for (int c = 0; c < C; ++c) {
                const S d = va.at(r, c) - mean;
                var += d * d;
            }
            var /= S(C);
            const S denom2 = var + eps;
            if (!(denom2 > S(0)))
                throw std::runtime_error("layer_norm: zero variance row");
            const S isd = S(1) / std::sqrt(denom2);
            inv_sd.at(r, 0) = isd;
            for (int c = 0; c < C; ++c) out.at(r, c) = (va.at(r, c) - mean) * isd;
        }
        return push_op(std::move(out), {a}, [this, a, inv_sd](int o) {
            if (!wants(a)) return;
            const Array<S>& g = nodes_[o].grad;
            const Array<S>& y = nodes_[o].value;
            Array<S>& ga = grad_buf(a);
            const int C = y.cols;
            for (int r = 0; r < y.rows; ++r) {
                S gmean = S(0), gymean = S(0);
                for (int c = 0; c < C; ++c) {
                    gmean += g.at(r, c);
                    gymean += g.at(r, c) * y.at(r, c);
                }
                gmean /= S(C);
                gymean /= S(C);
                const S isd = inv_sd.at(r, 0);
                for (int c = 0; c < C; ++c)
                    ga.at(r, c) += isd * (g.at(r, c) - gmean - y.at(r, c) * gymean);
            }
        });
    }

    // ---- reductions -----------------------------------------------------------

    int sum_all(int a) {
        S s = S(0);
        for (S v : nodes_[a].value.data) s += v;
        return push_op(Array<S>::scalar(s), {a}, [this, a](int o) {
            if (!wants(a)) return;
            const S g = nodes_[o].grad.data[0];
            Array<S>& ga = grad_buf(a);
            for (S& v : ga.data) v += g;
        });
    }

    int mean_all(int a) {
        const std::size_t n = nodes_[a].value.size();
        S s = S(0);
        for (S v : nodes_[a].value.data) s += v;
        s /= S(n);
        return push_op(Array<S>::scalar(s), {a}, [this, a, n](int o) {
            if (!wants(a)) return;
            const S g = nodes_[o].grad.data[0] / S(n);
            Array<S>& ga = grad_buf(a);
            for (S& v : ga.data) v += g;
        });
    }

    int mean_rows(int a) {  // RxC -> 1xC, mean over rows
        const Array<S>& va = nodes_[a].value;
        Array<S> out(1, va.cols);
        for (int r = 0; r < va.rows; ++r)
            for (int c = 0; c < va.cols; ++c) out.data[c] += va.at(r, c);
        for (S& v : out.data) v /= S(va.rows);
        return push_op(std::move(out), {a}, [this, a](int o) {
            if (!wants(a)) return;
            const Array<S>& g = nodes_[o].grad;
            Array<S>& ga = grad_buf(a);
            const S inv = S(1) / S(ga.rows);
            for (int r = 0; r < ga.rows; ++r)
                for (int c = 0; c < ga.cols; ++c) ga.at(r, c) += g.data[c] * inv;
        });
    }

    // ---- backward --------------------------------------------------------------

    void zero_grads() {
        for (auto& n : nodes_) n.grad.data.clear();
    }

    void backward(int root) {
        if (nodes_[root].value.rows != 1 || nodes_[root].value.cols != 1)
            throw std::logic_error("backward: root must be scalar");
        zero_grads();
        ensure_grad(root).data[0] = S(1);
        run_pullbacks(root);
    }

    // Seed several nodes at once (used when a loss is assembled outside this
    // tape); seeds accumulate into any existing grads from earlier calls.
    void backward_seeded(const std::vector<std::pair<int, Array<S>>>& seeds) {
        int hi = -1;
        for (const auto& [id, seed] : seeds) {
            if (!nodes_[id].value.same_shape(seed))
                throw std::invalid_argument("backward_seeded: seed shape mismatch");
            axpy_into(ensure_grad(id), seed);
            hi = std::max(hi, id);
        }
        if (hi >= 0) run_pullbacks(hi);
    }

private:
    struct Node {
        Array<S> value;
        Array<S> grad;  // empty until touched
        bool requires_grad = false;
        std::function<void(int)> pull;  // pullback; argument = own node id
    };

    std::vector<Node> nodes_;
    bool debug_checks_ = false;

    bool wants(int id) const { return nodes_[id].requires_grad; }

    Array<S>& ensure_grad(int id) {
        Node& n = nodes_[id];
        if (n.grad.data.empty()) {
            n.grad = Array<S>(n.value.rows, n.value.cols, S(0));
        }
        return n.grad;
    }
    Array<S>& grad_buf(int id) { return ensure_grad(id); }

    int push(Array<S> v, bool requires_grad, std::function<void(int)> pull) {
        if (debug_checks_ && !all_finite(v))
            throw std::runtime_error("tape: non-finite value produced");
        nodes_.push_back(Node{std::move(v), {}, requires_grad, std::move(pull)});
        return static_cast<int>(nodes_.size()) - 1;
    }

    int push_op(Array<S> v, std::initializer_list<int> parents,
                std::function<void(int)> pull) {
        bool rg = false;
        for (int p : parents) rg = rg || nodes_[p].requires_grad;
        return push(std::move(v), rg, rg ? std::move(pull) : nullptr);
    }

    void run_pullbacks(int from) {
        for (int i = from; i >= 0; --i) {
            Node& n = nodes_[i];
            if (n.pull && !n.grad.data.empty()) n.pull(i);
        }
    }

    void check_same(int a, int b, const char* op) const {
        if (!nodes_[a].value.same_shape(nodes_[b].value))
            throw std::invalid_argument(std::string(op) + ": shape mismatch");
    }

    // C (+)= A(^T) * B(^T); i-k-j loop order keeps the inner loop contiguous.
    static Array<S> mm(const Array<S>& a, const Array<S>& b, bool ta, bool tb) {
        const int m = ta ? a.cols : a.rows;
        const int k = ta ? a.rows : a.cols;
        const int n = tb ? b.rows : b.cols;
        Array<S> out(m, n, S(0));
        mm_into(out, a, b, ta, tb, m, k, n);
        return out;
    }
    static void mm_acc(Array<S>& out, const Array<S>& a, const Array<S>& b, bool ta, bool tb) {
        const int m = ta ? a.cols : a.rows;
        const int k = ta ? a.rows : a.cols;
        const int n = tb ? b.rows : b.cols;
        mm_into(out, a, b, ta, tb, m, k, n);
    }
    static void mm_into(Array<S>& out, const Array<S>& a, const Array<S>& b,
                        bool ta, bool tb, int m, int k, int n) {
        for (int i = 0; i < m; ++i) {
            S* orow = &out.data[static_cast<std::size_t>(i) * n];
            for (int kk = 0; kk < k; ++kk) {
                const S av = ta ? a.at(kk, i) : a.at(i, kk);
                if (av == S(0)) continue;
                if (!tb) {
                    const S* brow = &b.data[static_cast<std::size_t>(kk) * n];
                    for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
                } else {
                    for (int j = 0; j < n; ++j) orow[j] += av * b.at(j, kk);
                }
            }
        }
    }
};

// ---------------------------------------------------------------------------
// Adam with bias correction.
// ---------------------------------------------------------------------------
template <class S>
struct AdamState {
    std::vector<Array<S>> m, v;
    std::int64_t t = 0;

    void init_like(const std::vector<Array<S>>& params) {
        m.clear();
        v.clear();
        for (const auto& p : params) {
            m.emplace_back(p.rows, p.cols, S(0));
            v.emplace_back(p.rows, p.cols, S(0));
        }
        t = 0;
    }
};

template <class S>
void adam_step(std::vector<Array<S>>& params, const std::vector<Array<S>>& grads,
               AdamState<S>& state, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw std::invalid_argument("adam_step: size mismatch");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t p = 0; p < params.size(); ++p) {
        Array<S>& w = params[p];
        const Array<S>& g = grads[p];
        Array<S>& m = state.m[p];
        Array<S>& v = state.v[p];
        for (std::size_t i = 0; i < w.data.size(); ++i) {
            const double gi = static_cast<double>(g.data[i]);
            const double mi = beta1 * static_cast<double>(m.data[i]) + (1.0 - beta1) * gi;
            const double vi = beta2 * static_cast<double>(v.data[i]) + (1.0 - beta2) * gi * gi;
            m.data[i] = static_cast<S>(mi);
            v.data[i] = static_cast<S>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            w.data[i] -= static_cast<S>(lr * mhat / (std::sqrt(vhat) + eps));
        }
    }
}

}  // namespace ctg::ad
