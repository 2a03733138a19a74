#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "contagion/errors.hpp"
#include "contagion/matrix.hpp"

namespace contagion::ad {

/// Reverse-mode tape over dense double matrices. Ops evaluate eagerly and
/// record a pullback; Tape::backward sweeps nodes in reverse creation
/// order (creation order is topological by construction).
class Tape;

struct Node {
    Matrix val;                    // owned value (computed nodes)
    const Matrix* external = nullptr; // leaves alias parameter storage
    Matrix grad;                   // allocated on first touch
    bool needs_grad = false;
    std::function<void(Node&)> backward;

    const Matrix& value() const { return external ? *external : val; }
    bool has_grad() const { return grad.rows > 0; }
    Matrix& ensure_grad() {
        if (grad.rows == 0) grad = Matrix::zeros(value().rows, value().cols);
        return grad;
    }
};

class Var {
public:
    Var() = default;
    Var(Node* n) : node_(n) {}

    const Matrix& value() const { return node_->value(); }
    const Matrix& grad() const { return node_->grad; }
    int rows() const { return node_->value().rows; }
    int cols() const { return node_->value().cols; }
    double scalar() const {
        if (rows() != 1 || cols() != 1) throw DimensionMismatch("scalar() on non-1x1 value");
        return value()(0, 0);
    }
    bool defined() const { return node_ != nullptr; }
    Node* node() const { return node_; }

private:
    Node* node_ = nullptr;
};

class Tape {
public:
    Var leaf(const Matrix& storage, bool needs_grad = true) {
        Node* n = alloc();
        n->external = &storage;
        n->needs_grad = needs_grad;
        return Var(n);
    }

    Var constant(Matrix m) {
        Node* n = alloc();
        n->val = std::move(m);
        n->needs_grad = false;
        return Var(n);
    }

    Node* alloc() {
        nodes_.push_back(std::make_unique<Node>());
        return nodes_.back().get();
    }

    /// Seeds d(root)/d(root) = 1 and propagates to every reachable leaf.
    void backward(const Var& root) {
        if (root.rows() != 1 || root.cols() != 1)
            throw DimensionMismatch("backward root must be a scalar");
        root.node()->ensure_grad()(0, 0) += 1.0;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            Node& n = **it;
            if (n.has_grad() && n.backward) n.backward(n);
        }
    }

    std::size_t size() const { return nodes_.size(); }

private:
    std::vector<std::unique_ptr<Node>> nodes_;
};

namespace detail {

inline Node* make(Tape& t, Matrix val, const std::vector<Node*>& parents,
                  std::function<void(Node&)> backward) {
    Node* n = t.alloc();
    n->val = std::move(val);
    n->needs_grad = false;
    for (Node* p : parents) n->needs_grad = n->needs_grad || p->needs_grad;
    if (n->needs_grad) n->backward = std::move(backward);
    return n;
}

} // namespace detail

// --- linear algebra ---------------------------------------------------------

inline Var matmul(Tape& t, Var a, Var b) {
    Matrix c = contagion::matmul(a.value(), b.value());
    Node *an = a.node(), *bn = b.node();
    return detail::make(t, std::move(c), {an, bn}, [an, bn](Node& n) {
        if (an->needs_grad) axpy(an->ensure_grad(), 1.0, matmul_nt(n.grad, bn->value()));
        if (bn->needs_grad) axpy(bn->ensure_grad(), 1.0, matmul_tn(an->value(), n.grad));
    });
}

/// a * b^T
inline Var matmul_nt(Tape& t, Var a, Var b) {
    Matrix c = contagion::matmul_nt(a.value(), b.value());
    Node *an = a.node(), *bn = b.node();
    return detail::make(t, std::move(c), {an, bn}, [an, bn](Node& n) {
        if (an->needs_grad) axpy(an->ensure_grad(), 1.0, contagion::matmul(n.grad, bn->value()));
        if (bn->needs_grad) axpy(bn->ensure_grad(), 1.0, matmul_tn(n.grad, an->value()));
    });
}

/// K * x with K constant (pooling / aggregation matrices).
inline Var lmul_const(Tape& t, const Matrix& K, Var x) {
    Matrix c = contagion::matmul(K, x.value());
    Node* xn = x.node();
    Matrix k = K; // keep a copy alive inside the pullback
    return detail::make(t, std::move(c), {xn}, [xn, k = std::move(k)](Node& n) {
        if (xn->needs_grad) axpy(xn->ensure_grad(), 1.0, matmul_tn(k, n.grad));
    });
}

inline Var add(Tape& t, Var a, Var b) {
    if (!a.value().same_shape(b.value())) throw DimensionMismatch("add shapes");
    Matrix c = a.value();
    axpy(c, 1.0, b.value());
    Node *an = a.node(), *bn = b.node();
    return detail::make(t, std::move(c), {an, bn}, [an, bn](Node& n) {
        if (an->needs_grad) axpy(an->ensure_grad(), 1.0, n.grad);
        if (bn->needs_grad) axpy(bn->ensure_grad(), 1.0, n.grad);
    });
}

inline Var sub(Tape& t, Var a, Var b) {
    if (!a.value().same_shape(b.value())) throw DimensionMismatch("sub shapes");
    Matrix c = a.value();
    axpy(c, -1.0, b.value());
    Node *an = a.node(), *bn = b.node();
    return detail::make(t, std::move(c), {an, bn}, [an, bn](Node& n) {
        if (an->needs_grad) axpy(an->ensure_grad(), 1.0, n.grad);
        if (bn->needs_grad) axpy(bn->ensure_grad(), -1.0, n.grad);
    });
}

inline Var add_n(Tape& t, const std::vector<Var>& xs) {
    if (xs.empty()) throw EmptyInput("add_n of zero terms");
    Matrix c = xs[0].value();
    for (std::size_t i = 1; i < xs.size(); ++i) axpy(c, 1.0, xs[i].value());
    std::vector<Node*> parents;
    parents.reserve(xs.size());
    for (const Var& v : xs) parents.push_back(v.node());
    return detail::make(t, std::move(c), parents, [parents](Node& n) {
        for (Node* p : parents)
            if (p->needs_grad) axpy(p->ensure_grad(), 1.0, n.grad);
    });
}

inline Var scale(Tape& t, Var a, double s) {
    Matrix c = a.value();
    for (double& x : c.a) x *= s;
    Node* an = a.node();
    return detail::make(t, std::move(c), {an}, [an, s](Node& n) {
        if (an->needs_grad) axpy(an->ensure_grad(), s, n.grad);
    });
}

/// Broadcast-add a 1 x cols row vector to every row.
inline Var add_rowvec(Tape& t, Var a, Var b) {
    if (b.rows() != 1 || b.cols() != a.cols()) throw DimensionMismatch("add_rowvec shapes");
    Matrix c = a.value();
    for (int i = 0; i < c.rows; ++i)
        for (int j = 0; j < c.cols; ++j) c(i, j) += b.value()(0, j);
    Node *an = a.node(), *bn = b.node();
    return detail::make(t, std::move(c), {an, bn}, [an, bn](Node& n) {
        if (an->needs_grad) axpy(an->ensure_grad(), 1.0, n.grad);
        if (bn->needs_grad) {
            Matrix& g = bn->ensure_grad();
            for (int i = 0; i < n.grad.rows; ++i)
                for (int j = 0; j < n.grad.cols; ++j) g(0, j) += n.grad(i, j);
        }
    });
}

/// Elementwise (Hadamard) product.
inline Var mul(Tape& t, Var a, Var b) {
    if (!a.value().same_shape(b.value())) throw DimensionMismatch("mul shapes");
    Matrix c = a.value();
    for (std::size_t i = 0; i < c.a.size(); ++i) c.a[i] *= b.value().a[i];
    Node *an = a.node(), *bn = b.node();
    return detail::make(t, std::move(c), {an, bn}, [an, bn](Node& n) {
        if (an->needs_grad) {
            Matrix& g = an->ensure_grad();
            for (std::size_t i = 0; i < g.a.size(); ++i) g.a[i] += n.grad.a[i] * bn->value().a[i];
        }
        if (bn->needs_grad) {
            Matrix& g = bn->ensure_grad();
            for (std::size_t i = 0; i < g.a.size(); ++i) g.a[i] += n.grad.a[i] * an->value().a[i];
        }
    });
}

/// y = a + coeff * s broadcast over every element (s is 1x1).
inline Var add_scalar_bcast(Tape& t, Var a, Var s, double coeff) {
    if (s.rows() != 1 || s.cols() != 1) throw DimensionMismatch("add_scalar_bcast scalar");
    const double sv = coeff * s.value()(0, 0);
    Matrix c = a.value();
    for (double& x : c.a) x += sv;
    Node *an = a.node(), *sn = s.node();
    return detail::make(t, std::move(c), {an, sn}, [an, sn, coeff](Node& n) {
        if (an->needs_grad) axpy(an->ensure_grad(), 1.0, n.grad);
        if (sn->needs_grad) {
            double acc = 0.0;
            for (double g : n.grad.a) acc += g;
            sn->ensure_grad()(0, 0) += coeff * acc;
        }
    });
}

/// Elementwise multiply by a 1x1 scalar variable.
inline Var scalar_mul(Tape& t, Var a, Var s) {
    if (s.rows() != 1 || s.cols() != 1) throw DimensionMismatch("scalar_mul scale");
    const double sv = s.value()(0, 0);
    Matrix c = a.value();
    for (double& x : c.a) x *= sv;
    Node *an = a.node(), *sn = s.node();
    return detail::make(t, std::move(c), {an, sn}, [an, sn, sv](Node& n) {
        if (an->needs_grad) axpy(an->ensure_grad(), sv, n.grad);
        if (sn->needs_grad) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n.grad.a.size(); ++i) acc += n.grad.a[i] * an->value().a[i];
            sn->ensure_grad()(0, 0) += acc;
        }
    });
}

// --- nonlinearities ----------------------------------------------------------

inline Var row_softmax(Tape& t, Var a) {
    Matrix y = a.value();
    for (int i = 0; i < y.rows; ++i) {
        double mx = y(i, 0);
        for (int j = 1; j < y.cols; ++j) mx = std::max(mx, y(i, j));
        double sum = 0.0;
        for (int j = 0; j < y.cols; ++j) {
            y(i, j) = std::exp(y(i, j) - mx);
            sum += y(i, j);
        }
        for (int j = 0; j < y.cols; ++j) y(i, j) /= sum;
    }
    Node* an = a.node();
    return detail::make(t, std::move(y), {an}, [an](Node& n) {
        if (!an->needs_grad) return;
        Matrix& g = an->ensure_grad();
        for (int i = 0; i < n.val.rows; ++i) {
            double dot = 0.0;
            for (int j = 0; j < n.val.cols; ++j) dot += n.grad(i, j) * n.val(i, j);
            for (int j = 0; j < n.val.cols; ++j)
                g(i, j) += n.val(i, j) * (n.grad(i, j) - dot);
        }
    });
}

inline double softplus_scalar(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline Var softplus(Tape& t, Var a) {
    Matrix y = a.value();
    for (double& x : y.a) x = softplus_scalar(x);
    Node* an = a.node();
    return detail::make(t, std::move(y), {an}, [an](Node& n) {
        if (!an->needs_grad) return;
        Matrix& g = an->ensure_grad();
        for (std::size_t i = 0; i < g.a.size(); ++i) {
            const double x = an->value().a[i];
            g.a[i] += n.grad.a[i] / (1.0 + std::exp(-x));
        }
    });
}

inline Var tanh_v(Tape& t, Var a) {
    Matrix y = a.value();
    for (double& x : y.a) x = std::tanh(x);
    Node* an = a.node();
    return detail::make(t, std::move(y), {an}, [an](Node& n) {
        if (!an->needs_grad) return;
        Matrix& g = an->ensure_grad();
        for (std::size_t i = 0; i < g.a.size(); ++i)
            g.a[i] += n.grad.a[i] * (1.0 - n.val.a[i] * n.val.a[i]);
    });
}

inline Var sigmoid_v(Tape& t, Var a) {
    Matrix y = a.value();
    for (double& x : y.a) x = 1.0 / (1.0 + std::exp(-x));
    Node* an = a.node();
    return detail::make(t, std::move(y), {an}, [an](Node& n) {
        if (!an->needs_grad) return;
        Matrix& g = an->ensure_grad();
        for (std::size_t i = 0; i < g.a.size(); ++i)
            g.a[i] += n.grad.a[i] * n.val.a[i] * (1.0 - n.val.a[i]);
    });
}

/// Rows scaled to unit L2 norm (cosine similarity building block).
inline Var row_l2_normalize(Tape& t, Var a) {
    constexpr double kEps = 1e-12;
    Matrix y = a.value();
    std::vector<double> norms(static_cast<std::size_t>(y.rows));
    for (int i = 0; i < y.rows; ++i) {
        double ss = kEps;
        for (int j = 0; j < y.cols; ++j) ss += y(i, j) * y(i, j);
        norms[static_cast<std::size_t>(i)] = std::sqrt(ss);
        for (int j = 0; j < y.cols; ++j) y(i, j) /= norms[static_cast<std::size_t>(i)];
    }
    Node* an = a.node();
    return detail::make(t, std::move(y), {an}, [an, norms = std::move(norms)](Node& n) {
        if (!an->needs_grad) return;
        Matrix& g = an->ensure_grad();
        for (int i = 0; i < n.val.rows; ++i) {
            double dot = 0.0;
            for (int j = 0; j < n.val.cols; ++j) dot += n.grad(i, j) * n.val(i, j);
            const double inv = 1.0 / norms[static_cast<std::size_t>(i)];
            for (int j = 0; j < n.val.cols; ++j)
                g(i, j) += (n.grad(i, j) - n.val(i, j) * dot) * inv;
        }
    });
}

// --- shape ops ---------------------------------------------------------------

inline Var gather_rows(Tape& t, Var emb, const std::vector<int>& ids) {
    const Matrix& E = emb.value();
    Matrix y(static_cast<int>(ids.size()), E.cols);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= E.rows)
            throw LabelOutOfRange("row id " + std::to_string(ids[i]));
        for (int j = 0; j < E.cols; ++j) y(static_cast<int>(i), j) = E(ids[i], j);
    }
    Node* en = emb.node();
    return detail::make(t, std::move(y), {en}, [en, ids](Node& n) {
        if (!en->needs_grad) return;
        Matrix& g = en->ensure_grad();
        for (std::size_t i = 0; i < ids.size(); ++i)
            for (int j = 0; j < n.grad.cols; ++j)
                g(ids[i], j) += n.grad(static_cast<int>(i), j);
    });
}

inline Var concat_rows(Tape& t, Var a, Var b) {
    if (a.cols() != b.cols()) throw DimensionMismatch("concat_rows widths");
    Matrix y(a.rows() + b.rows(), a.cols());
    std::copy(a.value().a.begin(), a.value().a.end(), y.a.begin());
    std::copy(b.value().a.begin(), b.value().a.end(),
              y.a.begin() + static_cast<std::ptrdiff_t>(a.value().size()));
    Node *an = a.node(), *bn = b.node();
    const int ar = a.rows();
    return detail::make(t, std::move(y), {an, bn}, [an, bn, ar](Node& n) {
        if (an->needs_grad) {
            Matrix& g = an->ensure_grad();
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < g.cols; ++j) g(i, j) += n.grad(i, j);
        }
        if (bn->needs_grad) {
            Matrix& g = bn->ensure_grad();
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < g.cols; ++j) g(i, j) += n.grad(ar + i, j);
        }
    });
}

inline Var concat_cols(Tape& t, const std::vector<Var>& parts) {
    if (parts.empty()) throw EmptyInput("concat_cols of zero parts");
    int total = 0;
    for (const Var& p : parts) {
        if (p.rows() != parts[0].rows()) throw DimensionMismatch("concat_cols heights");
        total += p.cols();
    }
    Matrix y(parts[0].rows(), total);
    int off = 0;
    for (const Var& p : parts) {
        for (int i = 0; i < p.rows(); ++i)
            for (int j = 0; j < p.cols(); ++j) y(i, off + j) = p.value()(i, j);
        off += p.cols();
    }
    std::vector<Node*> parents;
    parents.reserve(parts.size());
    for (const Var& p : parts) parents.push_back(p.node());
    return detail::make(t, std::move(y), parents, [parents](Node& n) {
        int off = 0;
        for (Node* p : parents) {
            const int pc = p->value().cols;
            if (p->needs_grad) {
                Matrix& g = p->ensure_grad();
                for (int i = 0; i < g.rows; ++i)
                    for (int j = 0; j < pc; ++j) g(i, j) += n.grad(i, off + j);
            }
            off += pc;
        }
    });
}

inline Var slice_rows(Tape& t, Var a, int r0, int r1) {
    if (r0 < 0 || r1 > a.rows() || r0 >= r1) throw DimensionMismatch("slice_rows range");
    Matrix y(r1 - r0, a.cols());
    for (int i = r0; i < r1; ++i)
        for (int j = 0; j < a.cols(); ++j) y(i - r0, j) = a.value()(i, j);
    Node* an = a.node();
    return detail::make(t, std::move(y), {an}, [an, r0](Node& n) {
        if (!an->needs_grad) return;
        Matrix& g = an->ensure_grad();
        for (int i = 0; i < n.grad.rows; ++i)
            for (int j = 0; j < n.grad.cols; ++j) g(r0 + i, j) += n.grad(i, j);
    });
}

inline Var slice_cols(Tape& t, Var a, int c0, int c1) {
    if (c0 < 0 || c1 > a.cols() || c0 >= c1) throw DimensionMismatch("slice_cols range");
    Matrix y(a.rows(), c1 - c0);
    for (int i = 0; i < a.rows(); ++i)
        for (int j = c0; j < c1; ++j) y(i, j - c0) = a.value()(i, j);
    Node* an = a.node();
    return detail::make(t, std::move(y), {an}, [an, c0](Node& n) {
        if (!an->needs_grad) return;
        Matrix& g = an->ensure_grad();
        for (int i = 0; i < n.grad.rows; ++i)
            for (int j = 0; j < n.grad.cols; ++j) g(i, c0 + j) += n.grad(i, j);
    });
}

// --- reductions and scalar glue ---------------------------------------------

/// Column means: R x C -> 1 x C.
inline Var col_mean(Tape& t, Var a) {
    const Matrix& x = a.value();
    Matrix y(1, x.cols);
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < x.cols; ++j) y(0, j) += x(i, j);
    for (int j = 0; j < x.cols; ++j) y(0, j) /= x.rows;
    Node* an = a.node();
    const double inv = 1.0 / x.rows;
    return detail::make(t, std::move(y), {an}, [an, inv](Node& n) {
        if (!an->needs_grad) return;
        Matrix& g = an->ensure_grad();
        for (int i = 0; i < g.rows; ++i)
            for (int j = 0; j < g.cols; ++j) g(i, j) += n.grad(0, j) * inv;
    });
}

inline Var mean_all(Tape& t, Var a) {
    const Matrix& x = a.value();
    double s = 0.0;
    for (double v : x.a) s += v;
    Matrix y(1, 1);
    y(0, 0) = s / static_cast<double>(x.size());
    Node* an = a.node();
    const double inv = 1.0 / static_cast<double>(x.size());
    return detail::make(t, std::move(y), {an}, [an, inv](Node& n) {
        if (!an->needs_grad) return;
        Matrix& g = an->ensure_grad();
        const double gout = n.grad(0, 0) * inv;
        for (double& v : g.a) v += gout;
    });
}

inline Var cell(Tape& t, Var a, int i, int j) {
    if (i < 0 || i >= a.rows() || j < 0 || j >= a.cols())
        throw DimensionMismatch("cell index out of range");
    Matrix y(1, 1);
    y(0, 0) = a.value()(i, j);
    Node* an = a.node();
    return detail::make(t, std::move(y), {an}, [an, i, j](Node& n) {
        if (an->needs_grad) an->ensure_grad()(i, j) += n.grad(0, 0);
    });
}

/// log(e^x + e^y) over 1x1 scalars, computed stably.
inline Var logaddexp(Tape& t, Var x, Var y) {
    const double xv = x.scalar(), yv = y.scalar();
    const double mx = std::max(xv, yv);
    Matrix out(1, 1);
    out(0, 0) = mx + std::log(std::exp(xv - mx) + std::exp(yv - mx));
    Node *xn = x.node(), *yn = y.node();
    const double z = out(0, 0);
    return detail::make(t, std::move(out), {xn, yn}, [xn, yn, xv, yv, z](Node& n) {
        if (xn->needs_grad) xn->ensure_grad()(0, 0) += n.grad(0, 0) * std::exp(xv - z);
        if (yn->needs_grad) yn->ensure_grad()(0, 0) += n.grad(0, 0) * std::exp(yv - z);
    });
}

/// log-sum-exp over cells where mask != 0; mask must select at least one cell.
inline Var masked_logsumexp(Tape& t, Var a, const Matrix& mask) {
    const Matrix& x = a.value();
    if (!x.same_shape(mask)) throw DimensionMismatch("masked_logsumexp mask shape");
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t i = 0; i < x.a.size(); ++i)
        if (mask.a[i] != 0.0) {
            mx = std::max(mx, x.a[i]);
            any = true;
        }
    if (!any) throw EmptyInput("masked_logsumexp over empty mask");
    double s = 0.0;
    for (std::size_t i = 0; i < x.a.size(); ++i)
        if (mask.a[i] != 0.0) s += std::exp(x.a[i] - mx);
    Matrix y(1, 1);
    y(0, 0) = mx + std::log(s);
    Node* an = a.node();
    const double z = y(0, 0);
    Matrix m = mask;
    return detail::make(t, std::move(y), {an}, [an, z, m = std::move(m)](Node& n) {
        if (!an->needs_grad) return;
        Matrix& g = an->ensure_grad();
        for (std::size_t i = 0; i < g.a.size(); ++i)
            if (m.a[i] != 0.0) g.a[i] += n.grad(0, 0) * std::exp(an->value().a[i] - z);
    });
}

/// Mean cross-entropy of logits rows [from_row, rows) against label ids,
/// fused with the softmax for stability.
inline Var cross_entropy_rows(Tape& t, Var logits, const std::vector<int>& labels, int from_row) {
    const Matrix& x = logits.value();
    if (from_row < 0 || from_row >= x.rows) throw DimensionMismatch("cross_entropy_rows range");
    const int n_rows = x.rows - from_row;
    if (static_cast<int>(labels.size()) != n_rows)
        throw DimensionMismatch("cross_entropy_rows: " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(n_rows) + " rows");
    double total = 0.0;
    for (int r = 0; r < n_rows; ++r) {
        const int lab = labels[static_cast<std::size_t>(r)];
        if (lab < 0 || lab >= x.cols)
            throw LabelOutOfRange("label id " + std::to_string(lab) + " with vocab " +
                                  std::to_string(x.cols));
        const int i = from_row + r;
        double mx = x(i, 0);
        for (int j = 1; j < x.cols; ++j) mx = std::max(mx, x(i, j));
        double s = 0.0;
        for (int j = 0; j < x.cols; ++j) s += std::exp(x(i, j) - mx);
        total += mx + std::log(s) - x(i, lab);
    }
    Matrix y(1, 1);
    y(0, 0) = total / n_rows;
    Node* xn = logits.node();
    return detail::make(t, std::move(y), {xn}, [xn, labels, from_row, n_rows](Node& n) {
        if (!xn->needs_grad) return;
        Matrix& g = xn->ensure_grad();
        const Matrix& x = xn->value();
        const double gout = n.grad(0, 0) / n_rows;
        for (int r = 0; r < n_rows; ++r) {
            const int i = from_row + r;
            double mx = x(i, 0);
            for (int j = 1; j < x.cols; ++j) mx = std::max(mx, x(i, j));
            double s = 0.0;
            for (int j = 0; j < x.cols; ++j) s += std::exp(x(i, j) - mx);
            for (int j = 0; j < x.cols; ++j)
                g(i, j) += gout * std::exp(x(i, j) - mx) / s;
            g(i, labels[static_cast<std::size_t>(r)]) -= gout;
        }
    });
}

} // namespace contagion::ad
