#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>

#include "contagion/autodiff.hpp"
#include "contagion/matrix.hpp"
#include "contagion/rng.hpp"

using namespace contagion;

namespace {

// Central-difference audit of d(scalar op graph)/d(inputs) for a builder
// over a fixed set of leaf matrices.
void check_op_gradient(std::vector<Matrix> inputs,
                       const std::function<ad::Var(ad::Tape&, std::vector<ad::Var>&)>& build,
                       double tol = 1e-7) {
    std::vector<Matrix> analytic;
    {
        ad::Tape t;
        std::vector<ad::Var> leaves;
        for (Matrix& m : inputs) leaves.push_back(t.leaf(m, true));
        ad::Var out = build(t, leaves);
        t.backward(out);
        for (ad::Var& v : leaves)
            analytic.push_back(v.node()->has_grad() ? v.node()->grad
                                                    : Matrix::zeros(v.rows(), v.cols()));
    }
    auto value = [&]() {
        ad::Tape t;
        std::vector<ad::Var> leaves;
        for (Matrix& m : inputs) leaves.push_back(t.leaf(m, false));
        return build(t, leaves).scalar();
    };
    const double eps = 1e-6;
    for (std::size_t mi = 0; mi < inputs.size(); ++mi) {
        for (std::size_t k = 0; k < inputs[mi].size(); ++k) {
            const double saved = inputs[mi].a[k];
            inputs[mi].a[k] = saved + eps;
            const double up = value();
            inputs[mi].a[k] = saved - eps;
            const double down = value();
            inputs[mi].a[k] = saved;
            const double fd = (up - down) / (2 * eps);
            CHECK_THAT(analytic[mi].a[k], Catch::Matchers::WithinAbs(fd, tol));
        }
    }
}

Matrix random_matrix(int r, int c, Rng& rng) { return Matrix::uniform(r, c, -1.0, 1.0, rng); }

} // namespace

TEST_CASE("quadratic loss has the textbook gradient") {
    // sum of squares: gradient must be exactly 2 theta
    Rng rng(5);
    Matrix theta = random_matrix(3, 4, rng);
    ad::Tape t;
    ad::Var v = t.leaf(theta, true);
    ad::Var sq = ad::mul(t, v, v);
    ad::Var loss = ad::scale(t, ad::mean_all(t, sq), static_cast<double>(theta.size()));
    t.backward(loss);
    for (std::size_t k = 0; k < theta.size(); ++k)
        CHECK_THAT(v.node()->grad.a[k], Catch::Matchers::WithinAbs(2.0 * theta.a[k], 1e-9));
}

TEST_CASE("matmul family gradients") {
    Rng rng(7);
    check_op_gradient({random_matrix(3, 4, rng), random_matrix(4, 2, rng)},
                      [](ad::Tape& t, std::vector<ad::Var>& v) {
                          return ad::mean_all(t, ad::matmul(t, v[0], v[1]));
                      });
    check_op_gradient({random_matrix(3, 4, rng), random_matrix(5, 4, rng)},
                      [](ad::Tape& t, std::vector<ad::Var>& v) {
                          return ad::mean_all(t, ad::matmul_nt(t, v[0], v[1]));
                      });
    Rng krng(9);
    Matrix K = random_matrix(4, 3, krng);
    check_op_gradient({random_matrix(3, 2, rng)},
                      [K](ad::Tape& t, std::vector<ad::Var>& v) {
                          return ad::mean_all(t, ad::lmul_const(t, K, v[0]));
                      });
}

TEST_CASE("elementwise and broadcast gradients") {
    Rng rng(11);
    check_op_gradient({random_matrix(3, 3, rng), random_matrix(3, 3, rng)},
                      [](ad::Tape& t, std::vector<ad::Var>& v) {
                          return ad::mean_all(t, ad::mul(t, v[0], v[1]));
                      });
    check_op_gradient({random_matrix(3, 3, rng), random_matrix(1, 3, rng)},
                      [](ad::Tape& t, std::vector<ad::Var>& v) {
                          return ad::mean_all(t, ad::add_rowvec(t, v[0], v[1]));
                      });
    check_op_gradient({random_matrix(2, 5, rng), random_matrix(1, 1, rng)},
                      [](ad::Tape& t, std::vector<ad::Var>& v) {
                          return ad::mean_all(t, ad::scalar_mul(t, v[0], v[1]));
                      });
    check_op_gradient({random_matrix(2, 5, rng), random_matrix(1, 1, rng)},
                      [](ad::Tape& t, std::vector<ad::Var>& v) {
                          return ad::mean_all(t, ad::add_scalar_bcast(t, v[0], v[1], -1.0));
                      });
}

TEST_CASE("nonlinearity gradients") {
    Rng rng(13);
    for (auto op : {&ad::softplus, &ad::tanh_v, &ad::sigmoid_v}) {
        check_op_gradient({random_matrix(3, 4, rng)},
                          [op](ad::Tape& t, std::vector<ad::Var>& v) {
                              return ad::mean_all(t, (*op)(t, v[0]));
                          });
    }
    check_op_gradient({random_matrix(4, 3, rng)},
                      [](ad::Tape& t, std::vector<ad::Var>& v) {
                          // weighting by a constant makes softmax grads nontrivial
                          Matrix w(4, 3);
                          for (std::size_t i = 0; i < w.size(); ++i)
                              w.a[i] = 0.1 * static_cast<double>(i);
                          ad::Var s = ad::row_softmax(t, v[0]);
                          return ad::mean_all(t, ad::mul(t, s, t.constant(w)));
                      });
    check_op_gradient({random_matrix(3, 5, rng)},
                      [](ad::Tape& t, std::vector<ad::Var>& v) {
                          Matrix w(3, 5);
                          for (std::size_t i = 0; i < w.size(); ++i)
                              w.a[i] = 0.2 * static_cast<double>(i) - 1.0;
                          ad::Var y = ad::row_l2_normalize(t, v[0]);
                          return ad::mean_all(t, ad::mul(t, y, t.constant(w)));
                      });
}

TEST_CASE("softmax rows sum to one") {
    Rng rng(15);
    ad::Tape t;
    Matrix x = random_matrix(6, 7, rng);
    ad::Var s = ad::row_softmax(t, t.leaf(x, false));
    for (int i = 0; i < 6; ++i) {
        double sum = 0.0;
        for (int j = 0; j < 7; ++j) {
            sum += s.value()(i, j);
            CHECK(s.value()(i, j) >= 0.0);
        }
        CHECK_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-12));
    }
}

TEST_CASE("shape op gradients") {
    Rng rng(17);
    check_op_gradient({random_matrix(5, 3, rng)},
                      [](ad::Tape& t, std::vector<ad::Var>& v) {
                          return ad::mean_all(t, ad::gather_rows(t, v[0], {4, 0, 0, 2}));
                      });
    check_op_gradient({random_matrix(2, 3, rng), random_matrix(4, 3, rng)},
                      [](ad::Tape& t, std::vector<ad::Var>& v) {
                          return ad::mean_all(t, ad::slice_rows(t, ad::concat_rows(t, v[0], v[1]), 1, 5));
                      });
    check_op_gradient({random_matrix(3, 2, rng), random_matrix(3, 4, rng)},
                      [](ad::Tape& t, std::vector<ad::Var>& v) {
                          ad::Var c = ad::concat_cols(t, {v[0], v[1]});
                          return ad::mean_all(t, ad::slice_cols(t, c, 1, 5));
                      });
    check_op_gradient({random_matrix(4, 4, rng)},
                      [](ad::Tape& t, std::vector<ad::Var>& v) {
                          return ad::cell(t, v[0], 2, 3);
                      });
    check_op_gradient({random_matrix(5, 3, rng)},
                      [](ad::Tape& t, std::vector<ad::Var>& v) {
                          Matrix w(1, 3);
                          w(0, 0) = 1.0; w(0, 1) = -2.0; w(0, 2) = 0.5;
                          return ad::mean_all(t, ad::mul(t, ad::col_mean(t, v[0]), t.constant(w)));
                      });
}

TEST_CASE("log-sum-exp style gradients") {
    Rng rng(19);
    check_op_gradient({random_matrix(1, 1, rng), random_matrix(1, 1, rng)},
                      [](ad::Tape& t, std::vector<ad::Var>& v) {
                          return ad::logaddexp(t, v[0], v[1]);
                      });
    Matrix mask(3, 4);
    Rng mrng(23);
    for (std::size_t i = 0; i < mask.size(); ++i) mask.a[i] = mrng.uniform() < 0.5 ? 1.0 : 0.0;
    mask.a[0] = 1.0; // keep at least one selected cell
    check_op_gradient({random_matrix(3, 4, rng)},
                      [mask](ad::Tape& t, std::vector<ad::Var>& v) {
                          return ad::masked_logsumexp(t, v[0], mask);
                      });
    check_op_gradient({random_matrix(5, 4, rng)},
                      [](ad::Tape& t, std::vector<ad::Var>& v) {
                          return ad::cross_entropy_rows(t, v[0], {1, 3, 0}, 2);
                      });
}

TEST_CASE("cross_entropy_rows validates labels") {
    ad::Tape t;
    Matrix logits = Matrix::zeros(4, 3);
    ad::Var v = t.constant(logits);
    CHECK_THROWS_AS(ad::cross_entropy_rows(t, v, {0, 5}, 2), LabelOutOfRange);
    CHECK_THROWS_AS(ad::cross_entropy_rows(t, v, {0}, 2), DimensionMismatch);
}

TEST_CASE("masked_logsumexp matches a direct computation") {
    ad::Tape t;
    Matrix x(1, 3);
    x(0, 0) = 1.0; x(0, 1) = 2.0; x(0, 2) = 3.0;
    Matrix mask = Matrix::full(1, 3, 1.0);
    mask(0, 1) = 0.0;
    const double got = ad::masked_logsumexp(t, t.constant(x), mask).scalar();
    CHECK_THAT(got, Catch::Matchers::WithinAbs(std::log(std::exp(1.0) + std::exp(3.0)), 1e-12));
}
