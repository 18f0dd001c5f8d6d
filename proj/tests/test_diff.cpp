#include <cmath>
#include <cstring>
#include <vector>

#include <doctest.h>

#include "gbcc/diff.hpp"
#include "gbcc/errors.hpp"
#include "gbcc/matrix.hpp"
#include "gbcc/rng.hpp"
#include "helpers.hpp"

using gbcc::Matrix;
using gbcc::Rng;
using namespace gbcc::diff;
using testutil::check_close;
using testutil::check_gradients;
using testutil::random_matrix;
using testutil::random_matrix_away_from_zero;

namespace {
// weighted sum so the incoming gradient is non-uniform
NodePtr weighted_sum(const NodePtr& x, const Matrix& w) {
  return sum(mul(x, constant(w)));
}
}  // namespace

TEST_CASE("matmul value and trivial cases") {
  auto a = leaf(Matrix::identity(2));
  auto b = leaf(Matrix::from_rows({{3, 4}, {5, 6}}));
  check_close(matmul(a, b)->value, b->value);

  auto r = matmul(leaf(Matrix::from_rows({{1, 2}})), leaf(Matrix::from_rows({{3}, {4}})));
  CHECK(r->value.rows == 1);
  CHECK(r->value.cols == 1);
  CHECK(r->scalar() == 11.0);

  CHECK_THROWS_AS(matmul(leaf(Matrix(2, 3)), leaf(Matrix(2, 3))), gbcc::shape_error);
}

TEST_CASE("gradients match central finite differences") {
  Rng rng = Rng::derive(21, {1});

  SUBCASE("matmul") {
    Matrix w = random_matrix(3, 2, rng);
    check_gradients({random_matrix(3, 4, rng), random_matrix(4, 2, rng)},
                    [w](const std::vector<NodePtr>& in) {
                      return weighted_sum(matmul(in[0], in[1]), w);
                    });
  }
  SUBCASE("add sub mul scale") {
    Matrix w = random_matrix(4, 3, rng);
    check_gradients({random_matrix(4, 3, rng), random_matrix(4, 3, rng)},
                    [w](const std::vector<NodePtr>& in) {
                      return weighted_sum(scale(add(in[0], mul(in[0], sub(in[0], in[1]))), 0.7), w);
                    });
  }
  SUBCASE("relu") {
    Matrix w = random_matrix(5, 4, rng);
    check_gradients({random_matrix_away_from_zero(5, 4, rng)},
                    [w](const std::vector<NodePtr>& in) { return weighted_sum(relu(in[0]), w); });
  }
  SUBCASE("row vector broadcasts") {
    Matrix w = random_matrix(4, 3, rng);
    check_gradients({random_matrix(4, 3, rng), random_matrix(1, 3, rng)},
                    [w](const std::vector<NodePtr>& in) {
                      return weighted_sum(add_rowvec(in[0], in[1]), w);
                    });
    check_gradients({random_matrix(4, 3, rng), random_matrix(1, 3, rng)},
                    [w](const std::vector<NodePtr>& in) {
                      return weighted_sum(sub_rowvec(in[0], in[1]), w);
                    });
  }
  SUBCASE("col_mean") {
    Matrix w = random_matrix(1, 5, rng);
    check_gradients({random_matrix(6, 5, rng)}, [w](const std::vector<NodePtr>& in) {
      return weighted_sum(col_mean(in[0]), w);
    });
  }
  SUBCASE("row_norms") {
    Matrix w = random_matrix(5, 1, rng);
    check_gradients({random_matrix_away_from_zero(5, 3, rng)},
                    [w](const std::vector<NodePtr>& in) {
                      return weighted_sum(row_norms(in[0]), w);
                    });
  }
  SUBCASE("gather_rows with duplicates") {
    Matrix w = random_matrix(4, 3, rng);
    std::vector<std::int64_t> pick{2, 0, 2, 4};
    check_gradients({random_matrix(5, 3, rng)}, [w, pick](const std::vector<NodePtr>& in) {
      return weighted_sum(gather_rows(in[0], pick), w);
    });
  }
  SUBCASE("concat_rows") {
    Matrix w = random_matrix(7, 3, rng);
    check_gradients({random_matrix(2, 3, rng), random_matrix(4, 3, rng), random_matrix(1, 3, rng)},
                    [w](const std::vector<NodePtr>& in) {
                      return weighted_sum(concat_rows({in[0], in[1], in[2]}), w);
                    });
  }
  SUBCASE("standardize") {
    Matrix w = random_matrix(6, 4, rng);
    check_gradients({random_matrix(6, 4, rng, -2.0, 2.0)},
                    [w](const std::vector<NodePtr>& in) {
                      return weighted_sum(standardize(in[0]), w);
                    });
  }
  SUBCASE("row_l2_normalize") {
    Matrix w = random_matrix(5, 3, rng);
    check_gradients({random_matrix_away_from_zero(5, 3, rng)},
                    [w](const std::vector<NodePtr>& in) {
                      return weighted_sum(row_l2_normalize(in[0]), w);
                    });
  }
  SUBCASE("cosine_matrix distinct operands") {
    Matrix w = random_matrix(4, 5, rng);
    check_gradients({random_matrix_away_from_zero(4, 3, rng),
                     random_matrix_away_from_zero(5, 3, rng)},
                    [w](const std::vector<NodePtr>& in) {
                      return weighted_sum(cosine_matrix(in[0], in[1]), w);
                    });
  }
  SUBCASE("cosine_matrix same node") {
    Matrix w = random_matrix(4, 4, rng);
    check_gradients({random_matrix_away_from_zero(4, 3, rng)},
                    [w](const std::vector<NodePtr>& in) {
                      return weighted_sum(cosine_matrix(in[0], in[0]), w);
                    });
  }
  SUBCASE("masked_infonce") {
    std::vector<std::vector<std::int64_t>> omega{{1, 2}, {0}, {3}, {}};
    std::vector<std::vector<std::int64_t>> phi{{3}, {2, 3}, {0, 1}, {0}};
    check_gradients({random_matrix(4, 4, rng)}, [omega, phi](const std::vector<NodePtr>& in) {
      return masked_infonce(in[0], omega, phi, 2);
    });
  }
  SUBCASE("three-layer network") {
    Matrix w = random_matrix(6, 2, rng);
    check_gradients(
        {random_matrix(6, 5, rng), random_matrix(5, 4, rng), random_matrix(1, 4, rng),
         random_matrix(4, 3, rng), random_matrix(1, 3, rng), random_matrix(3, 2, rng),
         random_matrix(1, 2, rng)},
        [w](const std::vector<NodePtr>& in) {
          auto h1 = relu(add_rowvec(matmul(in[0], in[1]), in[2]));
          auto h2 = relu(add_rowvec(matmul(h1, in[3]), in[4]));
          auto out = add_rowvec(matmul(h2, in[5]), in[6]);
          return weighted_sum(out, w);
        });
  }
}

TEST_CASE("relu trivial cases") {
  auto x = leaf(Matrix::from_rows({{-1, 0, 2}}));
  auto y = relu(x);
  check_close(y->value, Matrix::from_rows({{0, 0, 2}}));

  auto neg = leaf(Matrix::from_rows({{-3, -1}, {-0.5, -2}}));
  auto loss = sum(relu(neg));
  CHECK(loss->scalar() == 0.0);
  backward(loss);
  check_close(neg->ensure_grad(), Matrix::zeros(2, 2));
}

TEST_CASE("sum of a matrix gives all-ones gradient") {
  Rng rng = Rng::derive(22, {1});
  auto w = leaf(random_matrix(2, 2, rng));
  auto loss = sum(w);
  backward(loss);
  check_close(w->ensure_grad(), Matrix::full(2, 2, 1.0));
}

TEST_CASE("self-target squared error has zero gradient") {
  Rng rng = Rng::derive(23, {1});
  auto x = leaf(random_matrix(3, 3, rng));
  auto d = sub(x, x);
  auto loss = sum(mul(d, d));
  CHECK(loss->scalar() == 0.0);
  backward(loss);
  check_close(x->ensure_grad(), Matrix::zeros(3, 3));
}

TEST_CASE("cosine similarity is scale invariant") {
  Rng rng = Rng::derive(24, {1});
  Matrix u = random_matrix_away_from_zero(4, 6, rng);
  Matrix v = random_matrix_away_from_zero(3, 6, rng);
  Matrix u2 = u, v2 = v;
  for (auto& x : u2.data) x *= 7.3;
  for (auto& x : v2.data) x *= 0.021;
  auto c1 = cosine_matrix(constant(u), constant(v));
  auto c2 = cosine_matrix(constant(u2), constant(v2));
  check_close(c1->value, c2->value, 1e-9);
  for (double x : c1->value.data) CHECK(std::fabs(x) <= 1.0 + 1e-12);
}

TEST_CASE("backward accumulates and zeroing restores bit-identical gradients") {
  Rng rng = Rng::derive(25, {1});
  auto a = leaf(random_matrix(4, 3, rng));
  auto b = leaf(random_matrix(3, 5, rng));
  Matrix w = random_matrix(4, 5, rng);
  auto loss = weighted_sum(relu(matmul(a, b)), w);

  backward(loss);
  Matrix ga = a->grad, gb = b->grad;
  backward(loss);
  Matrix ga2 = ga, gb2 = gb;
  for (auto& x : ga2.data) x *= 2.0;
  for (auto& x : gb2.data) x *= 2.0;
  check_close(a->grad, ga2, 0.0);
  check_close(b->grad, gb2, 0.0);

  zero_all_grads(loss);
  backward(loss);
  CHECK(std::memcmp(a->grad.data.data(), ga.data.data(),
                    sizeof(double) * static_cast<std::size_t>(ga.size())) == 0);
  CHECK(std::memcmp(b->grad.data.data(), gb.data.data(),
                    sizeof(double) * static_cast<std::size_t>(gb.size())) == 0);
}

TEST_CASE("backward rejects non-scalar loss") {
  auto x = leaf(Matrix(2, 2));
  CHECK_THROWS_AS(backward(add(x, x)), gbcc::contract_error);
}

TEST_CASE("constants do not accumulate gradients or build backward work") {
  Rng rng = Rng::derive(26, {1});
  auto c = constant(random_matrix(3, 3, rng));
  auto x = leaf(random_matrix(3, 3, rng));
  auto loss = sum(mul(c, x));
  backward(loss);
  check_close(x->ensure_grad(), c->value);
  CHECK_FALSE(c->grad.same_shape(c->value));  // never allocated
}
