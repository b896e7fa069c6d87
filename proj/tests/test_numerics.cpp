#include <doctest.h>

#include <set>

#include "gradcheck.hpp"
#include "structrep/numerics.hpp"

using namespace structrep;
using structrep::test::flat;
using structrep::test::numeric_gradient;
using structrep::test::relative_error;

TEST_CASE("matmul: identity and hand-computed product") {
  Matrix a(2, 2);
  a << 1, 2, 3, 4;
  CHECK(matmul<double>(Matrix::Identity(2, 2), a) == a);
  Matrix ones(2, 1);
  ones << 1, 1;
  Matrix expect(2, 1);
  expect << 3, 7;
  CHECK(matmul(a, ones) == expect);
  CHECK_THROWS_AS(matmul(ones, ones), ShapeError);
}

TEST_CASE("matmul_backward matches central differences") {
  Rng rng(11);
  Matrix a = rng.uniform_matrix<double>(5, 4, 1.0);
  Matrix b = rng.uniform_matrix<double>(4, 3, 1.0);

  SUBCASE("sum of outputs") {
    const Matrix ones = Matrix::Ones(5, 3);
    const auto g = matmul_backward(a, b, ones);
    auto loss = [&] { return matmul(a, b).sum(); };
    CHECK(relative_error(flat(g.a), numeric_gradient(a, loss)) < 1e-5);
    CHECK(relative_error(flat(g.b), numeric_gradient(b, loss)) < 1e-5);
  }
  SUBCASE("weighted outputs") {
    const Matrix w = rng.uniform_matrix<double>(5, 3, 1.0);
    const auto g = matmul_backward(a, b, w);
    auto loss = [&] { return matmul(a, b).cwiseProduct(w).sum(); };
    CHECK(relative_error(flat(g.a), numeric_gradient(a, loss)) < 1e-5);
    CHECK(relative_error(flat(g.b), numeric_gradient(b, loss)) < 1e-5);
  }
  CHECK_THROWS_AS(matmul_backward<double>(a, b, Matrix::Ones(3, 3)), ShapeError);
}

TEST_CASE("l2_normalize") {
  Vector v(2);
  v << 3, 4;
  const Vector u = l2_normalize(v);
  CHECK(u[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(u[1] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK((l2_normalize(u) - u).norm() < 1e-15);
  CHECK_THROWS_AS(l2_normalize<double>(Vector::Zero(4)), DegenerateInputError);

  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Vector x = rng.uniform_matrix<double>(8, 1, 2.0);
    CHECK(std::abs(l2_normalize(x).norm() - 1.0) < 1e-12);
  }
}

TEST_CASE("l2_normalize Jacobian and backward match central differences") {
  Rng rng(5);
  Vector v = rng.uniform_matrix<double>(8, 1, 1.0);
  const Matrix jac = l2_normalize_jacobian(v);
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    Vector probe = v;
    const Vector numeric = numeric_gradient(probe, [&] { return l2_normalize(probe)[k]; });
    CHECK(relative_error(jac.row(k).transpose(), numeric) < 1e-5);
  }
  const Vector g = rng.uniform_matrix<double>(8, 1, 1.0);
  CHECK((l2_normalize_backward(v, g) - jac.transpose() * g).norm() < 1e-14);
}

TEST_CASE("cosine on unit vectors") {
  Eigen::Vector2d e1(1, 0), e2(0, 1), a(0.6, 0.8), b(0.8, 0.6);
  CHECK(cosine(e1, e1) == 1.0);
  CHECK(cosine(e1, e2) == 0.0);
  CHECK(cosine(a, b) == doctest::Approx(0.96).epsilon(1e-15));
  CHECK_THROWS_AS(cosine(Eigen::Vector2d(1, 1), e1), PreconditionError);
  CHECK_THROWS_AS(cosine(Vector::Ones(3).normalized(), Vector(e1)), ShapeError);
}

TEST_CASE("gelu derivative matches central differences") {
  for (double x : {-4.0, -1.3, -0.2, 0.0, 0.4, 1.0, 2.5, 6.0}) {
    const double numeric = (gelu(x + 1e-5) - gelu(x - 1e-5)) / 2e-5;
    CHECK(gelu_grad(x) == doctest::Approx(numeric).epsilon(1e-8));
  }
  CHECK(gelu(0.0) == 0.0);
  CHECK(gelu(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-14));
}

TEST_CASE("Rng matches the splitmix64 reference stream") {
  // Reference values from an independent implementation of the generator.
  Rng zero(0);
  CHECK(zero.next_u64() == 0xe220a8397b1dcdafULL);
  CHECK(zero.next_u64() == 0x6e789e6aa1b965f4ULL);
  CHECK(zero.next_u64() == 0x06c45d188009454fULL);
  Rng r42(42);
  CHECK(r42.next_u64() == 0x989b3f130a063869ULL);
  Rng sub = Rng(42).substream(5);
  CHECK(sub.next_u64() == 0xa05acc311966e010ULL);
  CHECK(sub.next_u64() == 0xf04227b0edeebeacULL);
}

TEST_CASE("Rng streams are reproducible and substreams independent") {
  Rng a(99), b(99);
  for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());

  Rng base(7);
  const auto before = base.counter();
  Rng s1 = base.substream(1), s2 = base.substream(2);
  CHECK(base.counter() == before);
  CHECK(s1.next_u64() != s2.next_u64());

  Rng r(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    const auto k = r.below(7);
    REQUIRE(k < 7);
    const int j = r.range(-2, 2);
    REQUIRE(j >= -2);
    REQUIRE(j <= 2);
  }
  CHECK_THROWS_AS(r.below(0), PreconditionError);
  CHECK_THROWS_AS(r.range(3, 2), PreconditionError);
}

TEST_CASE("Rng shuffle is a permutation and below() is roughly uniform") {
  Rng r(4);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  r.shuffle(v.begin(), v.end());
  CHECK(std::set<int>(v.begin(), v.end()).size() == 50);

  std::vector<int> counts(5, 0);
  for (int i = 0; i < 50000; ++i) counts[r.below(5)]++;
  for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}
