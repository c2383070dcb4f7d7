#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <vector>

#include "dlnm/crossbasis.hpp"

using dlnm::BasisSpec;
using dlnm::Matrix;
using dlnm::Vector;

namespace {

// Independent evaluation of the tensor sum
//   sum_i sum_k ( sum_l b_i(x_{t-l}) c_k(l) ) theta_{ik}
// by explicit loops and pointwise basis calls.
double triple_sum(const Eigen::RowVectorXd& lagged_exposures, const BasisSpec& exposure_spec,
                  const BasisSpec& lag_spec, const Vector& theta) {
  const int v_x = exposure_spec.num_basis;
  const int v_l = lag_spec.num_basis;
  const int L = static_cast<int>(lagged_exposures.size()) - 1;
  double total = 0.0;
  for (int i = 0; i < v_x; ++i) {
    for (int k = 0; k < v_l; ++k) {
      double inner = 0.0;
      for (int l = 0; l <= L; ++l) {
        inner += dlnm::eval_basis_at(exposure_spec, lagged_exposures[l])[i] *
                 dlnm::eval_basis_at(lag_spec, static_cast<double>(l))[k];
      }
      total += inner * theta[i * v_l + k];
    }
  }
  return total;
}

std::vector<Vector> random_series(int n_areas, int n_times, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 10.0);
  std::vector<Vector> out;
  for (int j = 0; j < n_areas; ++j) {
    Vector x(n_times);
    for (int t = 0; t < n_times; ++t) x[t] = unif(rng);
    out.push_back(std::move(x));
  }
  return out;
}

}  // namespace

TEST_CASE("lagged history rows follow the definition", "[crossbasis]") {
  Vector s(4);
  s << 1, 2, 3, 4;
  auto h = dlnm::build_history({s}, 2);
  REQUIRE(h.valid_per_area() == 2);
  REQUIRE_FALSE(h.valid[0]);
  REQUIRE_FALSE(h.valid[1]);
  REQUIRE(h.valid[2]);
  REQUIRE(h.valid[3]);
  Eigen::RowVector3d want2, want3;
  want2 << 3, 2, 1;
  want3 << 4, 3, 2;
  REQUIRE((h.values.row(2) - want2).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((h.values.row(3) - want3).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero-lag history equals the series", "[crossbasis]") {
  Vector s(5);
  s << 5, 4, 3, 2, 1;
  auto h = dlnm::build_history({s, s}, 0);
  REQUIRE(h.values.cols() == 1);
  for (auto v : h.valid) REQUIRE(v == 1);
  REQUIRE((h.values.col(0).head(5) - s).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("max_lag = T-1 leaves one valid row per area", "[crossbasis]") {
  Vector s(6);
  s << 1, 2, 3, 4, 5, 6;
  auto h = dlnm::build_history({s, s, s}, 5);
  int valid_count = 0;
  for (auto v : h.valid) valid_count += v;
  REQUIRE(valid_count == 3);
}

TEST_CASE("ragged series are rejected", "[crossbasis]") {
  Vector a(4), b(5);
  a.setZero();
  b.setZero();
  REQUIRE_THROWS_AS(dlnm::build_history({a, b}, 1), dlnm::data_error);
}

TEST_CASE("constant bases sum over lags", "[crossbasis]") {
  const int L = 3;
  Vector s = Vector::LinSpaced(10, 0.0, 9.0);
  auto h = dlnm::build_history({s}, L);
  auto one_x = BasisSpec::bspline(1, -1.0, 10.0, true, 0);
  auto one_l = BasisSpec::bspline(1, -0.5, L + 0.5, true, 0);
  auto cb = dlnm::build_crossbasis(h, one_x, one_l);
  REQUIRE(cb.W.cols() == 1);
  for (int t = 0; t < 10; ++t) {
    if (t < L)
      REQUIRE(cb.W(t, 0) == 0.0);
    else
      REQUIRE(cb.W(t, 0) == Catch::Approx(L + 1.0));
  }
}

TEST_CASE("cross-basis column count is v_x * v_l", "[crossbasis]") {
  std::mt19937_64 rng(7);
  auto series = random_series(2, 20, rng);
  auto h = dlnm::build_history(series, 4);
  auto cb = dlnm::build_crossbasis(h, BasisSpec::bspline(8, 0.0, 10.0, false),
                                   BasisSpec::bspline(8, 0.0, 4.0, true));
  REQUIRE(cb.W.cols() == 64);
}

TEST_CASE("cross-basis product matches the naive triple sum", "[crossbasis]") {
  std::mt19937_64 rng(123);
  std::normal_distribution<double> normal(0.0, 1.0);

  const int T = 40, L = 8;
  auto series = random_series(1, T, rng);
  auto h = dlnm::build_history(series, L);
  auto exposure_spec = BasisSpec::bspline(6, 0.0, 10.0, true);
  auto lag_spec = BasisSpec::bspline(5, 0.0, L, true);
  auto cb = dlnm::build_crossbasis(h, exposure_spec, lag_spec);

  Vector theta(cb.dim());
  for (int i = 0; i < theta.size(); ++i) theta[i] = normal(rng);

  const Vector product = cb.W * theta;
  for (int t = L; t < T; ++t) {
    const double direct = triple_sum(h.values.row(t), exposure_spec, lag_spec, theta);
    REQUIRE(std::abs(product[t] - direct) < 1e-10);
  }
}

TEST_CASE("matrix and summation forms agree on random instances", "[crossbasis]") {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> t_dist(12, 50), j_dist(1, 5), v_dist(4, 6);

  for (int rep = 0; rep < 5; ++rep) {
    const int T = t_dist(rng), J = j_dist(rng), L = 6;
    const int v_x = v_dist(rng), v_l = v_dist(rng);
    auto series = random_series(J, T, rng);
    auto h = dlnm::build_history(series, L);
    auto ex = BasisSpec::bspline(v_x, 0.0, 10.0, false);
    auto lg = BasisSpec::bspline(v_l, 0.0, L, true);
    auto cb = dlnm::build_crossbasis(h, ex, lg);

    Vector theta(cb.dim());
    for (int i = 0; i < theta.size(); ++i) theta[i] = normal(rng);
    const Vector product = cb.W * theta;
    for (int j = 0; j < J; ++j)
      for (int t = L; t < T; ++t) {
        const Eigen::Index r = h.row_index(t, j);
        REQUIRE(std::abs(product[r] - triple_sum(h.values.row(r), ex, lg, theta)) < 1e-10);
      }
  }
}

TEST_CASE("linear modifier interaction scales rows of W", "[crossbasis]") {
  std::mt19937_64 rng(5);
  auto series = random_series(3, 15, rng);
  auto h = dlnm::build_history(series, 2);
  auto cb = dlnm::build_crossbasis(h, BasisSpec::bspline(5, 0.0, 10.0, false),
                                   BasisSpec::bspline(3, 0.0, 2.0, true, 2));

  SECTION("zero modifier zeroes V") {
    auto ib = dlnm::build_interaction(cb, BasisSpec::linear_identity(), Vector::Zero(3));
    REQUIRE(ib.V.isZero(0.0));
  }
  SECTION("unit modifier reproduces W") {
    auto ib = dlnm::build_interaction(cb, BasisSpec::linear_identity(), Vector::Ones(3));
    REQUIRE((ib.V - cb.W).cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("general values scale by area") {
    Vector z(3);
    z << -0.5, 1.25, 2.0;
    auto ib = dlnm::build_interaction(cb, BasisSpec::linear_identity(), z);
    for (int j = 0; j < 3; ++j)
      for (int t = 0; t < 15; ++t) {
        const Eigen::Index r = cb.row_index(t, j);
        REQUIRE((ib.V.row(r) - cb.W.row(r) * z[j]).cwiseAbs().maxCoeff() == 0.0);
      }
  }
}

TEST_CASE("smooth modifier interaction matches the direct evaluation", "[crossbasis]") {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> z_dist(0.0, 0.4), normal(0.0, 1.0);

  const int J = 4, T = 20, L = 3;
  auto series = random_series(J, T, rng);
  auto h = dlnm::build_history(series, L);
  auto cb = dlnm::build_crossbasis(h, BasisSpec::bspline(5, 0.0, 10.0, false),
                                   BasisSpec::bspline(4, 0.0, L, true));

  Vector z(J);
  for (int j = 0; j < J; ++j) z[j] = z_dist(rng);
  auto mod_spec = BasisSpec::bspline(5, -1.5, 1.5, false);
  auto ib = dlnm::build_interaction(cb, mod_spec, z);
  REQUIRE(ib.V.cols() == cb.dim() * 5);

  Vector theta2(ib.dim());
  for (int i = 0; i < theta2.size(); ++i) theta2[i] = normal(rng);
  const Vector product = ib.V * theta2;

  const int m = cb.dim();
  for (int j = 0; j < J; ++j) {
    const Vector cz = dlnm::eval_basis_at(mod_spec, z[j]);
    for (int t = L; t < T; ++t) {
      const Eigen::Index r = cb.row_index(t, j);
      double direct = 0.0;
      for (int rr = 0; rr < 5; ++rr)
        direct += cz[rr] * cb.W.row(r).dot(theta2.segment(rr * m, m));
      REQUIRE(std::abs(product[r] - direct) < 1e-10);
    }
  }
}

TEST_CASE("categorical interaction blocks are area-exclusive", "[crossbasis]") {
  std::mt19937_64 rng(11);
  const int J = 4;
  auto series = random_series(J, 12, rng);
  auto h = dlnm::build_history(series, 2);
  auto cb = dlnm::build_crossbasis(h, BasisSpec::bspline(4, 0.0, 10.0, false),
                                   BasisSpec::bspline(3, 0.0, 2.0, true, 2));

  Vector cats(J);
  cats << 1, 2, 1, 2;  // two categories, areas 1 and 3 in category 2
  auto ib = dlnm::build_interaction(cb, BasisSpec::dummy(2), cats);
  REQUIRE(ib.V.cols() == cb.dim());

  for (int j = 0; j < J; ++j) {
    auto block = ib.V.middleRows(cb.row_index(0, j), 12);
    if (cats[j] == 2.0)
      REQUIRE((block - cb.W.middleRows(cb.row_index(0, j), 12)).cwiseAbs().maxCoeff() == 0.0);
    else
      REQUIRE(block.isZero(0.0));
  }
}

TEST_CASE("interaction with an intercept-bearing modifier basis is rejected", "[crossbasis]") {
  std::mt19937_64 rng(3);
  auto series = random_series(2, 10, rng);
  auto h = dlnm::build_history(series, 1);
  auto cb = dlnm::build_crossbasis(h, BasisSpec::bspline(4, 0.0, 10.0, false),
                                   BasisSpec::bspline(2, 0.0, 1.0, true, 1));
  REQUIRE_THROWS_AS(
      dlnm::build_interaction(cb, BasisSpec::bspline(5, -1.0, 1.0, true), Vector::Zero(2)),
      dlnm::config_error);
}
