#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "priorpose/spd.hpp"

using namespace priorpose;

namespace {

Points random_points(int n, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> uni(-scale, scale);
  Points pts(n, 3);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) pts(i, c) = uni(rng);
  return pts;
}

AssignField random_row_stochastic(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  AssignField assign;
  assign.weights.resize(rows, cols);
  for (int i = 0; i < rows; ++i) {
    Eigen::ArrayXd logits(cols);
    for (int j = 0; j < cols; ++j) logits[j] = gauss(rng);
    logits -= logits.maxCoeff();
    const Eigen::ArrayXd e = logits.exp();
    assign.weights.row(i) = (e / e.sum()).matrix().transpose();
  }
  return assign;
}

}  // namespace

TEST_CASE("spd_apply") {
  std::mt19937_64 rng(2);
  SUBCASE("identity assignment returns the prior") {
    const int n = 6;
    ShapePrior prior{random_points(n, rng, 0.5)};
    DeformField deform{Points::Zero(n, 3)};
    AssignField assign{Eigen::MatrixXd::Identity(n, n)};
    const PointCloud out = spd_apply(prior, deform, assign);
    CHECK((out.points - prior.points).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("constant offset shifts uniformly") {
    const int n = 5;
    ShapePrior prior{random_points(n, rng, 0.5)};
    DeformField deform{Points::Zero(n, 3)};
    deform.offsets.col(0).array() = 0.1;
    deform.offsets.col(1).array() = -0.2;
    deform.offsets.col(2).array() = 0.3;
    AssignField assign{Eigen::MatrixXd::Identity(n, n)};
    const PointCloud out = spd_apply(prior, deform, assign);
    const Points expected = prior.points.rowwise() +
                            Eigen::RowVector3d(0.1, -0.2, 0.3);
    CHECK((out.points - expected).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("matches a dense matrix-product oracle") {
    const int n = 17, m = 9;
    ShapePrior prior{random_points(m, rng, 0.5)};
    DeformField deform{random_points(m, rng, 0.1)};
    AssignField assign = random_row_stochastic(n, m, rng);
    const PointCloud out = spd_apply(prior, deform, assign);
    // Brute-force triple loop.
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int j = 0; j < m; ++j)
          acc += assign.weights(i, j) *
                 (prior.points(j, c) + deform.offsets(j, c));
        CHECK(std::abs(out.points(i, c) - acc) < 1e-12);
      }
    }
  }
  SUBCASE("dimension mismatch") {
    ShapePrior prior{random_points(4, rng)};
    DeformField deform{random_points(5, rng)};
    AssignField assign{Eigen::MatrixXd::Identity(4, 4)};
    CHECK_THROWS_AS(spd_apply(prior, deform, assign), InvalidInput);
    DeformField ok{random_points(4, rng)};
    AssignField bad{Eigen::MatrixXd::Identity(4, 5)};
    CHECK_THROWS_AS(spd_apply(prior, ok, bad), InvalidInput);
  }
  SUBCASE("outputs stay in the convex hull of the deformed prior") {
    // Tetrahedron prior: hull membership via barycentric coordinates.
    ShapePrior prior;
    prior.points.resize(4, 3);
    prior.points << 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1;
    DeformField deform{random_points(4, rng, 0.05)};
    AssignField assign = random_row_stochastic(25, 4, rng);
    const PointCloud out = spd_apply(prior, deform, assign);
    const Points verts = prior.points + deform.offsets;
    Eigen::Matrix3d basis;
    for (int c = 0; c < 3; ++c)
      basis.col(c) = (verts.row(c + 1) - verts.row(0)).transpose();
    for (int i = 0; i < out.size(); ++i) {
      const Vec3 rel = out.points.row(i).transpose() - verts.row(0).transpose();
      const Vec3 bary = basis.colPivHouseholderQr().solve(rel);
      CHECK(bary.minCoeff() > -1e-12);
      CHECK(bary.sum() < 1.0 + 1e-12);
    }
  }
}

TEST_CASE("assemble_depth") {
  SUBCASE("flat shape") {
    DecoupledDepth dec;
    dec.shape_points.points = Points::Zero(3, 3);
    dec.depth_translation = 1.5;
    const Eigen::VectorXd z = assemble_depth(dec);
    for (int i = 0; i < 3; ++i) CHECK(z[i] == doctest::Approx(1.5));
  }
  SUBCASE("offsets add") {
    DecoupledDepth dec;
    dec.shape_points.points = Points::Zero(3, 3);
    dec.shape_points.points.col(2) << -0.1, 0.0, 0.1;
    dec.depth_translation = 2.0;
    const Eigen::VectorXd z = assemble_depth(dec);
    CHECK(z[0] == doctest::Approx(1.9));
    CHECK(z[1] == doctest::Approx(2.0));
    CHECK(z[2] == doctest::Approx(2.1));
  }
  SUBCASE("elementwise oracle and shift property") {
    std::mt19937_64 rng(4);
    DecoupledDepth dec;
    dec.shape_points.points = random_points(40, rng);
    dec.depth_translation = 1.7;
    const Eigen::VectorXd z = assemble_depth(dec);
    for (int i = 0; i < 40; ++i)
      CHECK(z[i] == doctest::Approx(dec.shape_points.points(i, 2) + 1.7));

    DecoupledDepth shifted = dec;
    shifted.depth_translation += 0.25;
    const Eigen::VectorXd z2 = assemble_depth(shifted);
    CHECK(((z2 - z).array() - 0.25).abs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("chamfer distance") {
  std::mt19937_64 rng(6);
  SUBCASE("identical clouds") {
    PointCloud a{random_points(20, rng)};
    CHECK(chamfer_distance(a, a) == doctest::Approx(0.0));
  }
  SUBCASE("two single points") {
    PointCloud a, b;
    a.points.resize(1, 3);
    a.points << 0, 0, 0;
    b.points.resize(1, 3);
    b.points << 1, 0, 0;
    CHECK(chamfer_distance(a, b) == doctest::Approx(2.0));
  }
  SUBCASE("matches the exhaustive oracle and is symmetric") {
    PointCloud a{random_points(64, rng)};
    PointCloud b{random_points(64, rng)};
    double sum_a = 0.0, sum_b = 0.0;
    for (int i = 0; i < 64; ++i) {
      double best = 1e300;
      for (int j = 0; j < 64; ++j)
        best = std::min(best,
                        (a.points.row(i) - b.points.row(j)).squaredNorm());
      sum_a += best;
    }
    for (int j = 0; j < 64; ++j) {
      double best = 1e300;
      for (int i = 0; i < 64; ++i)
        best = std::min(best,
                        (a.points.row(i) - b.points.row(j)).squaredNorm());
      sum_b += best;
    }
    const double expected = sum_a / 64.0 + sum_b / 64.0;
    CHECK(chamfer_distance(a, b) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(chamfer_distance(a, b) ==
          doctest::Approx(chamfer_distance(b, a)).epsilon(1e-12));
  }
  SUBCASE("empty cloud is invalid") {
    PointCloud a{random_points(3, rng)};
    PointCloud empty;
    empty.points.resize(0, 3);
    CHECK_THROWS_AS(chamfer_distance(a, empty), InvalidInput);
  }
}

TEST_CASE("estimate_size") {
  SUBCASE("unit cube corners") {
    ShapePrior prior;
    prior.points.resize(8, 3);
    int row = 0;
    for (int i = 0; i < 8; ++i) {
      prior.points(row, 0) = (i & 1) ? 0.5 : -0.5;
      prior.points(row, 1) = (i & 2) ? 0.5 : -0.5;
      prior.points(row, 2) = (i & 4) ? 0.5 : -0.5;
      ++row;
    }
    DeformField zero{Points::Zero(8, 3)};
    const Vec3 size = estimate_size(prior, zero);
    CHECK((size - Vec3::Ones()).cwiseAbs().maxCoeff() < 1e-15);

    DeformField doubling{prior.points};  // p + p = 2p
    const Vec3 size2 = estimate_size(prior, doubling);
    CHECK((size2 - 2.0 * Vec3::Ones()).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("min/max scan oracle") {
    std::mt19937_64 rng(8);
    ShapePrior prior{random_points(30, rng)};
    DeformField deform{random_points(30, rng, 0.2)};
    const Vec3 size = estimate_size(prior, deform);
    for (int c = 0; c < 3; ++c) {
      double lo = 1e300, hi = -1e300;
      for (int i = 0; i < 30; ++i) {
        const double v = prior.points(i, c) + deform.offsets(i, c);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      CHECK(size[c] == doctest::Approx(hi - lo));
    }
  }
}

TEST_CASE("loss terms") {
  std::mt19937_64 rng(10);
  SUBCASE("depth l1") {
    Eigen::VectorXd a(2), b(2);
    a << 1.0, 2.0;
    b << 1.0, 2.0;
    CHECK(loss_depth_l1(a, b) == doctest::Approx(0.0));
    b << 0.9, 2.1;
    CHECK(loss_depth_l1(a, b) == doctest::Approx(0.1));
    Eigen::VectorXd c(3);
    CHECK_THROWS_AS(loss_depth_l1(a, c), InvalidInput);

    Eigen::VectorXd p(50), q(50);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < 50; ++i) {
      p[i] = gauss(rng);
      q[i] = gauss(rng);
    }
    double sum = 0.0;
    for (int i = 0; i < 50; ++i) sum += std::abs(p[i] - q[i]);
    CHECK(loss_depth_l1(p, q) == doctest::Approx(sum / 50.0));
  }
  SUBCASE("adversarial losses") {
    Eigen::VectorXd one(1), zero(1), half(1);
    one << 1.0;
    zero << 0.0;
    half << 0.5;
    CHECK(loss_adv_discriminator(one, zero) == doctest::Approx(0.0));
    CHECK(loss_adv_discriminator(half, half) == doctest::Approx(0.5));
    CHECK(loss_adv_generator(one) == doctest::Approx(0.0));
    CHECK(loss_adv_generator(zero) == doctest::Approx(1.0));

    Eigen::VectorXd r(8), f(8);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < 8; ++i) {
      r[i] = gauss(rng);
      f[i] = gauss(rng);
    }
    double dsum = 0.0, gsum = 0.0;
    for (int i = 0; i < 8; ++i) {
      dsum += (r[i] - 1.0) * (r[i] - 1.0) / 8.0 + f[i] * f[i] / 8.0;
      gsum += (f[i] - 1.0) * (f[i] - 1.0) / 8.0;
    }
    CHECK(loss_adv_discriminator(r, f) == doctest::Approx(dsum));
    CHECK(loss_adv_generator(f) == doctest::Approx(gsum));
  }
  SUBCASE("correspondence smooth-l1") {
    PointCloud a{Points::Zero(1, 3)}, b{Points::Zero(1, 3)};
    CHECK(loss_corr(a, b) == doctest::Approx(0.0));
    b.points(0, 0) = 0.5;
    CHECK(loss_corr(a, b) == doctest::Approx(0.125 / 3.0));

    PointCloud p{random_points(12, rng, 2.0)}, q{random_points(12, rng, 2.0)};
    double sum = 0.0;
    for (int i = 0; i < 12; ++i)
      for (int c = 0; c < 3; ++c) {
        const double d = std::abs(p.points(i, c) - q.points(i, c));
        sum += d < 1.0 ? 0.5 * d * d : d - 0.5;
      }
    CHECK(loss_corr(p, q) == doctest::Approx(sum / 36.0));
  }
  SUBCASE("entropy") {
    AssignField onehot{Eigen::MatrixXd::Identity(4, 4)};
    CHECK(loss_entropy(onehot) == doctest::Approx(0.0));
    AssignField uniform{Eigen::MatrixXd::Constant(3, 4, 0.25)};
    CHECK(loss_entropy(uniform) == doctest::Approx(std::log(4.0)));

    const AssignField soft = random_row_stochastic(10, 6, rng);
    double sum = 0.0;
    for (int i = 0; i < 10; ++i) sum += -std::log(soft.weights.row(i).maxCoeff());
    CHECK(loss_entropy(soft) == doctest::Approx(sum / 10.0));

    // Minimized on one-hot rows, maximized on uniform rows.
    CHECK(loss_entropy(onehot) <= loss_entropy(soft));
    AssignField uniform6{Eigen::MatrixXd::Constant(10, 6, 1.0 / 6.0)};
    CHECK(loss_entropy(soft) <= loss_entropy(uniform6) + 1e-12);
  }
  SUBCASE("regularizer") {
    AssignField zero{Eigen::MatrixXd::Zero(3, 4)};
    CHECK(loss_reg(zero) == doctest::Approx(0.0));
    AssignField onehot{Eigen::MatrixXd::Identity(5, 5)};
    CHECK(loss_reg(onehot) == doctest::Approx(1.0 / 5.0));

    const AssignField soft = random_row_stochastic(7, 9, rng);
    double sum = 0.0;
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j < 9; ++j) sum += soft.weights(i, j) * soft.weights(i, j);
    CHECK(loss_reg(soft) == doctest::Approx(sum / 63.0));
  }
}

TEST_CASE("total loss") {
  const LossWeights w;  // published defaults
  SUBCASE("zeros") {
    CHECK(total_loss({}, w) == doctest::Approx(0.0));
  }
  SUBCASE("all ones with the published weights") {
    LossTerms t{1, 1, 1, 1, 1, 1, 1};
    CHECK(total_loss(t, w) == doctest::Approx(7.2101).epsilon(1e-12));
  }
  SUBCASE("dot-product oracle and linearity") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> uni(0.0, 2.0);
    LossTerms t{uni(rng), uni(rng), uni(rng), uni(rng),
                uni(rng), uni(rng), uni(rng)};
    const double expected = w.depth * t.depth + w.adv_disc * t.adv_disc +
                            w.adv_gen * t.adv_gen + w.corr * t.corr +
                            w.chamfer * t.chamfer + w.entropy * t.entropy +
                            w.reg * t.reg;
    CHECK(total_loss(t, w) == doctest::Approx(expected));

    // Linear in each term holding the others fixed.
    LossTerms t2 = t;
    t2.chamfer += 1.0;
    CHECK(total_loss(t2, w) - total_loss(t, w) ==
          doctest::Approx(w.chamfer).epsilon(1e-12));
  }
}
