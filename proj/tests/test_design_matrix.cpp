#include <gtest/gtest.h>

#include "sere/design_matrix.hpp"

#include <random>

namespace sere {
namespace {

TEST(DesignMatrix, FreshIsScaledIdentity) {
  DesignMatrix<double> d(4, 2.0);
  EXPECT_TRUE(d.matrix().isApprox(2.0 * Eigen::MatrixXd::Identity(4, 4)));
  EXPECT_TRUE(d.inverse().isApprox(0.5 * Eigen::MatrixXd::Identity(4, 4)));
}

TEST(DesignMatrix, UnitVectorQuadForm) {
  DesignMatrix<double> d(3, 1.0);
  EXPECT_DOUBLE_EQ(d.quad_form(Eigen::Vector3d(0, 1, 0)), 1.0);
}

TEST(DesignMatrix, FiveUpdatesMatchDenseInverse) {
  DesignMatrix<double> d(6, 1.0, 0);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n01;
  for (int k = 0; k < 5; ++k) {
    Eigen::VectorXd phi(6);
    for (auto& v : phi) v = n01(rng);
    d.add(phi);
  }
  EXPECT_LT((d.inverse() - d.matrix().inverse()).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT(d.inverse_residual(), 1e-10);
}

TEST(DesignMatrix, PeriodicReinversion) {
  DesignMatrix<double> d(3, 1.0, 2);
  d.add(Eigen::Vector3d(1, 2, 3));
  d.add(Eigen::Vector3d(-1, 0, 4));
  EXPECT_EQ(d.updates(), 2u);
  EXPECT_LT((d.inverse() - d.matrix().inverse()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(DesignMatrix, RejectsBadInput) {
  EXPECT_THROW(DesignMatrix<double>(0, 1.0), std::invalid_argument);
  EXPECT_THROW(DesignMatrix<double>(3, 0.0), std::invalid_argument);
  DesignMatrix<double> d(3, 1.0);
  EXPECT_THROW(d.add(Eigen::Vector2d(1, 1)), std::invalid_argument);
}

}  // namespace
}  // namespace sere
