#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mmks/radial.hpp"

using namespace mmks;
using namespace mmks::radial;

namespace {

// P1 finite elements for -u''/2 + V u = e u on (0, R), u(0) = u(R) = 0.
// Eigenvalues by Sturm counting on the tridiagonal pencil K - e M.
struct FemRadial {
  std::vector<double> kd, ko, md, mo;

  FemRadial(const std::function<double(double)>& v, double r_max, int n) {
    std::vector<double> x(n + 1);
    for (int i = 0; i <= n; ++i) x[i] = r_max * std::pow(static_cast<double>(i) / n, 2.0);
    kd.assign(n - 1, 0.0);
    ko.assign(n - 1, 0.0);
    md.assign(n - 1, 0.0);
    mo.assign(n - 1, 0.0);
    std::vector<double> gx, gw;
    gauss_legendre(4, gx, gw);
    for (int e = 0; e < n; ++e) {
      const double h = x[e + 1] - x[e];
      double a[2][2] = {{0.5 / h, -0.5 / h}, {-0.5 / h, 0.5 / h}};
      double m[2][2] = {{0, 0}, {0, 0}};
      for (std::size_t q = 0; q < gx.size(); ++q) {
        const double t = 0.5 * (gx[q] + 1.0);
        const double w = 0.5 * h * gw[q];
        const double phi[2] = {1.0 - t, t};
        const double vq = v(x[e] + t * h);
        for (int i = 0; i < 2; ++i)
          for (int j = 0; j < 2; ++j) {
            a[i][j] += w * vq * phi[i] * phi[j];
            m[i][j] += w * phi[i] * phi[j];
          }
      }
      const int g[2] = {e - 1, e};  // interior index of the element ends
      for (int i = 0; i < 2; ++i) {
        if (g[i] < 0 || g[i] >= n - 1) continue;
        kd[g[i]] += a[i][i];
        md[g[i]] += m[i][i];
      }
      if (g[0] >= 0 && g[1] < n - 1) {
        ko[g[0]] += a[0][1];
        mo[g[0]] += m[0][1];
      }
    }
  }

  int count_below(double lam) const {
    int neg = 0;
    double d = 0.0;
    for (std::size_t i = 0; i < kd.size(); ++i) {
      const double off = i ? ko[i - 1] - lam * mo[i - 1] : 0.0;
      d = kd[i] - lam * md[i] - (i ? off * off / d : 0.0);
      if (d == 0.0) d = -1e-300;
      if (d < 0.0) ++neg;
    }
    return neg;
  }

  double eigenvalue(int k, double lo, double hi) const {
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (count_below(mid) > k ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
  }
};

}  // namespace

TEST(Radial, OrbitalValues) {
  EXPECT_DOUBLE_EQ(evaluate(Orbital::S1, 1.0), 2.0 * std::exp(-1.0));
  EXPECT_DOUBLE_EQ(evaluate(Orbital::S2, 2.0), 0.0);
  EXPECT_NEAR(evaluate(Orbital::P2, 2.0), 4.0 / (2.0 * std::sqrt(6.0)) * std::exp(-1.0), 1e-15);
}

TEST(Radial, LinearFunctionsInterpolatedExactly) {
  const std::vector<double> pts{0.0, 0.3, 1.1, 2.0, 5.0};
  EXPECT_LT(interp_l2_error([](double r) { return 3.0 * r - 1.0; }, pts), 1e-14);
}

TEST(Radial, UnsortedPointsRejected) {
  const std::vector<double> pts{0.0, 2.0, 1.0};
  EXPECT_THROW(interp_l2_error(Orbital::S1, pts), ContractViolation);
  const std::vector<double> dup{0.0, 1.0, 1.0};
  EXPECT_THROW(interp_l2_error(Orbital::S1, dup), ContractViolation);
}

TEST(Radial, SecondOrderConvergence) {
  for (auto o : {Orbital::S1, Orbital::S2, Orbital::P2}) {
    const double e1 = interp_l2_error(o, uniform_mesh(30.0, 401));
    const double e2 = interp_l2_error(o, uniform_mesh(30.0, 801));
    EXPECT_GE(e1 / e2, 3.8) << label(o);
    EXPECT_LE(e1 / e2, 4.2) << label(o);
  }
}

TEST(Radial, RefinementByInclusionDoesNotIncreaseError) {
  std::vector<double> pts = uniform_mesh(30.0, 11);
  double prev = interp_l2_error(Orbital::S2, pts);
  for (int step = 0; step < 6; ++step) {
    std::vector<double> next;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
      next.push_back(pts[i]);
      if (i % (step + 1) == 0) next.push_back(0.5 * (pts[i] + pts[i + 1]));
    }
    next.push_back(pts.back());
    const double e = interp_l2_error(Orbital::S2, next);
    EXPECT_LE(e, prev * (1.0 + 1e-12));
    prev = e;
    pts = next;
  }
}

TEST(Radial, EquidistributionBalancesIntervalErrors) {
  const std::vector<Orbital> all{Orbital::S1, Orbital::S2, Orbital::P2};
  const auto m = equidistribute(all, 74);
  EXPECT_TRUE(m.converged);
  EXPECT_LE(m.ratio, 1.2);
  ASSERT_EQ(m.points.size(), 74u);
  EXPECT_DOUBLE_EQ(m.points.front(), 0.0);
  EXPECT_DOUBLE_EQ(m.points.back(), 30.0);
  const auto u = uniform_mesh(30.0, 74);
  for (auto o : all) EXPECT_LT(interp_l2_error(o, m.points), interp_l2_error(o, u));
}

TEST(Radial, AufbauShells) {
  const auto be = aufbau(4, 1);
  ASSERT_EQ(be.size(), 3u);
  EXPECT_EQ(be[1].n, 2);
  EXPECT_EQ(be[1].l, 0);
  EXPECT_EQ(be[2].l, 1);
  EXPECT_DOUBLE_EQ(be[2].occupation, 0.0);
  EXPECT_THROW(aufbau(40), ContractViolation);
}

TEST(Radial, BareHydrogenLevels) {
  AtomOptions opt;
  opt.interacting = false;
  const auto h = radial_lda_solve(1.0, 1, opt);
  EXPECT_NEAR(h.eigenvalues[0], -0.5, 1e-9);
  EXPECT_NEAR(h.eigenvalues[1], -0.125, 1e-9);
  const auto he = radial_lda_solve(2.0, 4, opt);
  EXPECT_NEAR(he.eigenvalues[0], -2.0, 1e-8);
  EXPECT_NEAR(he.eigenvalues[2], -0.5, 1e-8);
}

TEST(Radial, FemOracleAgreesOnBareHydrogen) {
  const FemRadial fem([](double r) { return -1.0 / r; }, 40.0, 6000);
  EXPECT_NEAR(fem.eigenvalue(0, -1.0, 0.0), -0.5, 2e-5);
  EXPECT_NEAR(fem.eigenvalue(1, -1.0, 0.0), -0.125, 2e-5);
}

// Reference LDA values: NIST atomic reference data (unpolarized LDA).
TEST(Radial, LdaAtomsMatchReferenceData) {
  const auto h = radial_lda_solve(1.0, 1);
  EXPECT_NEAR(h.eigenvalues[0], -0.233471, 2e-5);
  EXPECT_NEAR(h.total_energy, -0.445671, 2e-5);
  const auto he = radial_lda_solve(2.0, 2);
  EXPECT_NEAR(he.eigenvalues[0], -0.570425, 2e-5);
  EXPECT_NEAR(he.total_energy, -2.834836, 2e-5);
  const auto be = radial_lda_solve(4.0, 4);
  EXPECT_NEAR(be.eigenvalues[0], -3.856411, 2e-5);
  EXPECT_NEAR(be.eigenvalues[1], -0.205744, 2e-5);
  EXPECT_NEAR(be.total_energy, -14.447209, 2e-5);
}

TEST(Radial, FemOracleReproducesLdaEigenvaluesInSelfConsistentPotential) {
  const auto be = radial_lda_solve(4.0, 4);
  const auto& r = be.r;
  const auto& v = be.v_eff;
  auto pot = [&](double x) {
    if (x <= r.front()) return v.front();
    if (x >= r.back()) return v.back();
    const auto it = std::upper_bound(r.begin(), r.end(), x);
    const std::size_t i = static_cast<std::size_t>(it - r.begin()) - 1;
    const double t = (std::log(x) - std::log(r[i])) / (std::log(r[i + 1]) - std::log(r[i]));
    // interpolate r V (smooth at the origin)
    return ((1.0 - t) * r[i] * v[i] + t * r[i + 1] * v[i + 1]) / x;
  };
  const FemRadial fem(pot, 40.0, 8000);
  EXPECT_NEAR(fem.eigenvalue(0, -20.0, 0.0), be.eigenvalues[0], 5e-4);
  EXPECT_NEAR(fem.eigenvalue(1, -20.0, 0.0), be.eigenvalues[1], 5e-5);
}
