#include <gtest/gtest.h>

#include "ethdyn/lattice.hpp"
#include "oracle.hpp"

using namespace ethdyn;

namespace {

double hermiticity_rel(const SparseOperator& A) { return A.hermiticity_defect() / std::max(A.max_abs(), 1e-300); }

}  // namespace

TEST(Lattice, TiltedIsingL3IsTracelessHermitian) {
  auto H = build_hamiltonian(tilted_ising_preset(3));
  EXPECT_EQ(H.dim(), 27u);
  EXPECT_NEAR(std::abs(H.trace()), 0.0, 1e-13);
  EXPECT_LE(hermiticity_rel(H), 1e-12);
}

TEST(Lattice, LongRangeNormalizationL4) {
  EXPECT_NEAR(long_range_normalization(4, 1.5), 0.68599, 5e-6);
  EXPECT_NEAR(long_range_normalization(4, 1.5), std::pow(2.125, -0.5), 1e-14);
}

TEST(Lattice, SecondMomentDensityL4) {
  auto s = tilted_ising_preset(4);
  auto Hd = oracle::tilted_ising(4, s.J, s.hx, s.hz);
  const double brute = (Hd * Hd).trace().real() / 81.0 / 4.0;
  const double analytic = 2.0 / 3.0 * (s.hx * s.hx + s.hz * s.hz) + 4.0 / 9.0 * s.J * s.J;
  EXPECT_NEAR(brute, analytic, 1e-12);
  EXPECT_NEAR(analytic, 1.5689, 1e-4);
  auto H = oracle::to_dense(build_hamiltonian(s));
  EXPECT_NEAR((H * H).trace().real() / 81.0 / 4.0, brute, 1e-12);
}

TEST(Lattice, HamiltoniansMatchKroneckerOracle) {
  for (int L : {3, 4, 5}) {
    auto ti = tilted_ising_preset(L);
    EXPECT_LE(oracle::max_abs(oracle::to_dense(build_hamiltonian(ti)) - oracle::tilted_ising(L, ti.J, ti.hx, ti.hz)),
              1e-12)
        << L;
    auto lr = long_range_ising_preset(L);
    EXPECT_LE(
        oracle::max_abs(oracle::to_dense(build_hamiltonian(lr)) - oracle::long_range_ising(L, lr.J, lr.hx, lr.alpha)),
        1e-12)
        << L;
  }
}

TEST(Lattice, KernelMatchesSparseMatvec) {
  for (int L : {4, 9, 10}) {
    for (auto spec : {tilted_ising_preset(L), long_range_ising_preset(L)}) {
      SpinChainKernel k(spec);
      auto H = k.to_sparse();
      auto v = oracle::random_state(k.dim(), 7);
      StateVector a(k.dim()), b(k.dim());
      k.apply(v, a);
      H.apply(v, b);
      double worst = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
      EXPECT_LE(worst, 1e-12) << spec.describe();
    }
  }
}

TEST(Lattice, TiltedIsingNonzeroCount) {
  for (int L : {3, 5}) {
    auto H = build_hamiltonian(tilted_ising_preset(L));
    EXPECT_LE(H.nnz(), static_cast<std::size_t>(2 * L + 1) * ipow3(L));
  }
}

TEST(Lattice, L2WarnsAndKeepsBothBonds) {
  std::vector<std::string> seen;
  auto old = warning_sink();
  warning_sink() = [&](const std::string& m) { seen.push_back(m); };
  auto s = tilted_ising_preset(2);
  auto H = build_hamiltonian(s);
  warning_sink() = old;
  EXPECT_FALSE(seen.empty());
  // |+1,+1> has diagonal 2J + 2hz with the bond counted twice
  EXPECT_NEAR(H.at(0, 0).real(), 2 * s.J + 2 * s.hz, 1e-14);
}

TEST(Lattice, InvalidSpecs) {
  SpinChainSpec s = tilted_ising_preset(1);
  EXPECT_THROW(build_hamiltonian(s), InvalidArgument);
  s = long_range_ising_preset(4);
  s.alpha = 0.0;
  EXPECT_THROW(build_hamiltonian(s), InvalidArgument);
  EXPECT_THROW(build_hamiltonian(tilted_ising_preset(21)), InvalidArgument);
  EXPECT_THROW(preset("nope", 4), InvalidArgument);
  EXPECT_EQ(preset("long-range-ising-paper", 6).J, 2.0);
}

TEST(Observable, SingleSiteTraces) {
  auto O = build_observable(ObservableDescriptor::parse("Sx1"), tilted_ising_preset(2));
  EXPECT_EQ(O.dim(), 9u);
  EXPECT_NEAR(std::abs(O.trace()), 0.0, 1e-15);
  auto d = oracle::to_dense(O);
  EXPECT_NEAR((d * d).trace().real() / 9.0, 2.0 / 3.0, 1e-14);
}

TEST(Observable, ProductTraces) {
  auto O = build_observable(ObservableDescriptor::parse("Sx1Sx2"), tilted_ising_preset(3));
  auto d = oracle::to_dense(O);
  EXPECT_NEAR((d * d).trace().real() / 27.0, 4.0 / 9.0, 1e-14);
  oracle::Mat ref = oracle::site_op(oracle::spin('x'), 1, 3) * oracle::site_op(oracle::spin('x'), 2, 3);
  EXPECT_LE(oracle::max_abs(d - ref), 1e-15);
}

TEST(Observable, MatchesKroneckerForAllAxes) {
  const int L = 4;
  for (std::string text : {"Sy2", "Sz4", "Sx1Sy3", "Sz2Sy1Sx4", "Sy1Sy2Sy3Sy4"}) {
    auto desc = ObservableDescriptor::parse(text);
    auto O = oracle::to_dense(build_observable(desc, tilted_ising_preset(L)));
    oracle::Mat ref = oracle::Mat::Identity(81, 81);
    for (const auto& f : desc.factors) ref = ref * oracle::site_op(oracle::spin(axis_char(f.axis)), f.site, L);
    EXPECT_LE(oracle::max_abs(O - ref), 1e-15) << text;
  }
}

TEST(Observable, CommutationRelation) {
  auto spec = tilted_ising_preset(2);
  auto X = oracle::to_dense(build_observable(ObservableDescriptor::parse("Sx1"), spec));
  auto Y = oracle::to_dense(build_observable(ObservableDescriptor::parse("Sy1"), spec));
  auto Z = oracle::to_dense(build_observable(ObservableDescriptor::parse("Sz1"), spec));
  EXPECT_LE(oracle::max_abs(X * Y - Y * X - std::complex<double>(0, 1) * Z), 1e-14);
}

TEST(Observable, ParseAndValidate) {
  auto d = ObservableDescriptor::parse(" i[H, Sx1 Sz2] ");
  EXPECT_TRUE(d.commutator);
  ASSERT_EQ(d.factors.size(), 2u);
  EXPECT_EQ(d.factors[1].site, 2);
  EXPECT_EQ(d.factors[1].axis, SpinAxis::Z);
  EXPECT_EQ(d.to_string(), "i[H,Sx1Sz2]");
  EXPECT_EQ(ObservableDescriptor::sx_string(3).to_string(), "Sx1Sx2Sx3");
  EXPECT_THROW(ObservableDescriptor::parse("Sq1"), InvalidArgument);
  EXPECT_THROW(ObservableDescriptor::parse("Sx"), InvalidArgument);
  EXPECT_THROW(ObservableDescriptor::parse(""), InvalidArgument);
  EXPECT_THROW(ObservableDescriptor::parse("i[H,Sx1"), InvalidArgument);
  auto spec = tilted_ising_preset(3);
  EXPECT_THROW(build_observable(ObservableDescriptor::parse("Sx1Sz1"), spec), InvalidArgument);
  EXPECT_THROW(build_observable(ObservableDescriptor::parse("Sx4"), spec), InvalidArgument);
  EXPECT_THROW(build_observable(ObservableDescriptor::parse("Sx0"), spec), InvalidArgument);
}

TEST(Commutator, TrivialCases) {
  auto spec = tilted_ising_preset(3);
  auto H = build_hamiltonian(spec);
  EXPECT_LE(commutator_observable(H, H).max_abs(), 1e-13);
  EXPECT_EQ(commutator_observable(H, SparseOperator::identity(H.dim())).nnz(), 0u);
  EXPECT_THROW(commutator_observable(H, SparseOperator::identity(9)), InvalidArgument);
}

TEST(Commutator, SzInTiltedIsingL4) {
  auto spec = tilted_ising_preset(4);
  auto H = build_hamiltonian(spec);
  auto Sz = build_observable(ObservableDescriptor::parse("Sz1"), spec);
  auto C = commutator_observable(H, Sz);
  EXPECT_LE(hermiticity_rel(C), 1e-12);
  auto Hd = oracle::to_dense(H), Od = oracle::to_dense(Sz), Cd = oracle::to_dense(C);
  const std::complex<double> i(0, 1);
  EXPECT_LE(oracle::max_abs(Cd - i * (Hd * Od - Od * Hd)), 1e-13);
  auto Sy = oracle::site_op(oracle::spin('y'), 1, 4);
  EXPECT_GT(std::abs((Cd * Sy).trace()), 1.0);
  oracle::Mat Hm = oracle::Mat::Identity(81, 81);
  for (int m = 1; m <= 4; ++m) {
    Hm = Hm * Hd;
    EXPECT_LE(std::abs((Cd * Hm).trace()), 1e-9 * std::pow(Hd.norm(), m)) << m;
  }
  // i[H,O] = -i[O,H]
  auto R = commutator_observable(Sz, H);
  EXPECT_LE(oracle::max_abs(oracle::to_dense(R) + Cd), 1e-14);
  auto desc = ObservableDescriptor::parse("i[H,Sz1]");
  EXPECT_LE(oracle::max_abs(oracle::to_dense(build_observable(desc, spec)) - Cd), 1e-14);
}

TEST(Apply, IdentityAndChecks) {
  auto I = SparseOperator::identity(27);
  auto v = oracle::random_state(27, 3);
  auto w = ethdyn::apply(I, std::span<const Complex>(v));
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(w[i], v[i]);
  StateVector bad(26);
  EXPECT_THROW(ethdyn::apply(I, std::span<const Complex>(bad)), InvalidArgument);
  v[5] = {std::nan(""), 0.0};
  EXPECT_THROW(ethdyn::apply(I, std::span<const Complex>(v)), InvalidArgument);
}

TEST(Apply, EigenvectorOfL3) {
  auto spec = tilted_ising_preset(3);
  auto H = build_hamiltonian(spec);
  Eigen::SelfAdjointEigenSolver<oracle::Mat> es(oracle::tilted_ising(3, spec.J, spec.hx, spec.hz));
  for (int k : {0, 13, 26}) {
    StateVector v(27);
    for (int i = 0; i < 27; ++i) v[i] = es.eigenvectors()(i, k);
    auto w = ethdyn::apply(H, std::span<const Complex>(v));
    for (int i = 0; i < 27; ++i) EXPECT_NEAR(std::abs(w[i] - es.eigenvalues()(k) * v[i]), 0.0, 1e-10);
  }
}

TEST(Apply, PositiveSemidefiniteAdjointProduct) {
  auto spec = tilted_ising_preset(4);
  auto A = build_observable(ObservableDescriptor::parse("Sx1Sy2"), spec);
  for (unsigned seed = 0; seed < 10; ++seed) {
    auto v = oracle::random_state(A.dim(), seed);
    StateVector w(A.dim());
    A.apply(v, w);
    EXPECT_GE(norm2(w), 0.0);
    EXPECT_NEAR(A.matrix_element(w, v).imag(), 0.0, 1e-10);  // <Av|A|v> real for Hermitian A
  }
}

TEST(Apply, ParallelIsBitwiseIdentical) {
  auto H = build_hamiltonian(tilted_ising_preset(9));
  auto v = oracle::random_state(H.dim(), 11);
  StateVector a(H.dim()), b(H.dim());
  H.apply(v, a);
  H.apply_parallel(v, b, 4);
  EXPECT_EQ(0, std::memcmp(a.data(), b.data(), a.size() * sizeof(Complex)));
}

TEST(Bounds, DiagonalMatrix) {
  std::vector<double> d{-1.0, 0.0, 2.0};
  auto b = spectral_bounds(SparseOperator::diagonal(d));
  EXPECT_LE(b.lo, -1.0);
  EXPECT_GE(b.hi, 2.0);
}

TEST(Bounds, ContainSpectrumWithWidening) {
  for (int L = 3; L <= 6; ++L)
    for (auto spec : {tilted_ising_preset(L), long_range_ising_preset(L)}) {
      auto H = build_hamiltonian(spec);
      Eigen::SelfAdjointEigenSolver<oracle::Mat> es(oracle::to_dense(H), Eigen::EigenvaluesOnly);
      const double emin = es.eigenvalues().minCoeff(), emax = es.eigenvalues().maxCoeff();
      auto b = spectral_bounds(H);
      EXPECT_LE(b.lo, emin) << spec.describe();
      EXPECT_GE(b.hi, emax) << spec.describe();
      EXPECT_GE(b.half_width(), 1.01 * 0.5 * (emax - emin) * (1 - 1e-12)) << spec.describe();
      auto bk = spectral_bounds(SpinChainKernel(spec));
      EXPECT_LE(bk.lo, emin);
      EXPECT_GE(bk.hi, emax);
    }
}

TEST(Bounds, GershgorinFallback) {
  std::vector<std::string> seen;
  auto old = warning_sink();
  warning_sink() = [&](const std::string& m) { seen.push_back(m); };
  auto H = build_hamiltonian(tilted_ising_preset(5));
  auto b = spectral_bounds(H, 5, 1e-300);
  warning_sink() = old;
  EXPECT_FALSE(b.from_lanczos);
  EXPECT_FALSE(seen.empty());
  auto g = H.gershgorin_bounds();
  EXPECT_LE(b.lo, g.first);
  EXPECT_GE(b.hi, g.second);
}

TEST(Properties, HermiticityOfBuiltOperators) {
  auto spec = long_range_ising_preset(5);
  auto H = build_hamiltonian(spec);
  EXPECT_LE(hermiticity_rel(H), 1e-12);
  for (std::string t : {"Sx1", "Sy2", "Sx1Sy2Sz3", "i[H,Sx1]", "i[H,Sy1Sx2]"}) {
    auto O = build_observable(ObservableDescriptor::parse(t), spec, &H);
    EXPECT_TRUE(O.hermitian());
    EXPECT_LE(hermiticity_rel(O), 1e-12) << t;
  }
}

TEST(Properties, TranslationCovariance) {
  for (auto spec : {tilted_ising_preset(5), long_range_ising_preset(6)}) {
    auto H = build_hamiltonian(spec);
    double worst = 0.0;
    for (std::size_t r = 0; r < H.dim(); ++r) {
      auto c = H.row_cols(r);
      auto v = H.row_values(r);
      for (std::size_t k = 0; k < c.size(); ++k)
        worst = std::max(worst, std::abs(H.at(translate_state(r, spec.L), translate_state(c[k], spec.L)) - v[k]));
    }
    EXPECT_LE(worst, 1e-12) << spec.describe();
  }
}

TEST(Properties, LongRangeApproachesNearestNeighbour) {
  SpinChainSpec lr = long_range_ising_preset(5);
  lr.alpha = 50.0;
  lr.hx = 0.0;
  SpinChainSpec nn{5, Model::TiltedIsing, lr.J / long_range_normalization(5, 50.0), 0.0, 0.0, 1.0};
  auto a = oracle::to_dense(build_hamiltonian(lr));
  auto b = oracle::to_dense(build_hamiltonian(nn));
  EXPECT_LE(oracle::max_abs(a - b), 1e-8);
}

TEST(Properties, PruningThreshold) {
  auto A = SparseOperator::from_rows(3, [](std::size_t r, std::vector<SparseEntry>& e) {
    e.push_back({static_cast<std::uint32_t>(r), 1e-16});
    e.push_back({0, 1.0});
    e.push_back({0, -1.0});
  }, true);
  EXPECT_EQ(A.nnz(), 0u);
}
