#include <doctest.h>

#include <cmath>
#include <cstring>

#include "clab/basis.hpp"
#include "clab/rng.hpp"

#include "test_util.hpp"

using clab::cdouble;
using clab::cvec;
using clab::OperatorMatrix;
using clab::PreferredBasis;
using clab::StateVector;
using clab::TensorPartition;

namespace {

// Full-space reference for the determination-equation matrix:
// g_{k'k} = <u_k' x phi_k' | H | u_k x phi_k> with phi_k the normalized
// conditional state; assembled with Eigen only.
Eigen::MatrixXcd ref_g(const PreferredBasis& basis, const OperatorMatrix& H,
                       const StateVector& psi, int s) {
  const int d = basis.d;
  const int n = static_cast<int>(psi.partition.total_dim);
  const Eigen::MatrixXcd Hm = testutil::to_eigen(H.entries, n, n);
  std::vector<Eigen::VectorXcd> embedded;
  for (int k = 0; k < d; ++k) {
    cvec phi = testutil::ref_partial_inner(basis.col(k), psi, s);
    const double nn = std::sqrt(clab::kern::norm_sq(phi.data(), phi.size()));
    for (auto& a : phi) a /= nn;
    const StateVector full =
        clab::embed_product(psi.partition, s, basis.col(k), phi);
    embedded.push_back(testutil::to_eigen_vec(full.amps));
  }
  Eigen::MatrixXcd g(d, d);
  for (int kp = 0; kp < d; ++kp)
    for (int k = 0; k < d; ++k)
      g(kp, k) = embedded[static_cast<std::size_t>(kp)].dot(
          Hm * embedded[static_cast<std::size_t>(k)]);
  return g;
}

}  // namespace

TEST_SUITE("basis") {

TEST_CASE("dof audit: constraints equal unknowns at every dimension") {
  for (int d = 1; d <= 6; ++d) {
    const auto audit = clab::dof_count(d);
    CHECK(audit.constraints == static_cast<long long>(d) * (d + 1));
    CHECK(audit.unknowns == static_cast<long long>(d) * d + d);
    CHECK(audit.equal);
  }
  const auto two = clab::dof_count(2);
  CHECK(two.constraints == 6);
  CHECK(two.unknowns == 6);
}

TEST_CASE("fix_gauge makes the dominant component real positive") {
  const clab::CounterRng rng(501, 0, 0);
  PreferredBasis b = testutil::rand_basis(rng, 0, 4, 0);
  clab::fix_gauge(b);
  CHECK(b.max_unitarity_defect() <= 1e-12);
  for (int k = 0; k < 4; ++k) {
    const auto col = b.col(k);
    int big = 0;
    for (int i = 1; i < 4; ++i)
      if (std::abs(col[static_cast<std::size_t>(i)]) >
          std::abs(col[static_cast<std::size_t>(big)]))
        big = i;
    CHECK(col[static_cast<std::size_t>(big)].imag() ==
          doctest::Approx(0.0).epsilon(1e-12));
    CHECK(col[static_cast<std::size_t>(big)].real() > 0.0);
  }
}

TEST_CASE("residual matrix agrees with the full-space Eigen reference") {
  const clab::CounterRng rng(502, 0, 0);
  const TensorPartition p({3, 4});
  const StateVector psi = testutil::rand_state(rng, p, 0);
  const OperatorMatrix H(p, testutil::rand_hermitian(rng, 12, 2000), true);
  const PreferredBasis basis = testutil::rand_basis(rng, 0, 3, 9000);

  const auto ev = clab::residual_matrix(basis, H, psi, 0);
  const Eigen::MatrixXcd g = ref_g(basis, H, psi, 0);

  double R_ref = 0.0;
  for (int kp = 0; kp < 3; ++kp)
    for (int k = 0; k < 3; ++k) {
      CHECK(std::abs(ev.g[static_cast<std::size_t>(kp) * 3 + k] - g(kp, k)) <=
            1e-12);
      if (kp > k) R_ref += std::norm(g(kp, k));
    }
  CHECK(ev.R == doctest::Approx(R_ref).epsilon(1e-10));
  CHECK(clab::residual_norm(basis, H, psi, 0) ==
        doctest::Approx(R_ref).epsilon(1e-10));

  // Phase rotations of the columns leave the residual unchanged.
  PreferredBasis rot = basis;
  for (int k = 0; k < 3; ++k) {
    const cdouble ph = std::exp(cdouble{0.0, 0.7 * (k + 1)});
    for (int i = 0; i < 3; ++i)
      rot.U[static_cast<std::size_t>(k) * 3 + i] *= ph;
  }
  CHECK(clab::residual_norm(rot, H, psi, 0) ==
        doctest::Approx(ev.R).epsilon(1e-9));
}

TEST_CASE("non-interacting Hamiltonians zero the residual in the eigenbasis") {
  const clab::CounterRng rng(503, 0, 0);
  const TensorPartition p1({3}), penv({4});
  const OperatorMatrix H1(p1, testutil::rand_hermitian(rng, 3, 0), true);
  const OperatorMatrix Henv(penv, testutil::rand_hermitian(rng, 4, 1000), true);
  const OperatorMatrix H =
      clab::op_add(clab::op_tensor(H1, OperatorMatrix::identity(penv)),
                   clab::op_tensor(OperatorMatrix::identity(p1), Henv));

  const auto iso = clab::isolated_eigenbasis(H1);
  // Eigen-equation residual and ascending order.
  const Eigen::MatrixXcd H1m = testutil::to_eigen(H1.entries, 3, 3);
  for (int k = 0; k < 3; ++k) {
    const Eigen::VectorXcd v = testutil::to_eigen_vec(
        cvec(iso.basis.col(k).begin(), iso.basis.col(k).end()));
    CHECK((H1m * v - iso.eigenvalues[static_cast<std::size_t>(k)] * v).norm() <=
          1e-12);
    if (k > 0)
      CHECK(iso.eigenvalues[static_cast<std::size_t>(k - 1)] <=
            iso.eigenvalues[static_cast<std::size_t>(k)]);
  }

  const TensorPartition p({3, 4});
  const StateVector psi = testutil::rand_state(rng, p, 4000);
  CHECK(clab::residual_norm(iso.basis, H, psi, 0) <= 1e-20);

  const auto ev = clab::residual_matrix(iso.basis, H, psi, 0);
  // Diagonal: E_k = eps_k + <H_env> in the k-th conditional state.
  for (int k = 0; k < 3; ++k) {
    cvec phi = testutil::ref_partial_inner(iso.basis.col(k), psi, 0);
    const double nn = std::sqrt(clab::kern::norm_sq(phi.data(), phi.size()));
    for (auto& a : phi) a /= nn;
    const Eigen::VectorXcd pv = testutil::to_eigen_vec(phi);
    const Eigen::MatrixXcd He = testutil::to_eigen(Henv.entries, 4, 4);
    const double want = iso.eigenvalues[static_cast<std::size_t>(k)] +
                        pv.dot(He * pv).real();
    CHECK(ev.g[static_cast<std::size_t>(k) * 3 + k].real() ==
          doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("solver recovers the isolated-regime eigenbasis") {
  const clab::CounterRng rng(504, 0, 0);
  const TensorPartition p1({3}), penv({2});
  const OperatorMatrix H1(p1, testutil::rand_hermitian(rng, 3, 0), true);
  const OperatorMatrix Henv(penv, testutil::rand_hermitian(rng, 2, 500), true);
  const OperatorMatrix H =
      clab::op_add(clab::op_tensor(H1, OperatorMatrix::identity(penv)),
                   clab::op_tensor(OperatorMatrix::identity(p1), Henv));
  const TensorPartition p({3, 2});
  const StateVector psi = testutil::rand_state(rng, p, 2000);

  const auto sol = clab::solve_preferred_basis(H, psi, 0);
  CHECK(sol.converged);
  CHECK(sol.residual <= 1e-10);
  CHECK(sol.vacuous.empty());

  // Columns match the eigenbasis after the shared canonical ordering
  // (ascending real energy); overlap |<v_k|u_k>| per column.
  const auto iso = clab::isolated_eigenbasis(H1);
  for (int k = 0; k < 3; ++k) {
    cdouble ov = 0.0;
    for (int i = 0; i < 3; ++i)
      ov += std::conj(iso.basis.col(k)[static_cast<std::size_t>(i)]) *
            sol.basis.col(k)[static_cast<std::size_t>(i)];
    CHECK(std::abs(ov) >= 1.0 - 1e-8);
  }
}

TEST_CASE("solver is deterministic for a fixed option set") {
  const clab::CounterRng rng(505, 0, 0);
  const TensorPartition p({3, 3});
  const StateVector psi = testutil::rand_state(rng, p, 0);
  const OperatorMatrix H(p, testutil::rand_hermitian(rng, 9, 3000), true);

  const auto a = clab::solve_preferred_basis(H, psi, 0);
  const auto b = clab::solve_preferred_basis(H, psi, 0);
  REQUIRE(a.basis.U.size() == b.basis.U.size());
  CHECK(std::memcmp(a.basis.U.data(), b.basis.U.data(),
                    a.basis.U.size() * sizeof(cdouble)) == 0);
  CHECK(a.residual == b.residual);
  CHECK(a.iterations == b.iterations);
  CHECK(a.winning_seed == b.winning_seed);
}

TEST_CASE("strong position coupling drags the basis to the coupling axis") {
  const clab::CounterRng rng(506, 0, 0);
  const TensorPartition p1({2}), penv({2});
  const OperatorMatrix H1(p1, testutil::rand_hermitian(rng, 2, 0), true);
  // X x X coupling, diagonal in the computational basis.
  cvec x1(4, cdouble{0.0});
  x1[3] = 1.0;  // diag(0, 1)
  const OperatorMatrix X(p1, x1, true);
  const OperatorMatrix Hg =
      clab::op_add(clab::op_tensor(H1, OperatorMatrix::identity(penv)),
                   clab::op_tensor(X, X), 100.0);

  const TensorPartition p({2, 2});
  const StateVector psi = testutil::rand_state(rng, p, 700);
  const auto sol = clab::solve_preferred_basis(Hg, psi, 0);
  CHECK(sol.converged);
  // Each solved column concentrates on one computational axis.
  for (int k = 0; k < 2; ++k) {
    double best = 0.0;
    for (int i = 0; i < 2; ++i)
      best = std::max(best,
                      std::abs(sol.basis.col(k)[static_cast<std::size_t>(i)]));
    CHECK(best >= 0.99);
  }
}

TEST_CASE("a trivial Hamiltonian converges immediately on the first start") {
  const TensorPartition p({2, 2});
  const StateVector psi(p, {cdouble{0.5}, cdouble{0.5}, cdouble{0.5},
                            cdouble{0.5}});
  const auto sol = clab::solve_preferred_basis(
      clab::OperatorMatrix::identity(p), psi, 0);
  CHECK(sol.converged);
  CHECK(sol.residual <= 1e-12);
  CHECK(sol.winning_seed == -1);  // identity start already minimal
}

TEST_CASE("a state with an empty branch reports the vacuous column") {
  // psi = |0> x chi exactly: conditioning on |1> has no weight.
  const TensorPartition p({2, 3});
  cvec amps(6, cdouble{0.0});
  amps[0] = 0.6;
  amps[1] = cdouble{0.0, 0.8};
  const StateVector psi(p, amps);
  const clab::CounterRng rng(507, 0, 0);
  const OperatorMatrix H(p, testutil::rand_hermitian(rng, 6, 0), true);

  const auto ev = clab::residual_matrix(PreferredBasis::identity(0, 2), H, psi, 0);
  REQUIRE(ev.vacuous_col.size() == 2);
  CHECK_FALSE(ev.vacuous_col[0]);
  CHECK(ev.vacuous_col[1]);
  // Rows and columns touching the vacuous branch are zeroed.
  CHECK(ev.g[1] == cdouble{0.0});
  CHECK(ev.g[2] == cdouble{0.0});
  CHECK(ev.g[3] == cdouble{0.0});
}

}  // TEST_SUITE
