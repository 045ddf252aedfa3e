#include "rsmfg/mfg.h"

#include <memory>
#include <utility>

#include "rsmfg/errors.h"

namespace rsmfg {

namespace {

// Time function that stacks the given column functions vertically.
TimeFunction StackColumns(const std::vector<TimeFunction>& parts) {
  Eigen::Index rows = 0;
  bool all_constant = true;
  for (const TimeFunction& f : parts) {
    rows += f.rows();
    all_constant = all_constant && f.is_constant();
  }
  auto eval = [parts, rows](double t) {
    MatrixXd out(rows, 1);
    Eigen::Index at = 0;
    for (const TimeFunction& f : parts) {
      out.middleRows(at, f.rows()) = f(t);
      at += f.rows();
    }
    return out;
  };
  if (all_constant) return TimeFunction::Constant(eval(0.0));
  return TimeFunction::FromCallable(rows, 1, eval);
}

struct MinorBlocks {
  MatrixXd B_rinv;      // B_k R_k^-1
  MatrixXd B_rinv_Bt;   // B_k R_k^-1 B_k'
  MatrixXd rest_const;  // B_k R_k^-1 n_bar_k
};

MinorBlocks MakeBlocks(const MajorMinorSpec& spec, int k,
                       const ExtendedSystem& sys) {
  const MinorTypeParams& p = spec.minors[k];
  MinorBlocks out;
  out.B_rinv = p.R.ldlt().solve(p.B.transpose()).transpose();
  out.B_rinv_Bt = out.B_rinv * p.B.transpose();
  out.rest_const = out.B_rinv * sys.n_bar;
  return out;
}

MeanFieldCoefficients InitialCoefficients(const MajorMinorSpec& spec,
                                          const TimeGrid& grid,
                                          const std::vector<ExtendedSystem>& sys,
                                          const TimeFunction& m_breve) {
  const int n = spec.n, K = spec.K();
  MatrixXd rest(n * K, 1);
  for (int k = 0; k < K; ++k) {
    rest.middleRows(k * n, n) = MakeBlocks(spec, k, sys[k]).rest_const;
  }
  return {MatrixTrajectory(grid, MatrixXd::Zero(n * K, n * K)),
          MatrixTrajectory(grid, MatrixXd::Zero(n * K, n * K)),
          MatrixTrajectory(grid, MatrixXd::Zero(n * K, n)),
          MatrixTrajectory(grid, MatrixXd::Zero(n * K, n)),
          MatrixTrajectory(grid, rest),
          MatrixTrajectory(grid, MatrixXd::Zero(n * K, 1)),
          m_breve};
}

LqgProblem ToProblem(const ExtendedSystem& sys, int m, double T) {
  LqgProblem p;
  p.n = sys.dim;
  p.m = m;
  p.r = static_cast<int>(sys.Sigma.cols());
  p.A = TimeFunction::Constant(sys.A_tilde);
  p.B = sys.B_own;
  p.b = sys.M_tilde;
  p.sigma = sys.Sigma;
  p.Q = sys.Q;
  p.S = sys.S;
  p.R = sys.R;
  p.eta = sys.eta_bar;
  p.zeta = sys.n_bar;
  p.Q_hat = sys.G;
  p.delta = sys.delta;
  p.x0 = sys.x0;
  p.T = T;
  return p;
}

MatrixTrajectory Blend(const MatrixTrajectory& cand, const MatrixTrajectory& prev,
                       double rho) {
  if (rho == 0.0) return cand;
  std::vector<MatrixXd> v(cand.values.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = (1.0 - rho) * cand[i] + rho * prev[i];
  }
  return MatrixTrajectory(cand.grid, std::move(v));
}

MfgIterate Snapshot(const MeanFieldCoefficients& c) {
  return {c.A_bar, c.G_bar, c.m_bar()};
}

}  // namespace

MatrixXd PiRow(const std::vector<double>& pi, const MatrixXd& M) {
  const Eigen::Index K = static_cast<Eigen::Index>(pi.size());
  MatrixXd out(M.rows(), M.cols() * K);
  for (Eigen::Index k = 0; k < K; ++k) {
    out.middleCols(k * M.cols(), M.cols()) = pi[k] * M;
  }
  return out;
}

MatrixTrajectory MeanFieldCoefficients::m_bar() const {
  std::vector<MatrixXd> v(m_rest.values.size());
  for (int i = 0; i < m_rest.grid.size(); ++i) {
    v[i] = m_breve(m_rest.grid.node(i)) + m_rest[i];
  }
  return MatrixTrajectory(m_rest.grid, std::move(v));
}

MeanFieldMatrices AssembleMeanField(const MajorMinorSpec& spec) {
  spec.CheckDimensions();
  const int n = spec.n, m = spec.m, K = spec.K();
  MeanFieldMatrices out;
  out.A_breve = MatrixXd::Zero(n * K, n * K);
  out.G_breve = MatrixXd::Zero(n * K, n);
  out.B_breve = MatrixXd::Zero(n * K, m * K);
  std::vector<TimeFunction> b;
  for (int k = 0; k < K; ++k) {
    const MinorTypeParams& p = spec.minors[k];
    out.A_breve.middleRows(k * n, n) = PiRow(spec.pi, p.F);
    out.A_breve.block(k * n, k * n, n, n) += p.A;
    out.G_breve.middleRows(k * n, n) = p.G;
    out.B_breve.block(k * n, k * m, n, m) = p.B;
    b.push_back(p.b);
  }
  out.m_breve = StackColumns(b);
  return out;
}

ExtendedSystem AssembleMajor(const MajorMinorSpec& spec) {
  const MeanFieldMatrices mf = AssembleMeanField(spec);
  const MajorParams& a = spec.major;
  const int n = spec.n, m = spec.m, K = spec.K();
  const int dim = n * (1 + K);
  ExtendedSystem sys;
  sys.dim = dim;
  sys.A_tilde = MatrixXd::Zero(dim, dim);
  sys.A_tilde.block(0, 0, n, n) = a.A;
  sys.A_tilde.block(0, n, n, n * K) = PiRow(spec.pi, a.F);
  sys.A_tilde.block(n, 0, n * K, n) = mf.G_breve;
  sys.A_tilde.block(n, n, n * K, n * K) = mf.A_breve;
  sys.B_own = MatrixXd::Zero(dim, m);
  sys.B_own.topRows(n) = a.B;
  sys.B_mf = MatrixXd::Zero(dim, m * K);
  sys.B_mf.bottomRows(n * K) = mf.B_breve;
  sys.M_tilde = StackColumns({a.b, mf.m_breve});
  const TimeFunction sig = a.sigma;
  const int r = spec.r;
  if (sig.is_constant()) {
    MatrixXd s = MatrixXd::Zero(dim, r);
    s.topRows(n) = sig.constant_value();
    sys.Sigma = TimeFunction::Constant(s);
  } else {
    sys.Sigma = TimeFunction::FromCallable(dim, r, [sig, dim, n, r](double t) {
      MatrixXd s = MatrixXd::Zero(dim, r);
      s.topRows(n) = sig(t);
      return s;
    });
  }
  MatrixXd L(n, dim);
  L << MatrixXd::Identity(n, n), -PiRow(spec.pi, a.H);
  sys.Q = L.transpose() * a.Q * L;
  sys.G = L.transpose() * a.Q_hat * L;
  sys.S = L.transpose() * a.S;
  sys.R = a.R;
  sys.eta_bar = L.transpose() * a.Q * a.eta;
  sys.n_bar = a.S.transpose() * a.eta;
  sys.delta = a.delta;
  sys.x0 = VectorXd(dim);
  sys.x0.head(n) = a.x0;
  for (int k = 0; k < K; ++k) sys.x0.segment(n + k * n, n) = spec.minors[k].x0;
  return sys;
}

ExtendedSystem AssembleMinor(const MajorMinorSpec& spec, int k) {
  if (k < 0 || k >= spec.K()) throw OutOfRange("minor type index");
  const ExtendedSystem major = AssembleMajor(spec);
  const MinorTypeParams& p = spec.minors[k];
  const int n = spec.n, m = spec.m, K = spec.K(), r = spec.r;
  const int d0 = major.dim;
  const int dim = n * (2 + K);
  ExtendedSystem sys;
  sys.dim = dim;
  sys.A_tilde = MatrixXd::Zero(dim, dim);
  sys.A_tilde.block(0, 0, n, n) = p.A;
  sys.A_tilde.block(0, n, n, n) = p.G;
  sys.A_tilde.block(0, 2 * n, n, n * K) = PiRow(spec.pi, p.F);
  sys.A_tilde.block(n, n, d0, d0) = major.A_tilde;
  sys.B_own = MatrixXd::Zero(dim, m);
  sys.B_own.topRows(n) = p.B;
  sys.B_major = MatrixXd::Zero(dim, m);
  sys.B_major.bottomRows(d0) = major.B_own;
  sys.B_mf = MatrixXd::Zero(dim, m * K);
  sys.B_mf.bottomRows(d0) = major.B_mf;
  sys.M_tilde = StackColumns({p.b, major.M_tilde});
  const TimeFunction sig = p.sigma;
  const TimeFunction sig0 = major.Sigma;
  auto sigma_at = [sig, sig0, dim, n, d0, r](double t) {
    MatrixXd s = MatrixXd::Zero(dim, 2 * r);
    s.block(0, 0, n, r) = sig(t);
    s.block(n, r, d0, r) = sig0(t);
    return s;
  };
  if (sig.is_constant() && sig0.is_constant()) {
    sys.Sigma = TimeFunction::Constant(sigma_at(0.0));
  } else {
    sys.Sigma = TimeFunction::FromCallable(dim, 2 * r, sigma_at);
  }
  const MatrixXd H_hat_pi = PiRow(spec.pi, p.H_hat);
  MatrixXd L(n, dim);
  L << MatrixXd::Identity(n, n), -p.H, -H_hat_pi;
  MatrixXd L_eta = L;
  if (spec.eta_bar_sign == EtaBarSign::kPlus) {
    L_eta.rightCols(n * K) = H_hat_pi;
  }
  sys.Q = L.transpose() * p.Q * L;
  sys.G = L.transpose() * p.Q_hat * L;
  sys.S = L.transpose() * p.S;
  sys.R = p.R;
  sys.eta_bar = L_eta.transpose() * p.Q * p.eta;
  sys.n_bar = p.S.transpose() * p.eta;
  sys.delta = p.delta;
  sys.x0 = VectorXd(dim);
  sys.x0.head(n) = p.x0;
  sys.x0.tail(d0) = major.x0;
  return sys;
}

MfgEquilibrium IterateOnce(const MajorMinorSpec& spec, const TimeGrid& grid,
                           const MeanFieldCoefficients& coeffs) {
  const int n = spec.n, m = spec.m, K = spec.K();
  ExtendedSystem major_sys = AssembleMajor(spec);
  std::vector<ExtendedSystem> minor_sys;
  for (int k = 0; k < K; ++k) minor_sys.push_back(AssembleMinor(spec, k));
  const int d0 = major_sys.dim;

  // Major agent facing the current mean-field coefficients.
  auto c = std::make_shared<const MeanFieldCoefficients>(coeffs);
  LqgProblem major = ToProblem(major_sys, m, spec.T);
  {
    const MatrixXd top = major_sys.A_tilde.topRows(n);
    major.A = TimeFunction::FromCallable(d0, d0, [c, top, n, d0](double t) {
      MatrixXd a(d0, d0);
      a.topRows(n) = top;
      a.block(n, 0, d0 - n, n) = c->G(t);
      a.block(n, n, d0 - n, d0 - n) = c->A(t);
      return a;
    });
    const TimeFunction b0 = spec.major.b;
    major.b = TimeFunction::FromCallable(d0, 1, [c, b0, n, d0](double t) {
      MatrixXd b(d0, 1);
      b.topRows(n) = b0(t);
      b.bottomRows(d0 - n) = c->m(t);
      return b;
    });
  }
  auto major_sol = std::make_shared<const RiccatiSolution>(SolveLqg(major, grid));

  // Closed-loop major block seen by a minor agent.
  const MatrixXd B0 = major_sys.B_own;
  const MatrixXd B0_rinv = major_sys.R.ldlt().solve(B0.transpose()).transpose();
  const MatrixXd S0t = major_sys.S.transpose();
  const VectorXd n0 = major_sys.n_bar;
  const TimeFunction major_A = major.A;
  const TimeFunction major_b = major.b;

  std::vector<LqgProblem> minor_problems(K);
  std::vector<RiccatiSolution> minor_sols;
  minor_sols.reserve(K);
  for (int k = 0; k < K; ++k) {
    const ExtendedSystem& sys = minor_sys[k];
    const int dk = sys.dim;
    LqgProblem prob = ToProblem(sys, m, spec.T);
    const MatrixXd top = sys.A_tilde.topRows(n);
    prob.A = TimeFunction::FromCallable(
        dk, dk, [=](double t) {
          MatrixXd a = MatrixXd::Zero(dk, dk);
          a.topRows(n) = top;
          a.block(n, n, d0, d0) =
              major_A(t) - B0_rinv * (S0t + B0.transpose() * major_sol->PiAt(t));
          return a;
        });
    const TimeFunction bk = spec.minors[k].b;
    prob.b = TimeFunction::FromCallable(dk, 1, [=](double t) {
      MatrixXd b(dk, 1);
      b.topRows(n) = bk(t);
      b.bottomRows(d0) =
          major_b(t) - B0_rinv * (B0.transpose() * major_sol->sAt(t) - n0);
      return b;
    });
    minor_problems[k] = std::move(prob);
  }
  for (int k = 0; k < K; ++k) {
    minor_sols.push_back(SolveLqg(minor_problems[k], grid));
  }

  // Candidate mean-field coefficients.
  std::vector<MatrixXd> A_bar(grid.size(), MatrixXd::Zero(n * K, n * K));
  std::vector<MatrixXd> dA_bar = A_bar;
  std::vector<MatrixXd> G_bar(grid.size(), MatrixXd::Zero(n * K, n));
  std::vector<MatrixXd> dG_bar = G_bar;
  std::vector<MatrixXd> rest(grid.size(), MatrixXd::Zero(n * K, 1));
  std::vector<MatrixXd> drest = rest;
  for (int k = 0; k < K; ++k) {
    const MinorTypeParams& p = spec.minors[k];
    const ExtendedSystem& sys = minor_sys[k];
    const MinorBlocks blk = MakeBlocks(spec, k, sys);
    const RiccatiSolution& sol = minor_sols[k];
    const MatrixXd S11t = sys.S.block(0, 0, n, m).transpose();
    const MatrixXd S21t = sys.S.block(n, 0, n, m).transpose();
    const MatrixXd S31t = sys.S.block(2 * n, 0, n * K, m).transpose();
    const MatrixXd F_pi = PiRow(spec.pi, p.F);
    const MatrixXd Bt = p.B.transpose();
    for (int i = 0; i < grid.size(); ++i) {
      const MatrixXd& Pi = sol.Pi[i];
      const MatrixXd& dPi = sol.dPi[i];
      auto a = A_bar[i].middleRows(k * n, n);
      a = F_pi - blk.B_rinv * (S31t + Bt * Pi.block(0, 2 * n, n, n * K));
      a.block(0, k * n, n, n) +=
          p.A - blk.B_rinv * (S11t + Bt * Pi.block(0, 0, n, n));
      auto da = dA_bar[i].middleRows(k * n, n);
      da = -blk.B_rinv_Bt * dPi.block(0, 2 * n, n, n * K);
      da.block(0, k * n, n, n) -= blk.B_rinv_Bt * dPi.block(0, 0, n, n);
      G_bar[i].middleRows(k * n, n) =
          p.G - blk.B_rinv * (S21t + Bt * Pi.block(0, n, n, n));
      dG_bar[i].middleRows(k * n, n) = -blk.B_rinv_Bt * dPi.block(0, n, n, n);
      rest[i].middleRows(k * n, n) =
          blk.rest_const - blk.B_rinv_Bt * sol.s[i].topRows(n);
      drest[i].middleRows(k * n, n) = -blk.B_rinv_Bt * sol.ds[i].topRows(n);
    }
  }

  MfgEquilibrium eq{grid,
                    major_sys,
                    minor_sys,
                    major,
                    std::move(minor_problems),
                    *major_sol,
                    std::move(minor_sols),
                    {MatrixTrajectory(grid, std::move(A_bar)),
                     MatrixTrajectory(grid, std::move(dA_bar)),
                     MatrixTrajectory(grid, std::move(G_bar)),
                     MatrixTrajectory(grid, std::move(dG_bar)),
                     MatrixTrajectory(grid, std::move(rest)),
                     MatrixTrajectory(grid, std::move(drest)),
                     coeffs.m_breve},
                    {},
                    {}};
  return eq;
}

MfgEquilibrium SolveConsistency(const MajorMinorSpec& spec,
                                const TimeGrid& grid,
                                const FixedPointOptions& options) {
  ValidateGame(spec);
  if (!(options.tol > 0.0)) throw OutOfRange("tolerance must be positive");
  if (options.max_iter < 1) throw OutOfRange("max_iter must be positive");
  if (!(options.relaxation >= 0.0 && options.relaxation < 1.0)) {
    throw OutOfRange("relaxation must lie in [0, 1)");
  }
  std::vector<ExtendedSystem> minor_sys;
  for (int k = 0; k < spec.K(); ++k) minor_sys.push_back(AssembleMinor(spec, k));
  MeanFieldCoefficients coeffs = InitialCoefficients(
      spec, grid, minor_sys, AssembleMeanField(spec).m_breve);

  IterationLog log;
  log.tol = options.tol;
  std::vector<MfgIterate> iterates;
  const double rho = options.relaxation;
  for (int j = 1; j <= options.max_iter; ++j) {
    MfgEquilibrium eq = IterateOnce(spec, grid, coeffs);
    MeanFieldCoefficients next = eq.coeffs;
    next.A_bar = Blend(next.A_bar, coeffs.A_bar, rho);
    next.dA_bar = Blend(next.dA_bar, coeffs.dA_bar, rho);
    next.G_bar = Blend(next.G_bar, coeffs.G_bar, rho);
    next.dG_bar = Blend(next.dG_bar, coeffs.dG_bar, rho);
    next.m_rest = Blend(next.m_rest, coeffs.m_rest, rho);
    next.dm_rest = Blend(next.dm_rest, coeffs.dm_rest, rho);
    const double err = SupDistance(next.A_bar, coeffs.A_bar) +
                       SupDistance(next.G_bar, coeffs.G_bar);
    log.errors.push_back(err);
    log.iterations = j;
    if (options.keep_iterates) iterates.push_back(Snapshot(next));
    coeffs = std::move(next);
    if (err < options.tol) {
      log.converged = true;
      // The solutions in eq were computed from the previous coefficients,
      // which agree with the final ones to within the tolerance.
      eq.coeffs = coeffs;
      eq.log = log;
      eq.iterates = std::move(iterates);
      return eq;
    }
    if (j == options.max_iter) {
      if (options.throw_on_failure) throw NotConverged(j, err);
      eq.coeffs = coeffs;
      eq.log = log;
      eq.iterates = std::move(iterates);
      return eq;
    }
  }
  throw NotConverged(options.max_iter, log.errors.back());
}

EquilibriumLaws ComputeEquilibriumLaws(const MfgEquilibrium& eq) {
  if (!eq.log.converged) {
    throw NotConverged(eq.log.iterations,
                       eq.log.errors.empty() ? 0.0 : eq.log.errors.back());
  }
  EquilibriumLaws out{{eq.major.K_gain, eq.major.k_offset}, {}};
  for (const RiccatiSolution& s : eq.minors) {
    out.minor.push_back({s.K_gain, s.k_offset});
  }
  return out;
}

MeanControl ComputeMeanControl(const MajorMinorSpec& spec,
                               const MfgEquilibrium& eq) {
  const int n = spec.n, m = spec.m, K = spec.K();
  const int d0 = n * (1 + K);
  std::vector<MatrixXd> Xi(eq.grid.size(), MatrixXd::Zero(m * K, d0));
  std::vector<MatrixXd> vs(eq.grid.size(), MatrixXd::Zero(m * K, 1));
  for (int k = 0; k < K; ++k) {
    const MinorTypeParams& p = spec.minors[k];
    const ExtendedSystem& sys = eq.minor_systems[k];
    const auto ldlt = p.R.ldlt();
    const MatrixXd Bt = p.B.transpose();
    for (int i = 0; i < eq.grid.size(); ++i) {
      const MatrixXd& Pi = eq.minors[k].Pi[i];
      MatrixXd row(m, d0);
      row.leftCols(n) = sys.S.block(n, 0, n, m).transpose() +
                        Bt * Pi.block(0, n, n, n);
      row.rightCols(n * K) = sys.S.block(2 * n, 0, n * K, m).transpose() +
                             Bt * Pi.block(0, 2 * n, n, n * K);
      row.block(0, n + k * n, m, n) +=
          sys.S.block(0, 0, n, m).transpose() + Bt * Pi.block(0, 0, n, n);
      Xi[i].middleRows(k * m, m) = -ldlt.solve(row);
      vs[i].middleRows(k * m, m) =
          -ldlt.solve(Bt * eq.minors[k].s[i].topRows(n) - sys.n_bar);
    }
  }
  return {MatrixTrajectory(eq.grid, std::move(Xi)),
          MatrixTrajectory(eq.grid, std::move(vs))};
}

MatrixTrajectory MeanFieldTrajectory(const MfgEquilibrium& eq,
                                     const TimeFunction& x0_path,
                                     const VectorXd& x_bar0) {
  const MeanFieldCoefficients& c = eq.coeffs;
  auto field = [&](double t, const MatrixXd& x) -> MatrixXd {
    return c.A(t) * x + c.G(t) * x0_path(t) + c.m(t);
  };
  return IntegrateOde(field, x_bar0, eq.grid, Direction::kForward);
}

}  // namespace rsmfg
