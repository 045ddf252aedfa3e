#include "rsmfg/montecarlo.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "rsmfg/errors.h"
#include "rsmfg/parallel.h"
#include "rsmfg/rng.h"
#include "flat.h"

namespace rsmfg {

namespace {

using flat::Accumulator;
using flat::Flatten;
using flat::FlattenMatrix;
using flat::MatTVec;
using flat::MatVec;

double SafeZ(double diff, double se) {
  if (se > 0.0) return diff / se;
  if (diff == 0.0) return 0.0;
  return std::copysign(std::numeric_limits<double>::infinity(), diff);
}

// Flattened coefficients for fast per-path simulation.
class Kernel {
 public:
  Kernel(const LqgProblem& p, const FeedbackLaw& law, SdeScheme scheme)
      : n_(p.n), m_(p.m), r_(p.r), steps_(law.K_gain.grid.steps()),
        h_(law.K_gain.grid.step()), scheme_(scheme),
        grid_(law.K_gain.grid) {
    p.CheckDimensions();
    if (law.K_gain.rows() != p.m || law.K_gain.cols() != p.n ||
        law.k_offset.rows() != p.m || law.k_offset.cols() != 1) {
      throw DimensionMismatch("feedback law does not match the problem");
    }
    Flatten(Sample(p.A, grid_), &A_);
    Flatten(Sample(p.b, grid_), &b_);
    Flatten(Sample(p.sigma, grid_), &sig_);
    Flatten(law.K_gain, &K_);
    Flatten(law.k_offset, &k_);
    FlattenMatrix(p.B, &B_);
    x0_.assign(p.x0.data(), p.x0.data() + n_);
  }

  int n() const { return n_; }
  int m() const { return m_; }
  int nodes() const { return steps_ + 1; }
  const TimeGrid& grid() const { return grid_; }

  // Closed-loop path; x and u are node-major.
  void RunClosedLoop(NormalStream& rng, double* x, double* u) const {
    Run<true>(rng, nullptr, x, u);
  }

  // Open-loop path under the node controls v.
  void RunOpenLoop(NormalStream& rng, const double* v, double* x) const {
    Run<false>(rng, v, x, nullptr);
  }

 private:
  template <bool kClosed>
  void Run(NormalStream& rng, const double* v, double* x, double* u) const {
    const int n = n_, m = m_, r = r_;
    double dw[16], f[16], fp[16], xp[16], up[16], noise[16];
    std::copy(x0_.begin(), x0_.end(), x);
    const double sqh = std::sqrt(h_);
    for (int i = 0; i < steps_; ++i) {
      const double* xc = x + i * n;
      double* xn = x + (i + 1) * n;
      const double* ui;
      if constexpr (kClosed) {
        double* uc = u + i * m;
        for (int a = 0; a < m; ++a) uc[a] = k_[i * m + a];
        MatVec(&K_[i * m * n], xc, m, n, uc, true);
        ui = uc;
      } else {
        ui = v + i * m;
      }
      Drift(i, xc, ui, f);
      for (int c = 0; c < r; ++c) dw[c] = sqh * rng();
      MatVec(&sig_[i * n * r], dw, n, r, noise, false);
      if (scheme_ == SdeScheme::kEulerMaruyama) {
        for (int a = 0; a < n; ++a) xn[a] = xc[a] + h_ * f[a] + noise[a];
      } else {
        for (int a = 0; a < n; ++a) xp[a] = xc[a] + h_ * f[a] + noise[a];
        const double* un;
        if constexpr (kClosed) {
          for (int a = 0; a < m; ++a) up[a] = k_[(i + 1) * m + a];
          MatVec(&K_[(i + 1) * m * n], xp, m, n, up, true);
          un = up;
        } else {
          un = v + (i + 1) * m;
        }
        Drift(i + 1, xp, un, fp);
        // Trapezoidal average of sigma for time-dependent diffusion.
        MatVec(&sig_[(i + 1) * n * r], dw, n, r, noise, true);
        for (int a = 0; a < n; ++a) {
          xn[a] = xc[a] + 0.5 * h_ * (f[a] + fp[a]) + 0.5 * noise[a];
        }
      }
      for (int a = 0; a < n; ++a) {
        if (!std::isfinite(xn[a]) || std::abs(xn[a]) > kBlowUpBound) {
          const double t = grid_.node(i + 1);
          char buf[96];
          std::snprintf(buf, sizeof buf, "simulated state blew up near t=%.6g",
                        t);
          throw NonFiniteState(t, buf);
        }
      }
    }
    if constexpr (kClosed) {
      double* ul = u + steps_ * m;
      for (int a = 0; a < m; ++a) ul[a] = k_[steps_ * m + a];
      MatVec(&K_[steps_ * m * n], x + steps_ * n, m, n, ul, true);
    }
  }

  void Drift(int i, const double* x, const double* u, double* f) const {
    for (int a = 0; a < n_; ++a) f[a] = b_[i * n_ + a];
    MatVec(&A_[i * n_ * n_], x, n_, n_, f, true);
    MatVec(B_.data(), u, n_, m_, f, true);
  }

  int n_, m_, r_, steps_;
  double h_;
  SdeScheme scheme_;
  TimeGrid grid_;
  std::vector<double> A_, b_, sig_, K_, k_, B_, x0_;
};

void CheckSmallDims(const LqgProblem& p) {
  if (p.n > 16 || p.m > 16 || p.r > 16) {
    throw DimensionMismatch("simulation supports dimensions up to 16");
  }
}

// Row-major copies of the cost data for PathCost.
struct CostData {
  int n, m;
  std::vector<double> Q, S, R, Q_hat, eta, zeta;

  explicit CostData(const LqgProblem& p) : n(p.n), m(p.m) {
    FlattenMatrix(p.Q, &Q);
    FlattenMatrix(p.S, &S);
    FlattenMatrix(p.R, &R);
    FlattenMatrix(p.Q_hat, &Q_hat);
    eta.assign(p.eta.data(), p.eta.data() + n);
    zeta.assign(p.zeta.data(), p.zeta.data() + m);
  }

  double Running(const double* x, const double* u) const {
    double q = 0.0, su = 0.0, ru = 0.0, lin = 0.0;
    for (int a = 0; a < n; ++a) {
      double row = 0.0;
      for (int b = 0; b < n; ++b) row += Q[a * n + b] * x[b];
      q += x[a] * row;
      double srow = 0.0;
      for (int b = 0; b < m; ++b) srow += S[a * m + b] * u[b];
      su += x[a] * srow;
      lin += eta[a] * x[a];
    }
    for (int a = 0; a < m; ++a) {
      double row = 0.0;
      for (int b = 0; b < m; ++b) row += R[a * m + b] * u[b];
      ru += u[a] * row;
      lin += zeta[a] * u[a];
    }
    return 0.5 * q + su + 0.5 * ru - lin;
  }

  double Lambda(const TimeGrid& grid, const double* x, const double* u) const {
    const int steps = grid.steps();
    double sum = 0.5 * (Running(x, u) + Running(x + steps * n, u + steps * m));
    for (int i = 1; i < steps; ++i) sum += Running(x + i * n, u + i * m);
    const double* xt = x + steps * n;
    double term = 0.0;
    for (int a = 0; a < n; ++a) {
      double row = 0.0;
      for (int b = 0; b < n; ++b) row += Q_hat[a * n + b] * xt[b];
      term += xt[a] * row;
    }
    return sum * grid.step() + 0.5 * term;
  }
};

struct Workspace {
  std::vector<double> x, u, y, v;
  explicit Workspace(const Kernel& k)
      : x(k.nodes() * k.n()), u(k.nodes() * k.m()), y(k.nodes() * k.n()),
        v(k.nodes() * k.m()) {}
};

// Costate p_i = Ups_inv(t_i)' [Ups(T)' Q_hat x_T + ∫_{t_i}^T Ups(s)' g ds],
// g = Q x + S u - eta, evaluated along one path.
class Costate {
 public:
  Costate(const LqgProblem& p, const TimeGrid& grid) : n_(p.n), m_(p.m) {
    StateTransition st = ComputeStateTransition(p.A, grid);
    Flatten(st.upsilon, &ups_);
    Flatten(st.upsilon_inv, &ups_inv_);
    FlattenMatrix(p.Q, &Q_);
    FlattenMatrix(p.S, &S_);
    FlattenMatrix(p.Q_hat, &Q_hat_);
    eta_.assign(p.eta.data(), p.eta.data() + n_);
    steps_ = grid.steps();
    h_ = grid.step();
  }

  // Fills p (node-major, (steps+1) x n).
  void Compute(const double* x, const double* u, double* p) const {
    const int n = n_, nn = n * n;
    double g[16], term[16], acc[16], prev[16], cur[16];
    MatVec(Q_hat_.data(), x + steps_ * n, n, n, g, false);
    MatTVec(&ups_[steps_ * nn], g, n, n, term);
    MatTVec(&ups_inv_[steps_ * nn], term, n, n, p + steps_ * n);
    Integrand(steps_, x, u, prev);
    for (int a = 0; a < n; ++a) acc[a] = 0.0;
    for (int i = steps_ - 1; i >= 0; --i) {
      Integrand(i, x, u, cur);
      for (int a = 0; a < n; ++a) {
        acc[a] += 0.5 * h_ * (cur[a] + prev[a]);
        prev[a] = cur[a];
        g[a] = term[a] + acc[a];
      }
      MatTVec(&ups_inv_[i * nn], g, n, n, p + i * n);
    }
  }

 private:
  // out = Ups(t_i)' (Q x_i + S u_i - eta).
  void Integrand(int i, const double* x, const double* u, double* out) const {
    const int n = n_, m = m_;
    double g[16];
    MatVec(Q_.data(), x + i * n, n, n, g, false);
    MatVec(S_.data(), u + i * m, n, m, g, true);
    for (int a = 0; a < n; ++a) g[a] -= eta_[a];
    MatTVec(&ups_[i * n * n], g, n, n, out);
  }

  int n_, m_, steps_;
  double h_;
  std::vector<double> ups_, ups_inv_, Q_, S_, Q_hat_, eta_;
};

// omega at node i along the reference path.
struct FlatPerturbation {
  int n, m;
  std::vector<double> W, w;

  FlatPerturbation(const Perturbation& omega, int n_, int m_) : n(n_), m(m_) {
    if (omega.W.rows() != m || omega.W.cols() != n || omega.w.rows() != m ||
        omega.w.cols() != 1) {
      throw DimensionMismatch("perturbation does not match the problem");
    }
    Flatten(omega.W, &W);
    Flatten(omega.w, &w);
  }

  void At(int i, const double* x, double* out) const {
    for (int a = 0; a < m; ++a) out[a] = w[i * m + a];
    MatVec(&W[i * m * n], x + i * n, m, n, out, true);
  }
};

void CheckGrid(const FeedbackLaw& law, const Perturbation& omega) {
  if (!(law.K_gain.grid == omega.W.grid) || !(law.K_gain.grid == omega.w.grid)) {
    throw DimensionMismatch("perturbation grid differs from the law grid");
  }
}

}  // namespace

FeedbackLaw OpenLoopLaw(const MatrixTrajectory& u, int n) {
  return {MatrixTrajectory(u.grid, MatrixXd::Zero(u.rows(), n)), u};
}

Perturbation ConstantPerturbation(const TimeGrid& grid, const MatrixXd& W,
                                  const MatrixXd& w) {
  return {MatrixTrajectory(grid, W), MatrixTrajectory(grid, w)};
}

PathEnsemble Simulate(const LqgProblem& p, const FeedbackLaw& law, int n_paths,
                      std::uint64_t seed, const SimulationOptions& options) {
  CheckSmallDims(p);
  const Kernel kernel(p, law, options.scheme);
  const CostData cost(p);
  const TimeGrid& grid = kernel.grid();
  PathEnsemble ens{grid, p.n, p.m, n_paths, seed, {}, {}, {}};
  ens.log_weights.assign(n_paths, 0.0);
  const std::size_t xs = static_cast<std::size_t>(grid.size()) * p.n;
  const std::size_t us = static_cast<std::size_t>(grid.size()) * p.m;
  if (options.keep_paths) {
    ens.states.assign(xs * n_paths, 0.0);
    ens.controls.assign(us * n_paths, 0.0);
  }
  ParallelFor(n_paths, ResolveThreads(options.threads),
              [&](std::size_t begin, std::size_t end) {
                Workspace ws(kernel);
                for (std::size_t i = begin; i < end; ++i) {
                  double* x = options.keep_paths ? &ens.states[i * xs]
                                                 : ws.x.data();
                  double* u = options.keep_paths ? &ens.controls[i * us]
                                                 : ws.u.data();
                  NormalStream rng(StreamKey(seed, i));
                  kernel.RunClosedLoop(rng, x, u);
                  ens.log_weights[i] = p.delta * cost.Lambda(grid, x, u);
                }
              });
  return ens;
}

PathEnsemble SimulatePerturbed(const LqgProblem& p, const FeedbackLaw& law,
                               const Perturbation& omega, double eps,
                               int n_paths, std::uint64_t seed,
                               const SimulationOptions& options) {
  CheckSmallDims(p);
  CheckGrid(law, omega);
  const Kernel kernel(p, law, options.scheme);
  const CostData cost(p);
  const FlatPerturbation pert(omega, p.n, p.m);
  const TimeGrid& grid = kernel.grid();
  PathEnsemble ens{grid, p.n, p.m, n_paths, seed, {}, {}, {}};
  ens.log_weights.assign(n_paths, 0.0);
  const std::size_t xs = static_cast<std::size_t>(grid.size()) * p.n;
  const std::size_t us = static_cast<std::size_t>(grid.size()) * p.m;
  if (options.keep_paths) {
    ens.states.assign(xs * n_paths, 0.0);
    ens.controls.assign(us * n_paths, 0.0);
  }
  ParallelFor(n_paths, ResolveThreads(options.threads),
              [&](std::size_t begin, std::size_t end) {
                Workspace ws(kernel);
                double om[16];
                for (std::size_t i = begin; i < end; ++i) {
                  NormalStream rng(StreamKey(seed, i));
                  kernel.RunClosedLoop(rng, ws.x.data(), ws.u.data());
                  double* y = options.keep_paths ? &ens.states[i * xs]
                                                 : ws.y.data();
                  double* v = options.keep_paths ? &ens.controls[i * us]
                                                 : ws.v.data();
                  for (int t = 0; t < grid.size(); ++t) {
                    pert.At(t, ws.x.data(), om);
                    for (int a = 0; a < p.m; ++a) {
                      v[t * p.m + a] = ws.u[t * p.m + a] + eps * om[a];
                    }
                  }
                  NormalStream replay(StreamKey(seed, i));
                  kernel.RunOpenLoop(replay, v, y);
                  ens.log_weights[i] = p.delta * cost.Lambda(grid, y, v);
                }
              });
  return ens;
}

double PathCost(const LqgProblem& p, const TimeGrid& grid, const double* x,
                const double* u) {
  return CostData(p).Lambda(grid, x, u);
}

LogMeanExpEstimate LogMeanExp(const std::vector<double>& a) {
  LogMeanExpEstimate out;
  out.n = a.size();
  if (a.empty()) throw DimensionMismatch("log-mean-exp of an empty sample");
  const double c = *std::max_element(a.begin(), a.end());
  if (!std::isfinite(c)) throw NonFiniteState(0.0, "non-finite log weight");
  Accumulator sum;
  for (double v : a) sum.Add(std::exp(v - c));
  const double n = static_cast<double>(a.size());
  const double mean = sum.value() / n;
  out.log_value = c + std::log(mean);
  if (a.size() > 1) {
    Accumulator ss;
    for (double v : a) {
      const double d = std::exp(v - c) - mean;
      ss.Add(d * d);
    }
    const double var = ss.value() / (n - 1.0);
    out.std_error = std::sqrt(var / n) / mean;
  }
  return out;
}

PairedDifference LogMeanExpDifference(const std::vector<double>& a,
                                      const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) {
    throw DimensionMismatch("paired samples differ in size");
  }
  const LogMeanExpEstimate ea = LogMeanExp(a), eb = LogMeanExp(b);
  PairedDifference out{ea.log_value - eb.log_value, 0.0};
  const std::size_t n = a.size();
  if (n < 2) return out;
  // Influence of path i on the difference of logs.
  std::vector<double> f(n);
  Accumulator s;
  for (std::size_t i = 0; i < n; ++i) {
    f[i] = std::exp(a[i] - ea.log_value) - std::exp(b[i] - eb.log_value);
    s.Add(f[i]);
  }
  const double mean = s.value() / static_cast<double>(n);
  Accumulator ss;
  for (double v : f) ss.Add((v - mean) * (v - mean));
  out.std_error = std::sqrt(ss.value() / (n - 1.0) / static_cast<double>(n));
  return out;
}

LogMeanExpEstimate EstimateCost(const PathEnsemble& ens) {
  return LogMeanExp(ens.log_weights);
}

IdentityReport VerifyIdentities(const LqgProblem& p, const RiccatiSolution& sol,
                                int n_paths, std::uint64_t seed,
                                const SimulationOptions& options) {
  CheckSmallDims(p);
  const FeedbackLaw law{sol.K_gain, sol.k_offset};
  const Kernel kernel(p, law, options.scheme);
  const CostData cost(p);
  const TimeGrid& grid = kernel.grid();
  const Costate costate(p, grid);
  const int n = p.n;
  std::vector<double> a(n_paths), p0(static_cast<std::size_t>(n_paths) * n);
  ParallelFor(n_paths, ResolveThreads(options.threads),
              [&](std::size_t begin, std::size_t end) {
                Workspace ws(kernel);
                std::vector<double> costates(grid.size() * n);
                for (std::size_t i = begin; i < end; ++i) {
                  NormalStream rng(StreamKey(seed, i));
                  kernel.RunClosedLoop(rng, ws.x.data(), ws.u.data());
                  a[i] = p.delta * cost.Lambda(grid, ws.x.data(), ws.u.data());
                  costate.Compute(ws.x.data(), ws.u.data(), costates.data());
                  std::copy(costates.begin(), costates.begin() + n,
                            p0.begin() + i * n);
                }
              });

  IdentityReport report;
  const LogMeanExpEstimate lme = LogMeanExp(a);
  const double log_norm = lme.log_value - sol.C_star;
  const double norm = std::exp(log_norm);
  report.normalization = {norm, 1.0, norm * lme.std_error,
                          SafeZ(norm - 1.0, norm * lme.std_error)};
  report.optimal_cost = {lme.log_value, sol.C_star, lme.std_error,
                         SafeZ(lme.log_value - sol.C_star, lme.std_error)};

  const double c = *std::max_element(a.begin(), a.end());
  std::vector<double> w(n_paths);
  Accumulator wsum;
  for (int i = 0; i < n_paths; ++i) {
    w[i] = std::exp(a[i] - c);
    wsum.Add(w[i]);
  }
  const VectorXd target = sol.Pi[0] * p.x0 + sol.s[0].col(0);
  for (int j = 0; j < n; ++j) {
    Accumulator num;
    for (int i = 0; i < n_paths; ++i) num.Add(w[i] * p0[i * n + j]);
    const double est = num.value() / wsum.value();
    Accumulator res;
    for (int i = 0; i < n_paths; ++i) {
      const double d = w[i] * (p0[i * n + j] - est);
      res.Add(d * d);
    }
    const double ratio = n_paths > 1 ? static_cast<double>(n_paths) /
                                           (n_paths - 1.0)
                                     : 0.0;
    const double se = std::sqrt(res.value() * ratio) / wsum.value();
    report.quotient.push_back(
        {est, target(j), se, SafeZ(est - target(j), se)});
  }
  return report;
}

ZScore CheckNormalization(const LqgProblem& p, const RiccatiSolution& sol,
                          int n_paths, std::uint64_t seed,
                          const SimulationOptions& options) {
  return VerifyIdentities(p, sol, n_paths, seed, options).normalization;
}

ZScore CheckOptimalCost(const LqgProblem& p, const RiccatiSolution& sol,
                        int n_paths, std::uint64_t seed,
                        const SimulationOptions& options) {
  return VerifyIdentities(p, sol, n_paths, seed, options).optimal_cost;
}

std::vector<ZScore> CheckMartingaleQuotient(const LqgProblem& p,
                                            const RiccatiSolution& sol,
                                            int n_paths, std::uint64_t seed,
                                            const SimulationOptions& options) {
  return VerifyIdentities(p, sol, n_paths, seed, options).quotient;
}

std::vector<GateauxEstimate> EstimateGateaux(
    const LqgProblem& p, const FeedbackLaw& law,
    const std::vector<Perturbation>& omegas, int n_paths, std::uint64_t seed,
    const SimulationOptions& options) {
  CheckSmallDims(p);
  const Kernel kernel(p, law, options.scheme);
  const CostData cost(p);
  const TimeGrid& grid = kernel.grid();
  const Costate costate(p, grid);
  std::vector<FlatPerturbation> perts;
  for (const Perturbation& om : omegas) {
    CheckGrid(law, om);
    perts.emplace_back(om, p.n, p.m);
  }
  const int n = p.n, m = p.m, J = static_cast<int>(omegas.size());
  std::vector<double> B, R, S;
  FlattenMatrix(p.B, &B);
  FlattenMatrix(p.R, &R);
  FlattenMatrix(p.S, &S);
  std::vector<double> a(n_paths), iota(static_cast<std::size_t>(n_paths) * J);
  const double h = grid.step();
  ParallelFor(n_paths, ResolveThreads(options.threads),
              [&](std::size_t begin, std::size_t end) {
                Workspace ws(kernel);
                std::vector<double> costates(grid.size() * n);
                std::vector<double> grad(grid.size() * m);
                double om[16], tmp[16];
                for (std::size_t i = begin; i < end; ++i) {
                  NormalStream rng(StreamKey(seed, i));
                  const double* x = ws.x.data();
                  const double* u = ws.u.data();
                  kernel.RunClosedLoop(rng, ws.x.data(), ws.u.data());
                  a[i] = p.delta * cost.Lambda(grid, x, u);
                  costate.Compute(x, u, costates.data());
                  // grad_t = B' p_t + R u_t + S' x_t - zeta
                  for (int t = 0; t < grid.size(); ++t) {
                    double* g = &grad[t * m];
                    MatTVec(B.data(), &costates[t * n], n, m, g);
                    MatVec(R.data(), u + t * m, m, m, g, true);
                    MatTVec(S.data(), x + t * n, n, m, tmp);
                    for (int c = 0; c < m; ++c) g[c] += tmp[c] - p.zeta(c);
                  }
                  for (int j = 0; j < J; ++j) {
                    double sum = 0.0;
                    for (int t = 0; t < grid.size(); ++t) {
                      perts[j].At(t, x, om);
                      double dot = 0.0;
                      for (int c = 0; c < m; ++c) dot += om[c] * grad[t * m + c];
                      const bool end_node = t == 0 || t == grid.steps();
                      sum += end_node ? 0.5 * dot : dot;
                    }
                    iota[i * J + j] = sum * h;
                  }
                }
              });

  const double c = *std::max_element(a.begin(), a.end());
  std::vector<double> w(n_paths);
  Accumulator wsum;
  for (int i = 0; i < n_paths; ++i) {
    w[i] = std::exp(a[i] - c);
    wsum.Add(w[i]);
  }
  const double nd = static_cast<double>(n_paths);
  std::vector<GateauxEstimate> out(J);
  for (int j = 0; j < J; ++j) {
    Accumulator s;
    for (int i = 0; i < n_paths; ++i) s.Add(p.delta * w[i] * iota[i * J + j]);
    const double mean = s.value() / nd;
    Accumulator ss, rs;
    const double rel = s.value() / wsum.value();
    for (int i = 0; i < n_paths; ++i) {
      const double v = p.delta * w[i] * iota[i * J + j];
      ss.Add((v - mean) * (v - mean));
      const double r = v - rel * w[i];
      rs.Add(r * r);
    }
    GateauxEstimate& e = out[j];
    e.value = mean;
    e.log_scale = c;
    e.relative = rel;
    if (n_paths > 1) {
      e.std_error = std::sqrt(ss.value() / (nd - 1.0) / nd);
      e.relative_se = std::sqrt(rs.value() * nd / (nd - 1.0)) / wsum.value();
    }
  }
  return out;
}

GateauxEstimate EstimateGateaux(const LqgProblem& p, const FeedbackLaw& law,
                                const Perturbation& omega, int n_paths,
                                std::uint64_t seed,
                                const SimulationOptions& options) {
  return EstimateGateaux(p, law, std::vector<Perturbation>{omega}, n_paths,
                         seed, options)
      .front();
}

GateauxEstimate CentralDifference(const LqgProblem& p, const FeedbackLaw& law,
                                  const Perturbation& omega, double eps,
                                  int n_paths, std::uint64_t seed,
                                  const SimulationOptions& options) {
  SimulationOptions opts = options;
  opts.keep_paths = false;
  const LogMeanExpEstimate base = EstimateCost(Simulate(p, law, n_paths, seed, opts));
  const LogMeanExpEstimate plus =
      EstimateCost(SimulatePerturbed(p, law, omega, eps, n_paths, seed, opts));
  const LogMeanExpEstimate minus =
      EstimateCost(SimulatePerturbed(p, law, omega, -eps, n_paths, seed, opts));
  GateauxEstimate out;
  out.log_scale = base.log_value;
  out.value = (std::exp(plus.log_value - base.log_value) -
               std::exp(minus.log_value - base.log_value)) /
              (2.0 * eps);
  out.relative = out.value;
  return out;
}

std::vector<ConvexityCheck> CheckConvexity(const LqgProblem& p,
                                           const FeedbackLaw& law1,
                                           const FeedbackLaw& law2,
                                           const std::vector<double>& lambdas,
                                           int n_paths, std::uint64_t seed,
                                           const SimulationOptions& options) {
  CheckSmallDims(p);
  const Kernel k1(p, law1, options.scheme);
  const Kernel k2(p, law2, options.scheme);
  if (!(k1.grid() == k2.grid())) {
    throw DimensionMismatch("laws live on different grids");
  }
  const CostData cost(p);
  const TimeGrid& grid = k1.grid();
  const int L = static_cast<int>(lambdas.size());
  // Per path: a1, a2, then one entry per lambda.
  std::vector<double> a(static_cast<std::size_t>(n_paths) * (L + 2));
  ParallelFor(n_paths, ResolveThreads(options.threads),
              [&](std::size_t begin, std::size_t end) {
                Workspace w1(k1), w2(k2);
                std::vector<double> xl(w1.x.size()), ul(w1.u.size());
                for (std::size_t i = begin; i < end; ++i) {
                  NormalStream r1(StreamKey(seed, i));
                  k1.RunClosedLoop(r1, w1.x.data(), w1.u.data());
                  NormalStream r2(StreamKey(seed, i));
                  k2.RunClosedLoop(r2, w2.x.data(), w2.u.data());
                  double* row = &a[i * (L + 2)];
                  row[0] = p.delta * cost.Lambda(grid, w1.x.data(), w1.u.data());
                  row[1] = p.delta * cost.Lambda(grid, w2.x.data(), w2.u.data());
                  for (int l = 0; l < L; ++l) {
                    const double lam = lambdas[l];
                    for (std::size_t q = 0; q < xl.size(); ++q) {
                      xl[q] = lam * w1.x[q] + (1.0 - lam) * w2.x[q];
                    }
                    for (std::size_t q = 0; q < ul.size(); ++q) {
                      ul[q] = lam * w1.u[q] + (1.0 - lam) * w2.u[q];
                    }
                    row[2 + l] = p.delta * cost.Lambda(grid, xl.data(), ul.data());
                  }
                }
              });
  const double c = *std::max_element(a.begin(), a.end());
  const double nd = static_cast<double>(n_paths);
  std::vector<ConvexityCheck> out;
  for (int l = 0; l < L; ++l) {
    const double lam = lambdas[l];
    std::vector<double> d(n_paths);
    Accumulator s;
    for (int i = 0; i < n_paths; ++i) {
      const double* row = &a[static_cast<std::size_t>(i) * (L + 2)];
      d[i] = lam * std::exp(row[0] - c) + (1.0 - lam) * std::exp(row[1] - c) -
             std::exp(row[2 + l] - c);
      s.Add(d[i]);
    }
    const double mean = s.value() / nd;
    Accumulator ss;
    for (double v : d) ss.Add((v - mean) * (v - mean));
    const double se = n_paths > 1 ? std::sqrt(ss.value() / (nd - 1.0) / nd) : 0.0;
    out.push_back({lam, mean, se});
  }
  return out;
}

}  // namespace rsmfg
