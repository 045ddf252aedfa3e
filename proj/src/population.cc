#include "rsmfg/population.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "flat.h"
#include "rsmfg/errors.h"
#include "rsmfg/parallel.h"
#include "rsmfg/rng.h"

namespace rsmfg {

namespace {

using flat::Accumulator;
using flat::Flatten;
using flat::FlattenMatrix;
using flat::MatVec;

constexpr std::uint64_t kMajorStream = ~0ULL;

MatrixTrajectory Subsample(const MatrixTrajectory& traj, const TimeGrid& coarse,
                           int stride) {
  std::vector<MatrixXd> v(coarse.size());
  for (int i = 0; i < coarse.size(); ++i) v[i] = traj[i * stride];
  return MatrixTrajectory(coarse, std::move(v));
}

// True when every block of `block` values repeats the first.
bool IsConstant(const std::vector<double>& v, int block) {
  for (std::size_t i = block; i < v.size(); ++i) {
    if (v[i] != v[i % block]) return false;
  }
  return true;
}

std::vector<double> FlatSamples(const TimeFunction& f, const TimeGrid& grid) {
  std::vector<double> out;
  Flatten(Sample(f, grid), &out);
  return out;
}

struct FlatLaw {
  int m = 0, d = 0;
  std::vector<double> K, k;

  FlatLaw() = default;
  FlatLaw(const FeedbackLaw& law, const TimeGrid& coarse, int stride)
      : m(static_cast<int>(law.K_gain.rows())),
        d(static_cast<int>(law.K_gain.cols())) {
    Flatten(Subsample(law.K_gain, coarse, stride), &K);
    Flatten(Subsample(law.k_offset, coarse, stride), &k);
  }
  // u = K_i X + k_i.
  void Apply(int i, const double* X, double* u) const {
    for (int a = 0; a < m; ++a) u[a] = k[i * m + a];
    MatVec(&K[i * m * d], X, m, d, u, true);
  }
  // As Apply, summing the first `own` columns last.
  void ApplyOwnLast(int i, const double* X, int own, double* u) const {
    for (int a = 0; a < m; ++a) {
      const double* row = &K[(i * m + a) * d];
      double acc = k[i * m + a];
      for (int b = own; b < d; ++b) acc += row[b] * X[b];
      for (int b = 0; b < own; ++b) acc += row[b] * X[b];
      u[a] = acc;
    }
  }
};

// Extended running cost with the constant eta' Q eta restored.
struct FlatCost {
  int d = 0, m = 0;
  std::vector<double> Q, S, R, G, eta, zeta;
  double constant = 0.0;

  FlatCost() = default;
  FlatCost(const ExtendedSystem& sys, const MatrixXd& Q_orig,
           const VectorXd& eta_orig)
      : d(sys.dim), m(static_cast<int>(sys.R.rows())) {
    FlattenMatrix(sys.Q, &Q);
    FlattenMatrix(sys.S, &S);
    FlattenMatrix(sys.R, &R);
    FlattenMatrix(sys.G, &G);
    eta.assign(sys.eta_bar.data(), sys.eta_bar.data() + d);
    zeta.assign(sys.n_bar.data(), sys.n_bar.data() + m);
    constant = eta_orig.dot(Q_orig * eta_orig);
  }

  static double Quad(const std::vector<double>& M, const double* x, int d) {
    double s = 0.0;
    for (int a = 0; a < d; ++a) {
      double row = 0.0;
      for (int b = 0; b < d; ++b) row += M[a * d + b] * x[b];
      s += x[a] * row;
    }
    return s;
  }

  double Running(const double* X, const double* u) const {
    double su = 0.0, lin = 0.0;
    for (int a = 0; a < d; ++a) {
      double row = 0.0;
      for (int b = 0; b < m; ++b) row += S[a * m + b] * u[b];
      su += X[a] * row;
      lin += eta[a] * X[a];
    }
    for (int a = 0; a < m; ++a) lin += zeta[a] * u[a];
    return 0.5 * Quad(Q, X, d) + su + 0.5 * Quad(R, u, m) - lin +
           0.5 * constant;
  }

  double Terminal(const double* X) const { return 0.5 * Quad(G, X, d); }
};

struct TypeData {
  std::vector<double> A, F, G, B, b, sig;
  FlatLaw law;
  FlatCost cost;
  std::vector<double> x0;
  double delta = 1.0;
  // A + B K_own at each node, row-major n x n.
  std::vector<double> closed;
  bool constant_sigma = false;
};

class PopulationKernel {
 public:
  PopulationKernel(const MajorMinorSpec& spec, const MfgEquilibrium& eq,
                   const PopulationOptions& options,
                   const std::optional<Override>& override)
      : n_(spec.n), m_(spec.m), r_(spec.r), K_(spec.K()),
        N_(options.n_agents), scheme_(options.scheme),
        grid_(options.coarse_steps == 0 ? eq.grid
                                        : eq.grid.Coarsen(options.coarse_steps)),
        stride_(eq.grid.steps() / grid_.steps()),
        steps_(grid_.steps()),
        h_(grid_.step()),
        pi_(spec.pi) {
    if (N_ < 0) throw OutOfRange("agent count must be nonnegative");
    if (!eq.log.converged) {
      throw NotConverged(eq.log.iterations,
                         eq.log.errors.empty() ? 0.0 : eq.log.errors.back());
    }
    // Weights of the per-type averages in x^(N).
    if (N_ > 0) {
      counts_ = Apportion(N_, spec.pi);
      weights_.resize(K_);
      for (int k = 0; k < K_; ++k) {
        weights_[k] = static_cast<double>(counts_[k]) / N_;
      }
    } else {
      counts_.assign(K_, 1);
      weights_ = spec.pi;
    }
    offsets_.assign(K_ + 1, 0);
    std::partial_sum(counts_.begin(), counts_.end(), offsets_.begin() + 1);
    slots_ = offsets_[K_];
    slot_type_.resize(slots_);
    for (int k = 0; k < K_; ++k) {
      for (int j = offsets_[k]; j < offsets_[k + 1]; ++j) slot_type_[j] = k;
    }
    streams_.resize(slots_);
    std::iota(streams_.begin(), streams_.end(), 0);
    if (!options.streams.empty()) {
      if (N_ == 0 || static_cast<int>(options.streams.size()) != slots_) {
        throw DimensionMismatch("one stream index per minor agent required");
      }
      streams_ = options.streams;
    }
    // Averages visit agents by stream, so they do not depend on which slot
    // holds which stream.
    sum_order_.resize(slots_);
    std::iota(sum_order_.begin(), sum_order_.end(), 0);
    std::sort(sum_order_.begin(), sum_order_.end(), [&](int a, int b) {
      return std::pair(slot_type_[a], streams_[a]) <
             std::pair(slot_type_[b], streams_[b]);
    });

    // Cost data use the realized weights.
    MajorMinorSpec weighted = spec;
    weighted.pi = weights_;
    const ExtendedSystem major_sys = AssembleMajor(weighted);
    FlattenMatrix(spec.major.A, &A0_);
    FlattenMatrix(spec.major.F, &F0_);
    FlattenMatrix(spec.major.B, &B0_);
    b0_ = FlatSamples(spec.major.b, grid_);
    sig0_ = FlatSamples(spec.major.sigma, grid_);
    law0_ = FlatLaw({eq.major.K_gain, eq.major.k_offset}, grid_, stride_);
    cost0_ = FlatCost(major_sys, spec.major.Q, spec.major.eta);
    delta0_ = spec.major.delta;
    x00_.assign(spec.major.x0.data(), spec.major.x0.data() + n_);
    types_.resize(K_);
    for (int k = 0; k < K_; ++k) {
      const MinorTypeParams& p = spec.minors[k];
      TypeData& t = types_[k];
      FlattenMatrix(p.A, &t.A);
      FlattenMatrix(p.F, &t.F);
      FlattenMatrix(p.G, &t.G);
      FlattenMatrix(p.B, &t.B);
      t.b = FlatSamples(p.b, grid_);
      t.sig = FlatSamples(p.sigma, grid_);
      t.constant_sigma = IsConstant(t.sig, n_ * r_);
      t.law = FlatLaw({eq.minors[k].K_gain, eq.minors[k].k_offset}, grid_,
                      stride_);
      t.cost = FlatCost(AssembleMinor(weighted, k), p.Q, p.eta);
      t.delta = p.delta;
      t.closed.assign((steps_ + 1) * n_ * n_, 0.0);
      for (int i = 0; i <= steps_; ++i) {
        double* M = &t.closed[i * n_ * n_];
        const double* Kk = &t.law.K[i * m_ * t.law.d];
        for (int a = 0; a < n_; ++a) {
          for (int b = 0; b < n_; ++b) {
            double acc = t.A[a * n_ + b];
            for (int c = 0; c < m_; ++c) {
              acc += t.B[a * m_ + c] * Kk[c * t.law.d + b];
            }
            M[a * n_ + b] = acc;
          }
        }
      }
      t.x0.assign(p.x0.data(), p.x0.data() + n_);
    }
    Flatten(Subsample(eq.coeffs.A_bar, grid_, stride_), &Abar_);
    Flatten(Subsample(eq.coeffs.G_bar, grid_, stride_), &Gbar_);
    Flatten(Subsample(eq.m_bar(), grid_, stride_), &mbar_);

    if (override) {
      const Override& o = *override;
      override_major_ = o.agent.major;
      if (o.agent.major) {
        override_slot_ = -1;
      } else {
        override_slot_ = Tracked(o.agent.type);
        if (override_slot_ < 0) throw OutOfRange("no minor agent of that type");
      }
      const ExtendedSystem& sys = o.agent.major
                                      ? eq.major_system
                                      : eq.minor_systems[o.agent.type];
      if (o.law.K_gain.rows() != m_ || o.law.K_gain.cols() != sys.dim ||
          !(o.law.K_gain.grid == eq.grid) || !(o.law.k_offset.grid == eq.grid)) {
        throw DimensionMismatch("override law does not match the agent");
      }
      override_law_ = FlatLaw(o.law, grid_, stride_);
      has_override_ = true;
    }
  }

  const TimeGrid& grid() const { return grid_; }
  const std::vector<int>& counts() const { return counts_; }
  int K() const { return K_; }
  int n() const { return n_; }

  // First slot of type k, or -1.
  int Tracked(int k) const {
    if (k < 0 || k >= K_) throw OutOfRange("minor type index");
    return counts_[k] > 0 ? offsets_[k] : -1;
  }

  struct Output {
    double major_cost = 0.0;
    std::vector<double> minor_cost;
    double fluct_end = 0.0, fluct_max = 0.0;
    double* x0_path = nullptr;
    double* x_avg_path = nullptr;
    double* x_bar_path = nullptr;
  };

  struct Work {
    std::vector<double> x0, x0p, f0, f0p, xs, xsp, fs, fsp, xbar, xbarp, g, gp;
    std::vector<double> Y, xavg, X, u, common, shared, dw0, dws, noise, nzs;
    std::vector<double> node_cost;
  };

  Work MakeWork() const {
    const int d = n_ * (2 + K_);
    Work w;
    w.x0.resize(n_); w.x0p.resize(n_); w.f0.resize(n_); w.f0p.resize(n_);
    w.xs.resize(slots_ * n_); w.xsp.resize(slots_ * n_);
    w.fs.resize(slots_ * n_); w.fsp.resize(slots_ * n_);
    w.nzs.resize(slots_ * n_);
    w.xbar.resize(n_ * K_); w.xbarp.resize(n_ * K_);
    w.g.resize(n_ * K_); w.gp.resize(n_ * K_);
    w.Y.resize(n_ * K_); w.xavg.resize(n_);
    w.X.resize(d); w.u.resize(m_); w.common.resize(K_ * m_);
    w.shared.resize(K_ * n_);
    w.dw0.resize(r_); w.dws.resize(slots_ * r_); w.noise.resize(n_);
    w.node_cost.resize(1 + K_);
    return w;
  }

  void Run(int rep, std::uint64_t seed, Work& w, Output& out) const {
    NormalStream major_rng(StreamKey(seed, rep, kMajorStream));
    std::vector<NormalStream> rngs;
    rngs.reserve(slots_);
    for (int j = 0; j < slots_; ++j) {
      rngs.emplace_back(StreamKey(seed, rep, streams_[j]));
    }
    std::copy(x00_.begin(), x00_.end(), w.x0.begin());
    for (int j = 0; j < slots_; ++j) {
      const auto& x0 = types_[slot_type_[j]].x0;
      std::copy(x0.begin(), x0.end(), w.xs.begin() + j * n_);
    }
    for (int k = 0; k < K_; ++k) {
      std::copy(types_[k].x0.begin(), types_[k].x0.end(),
                w.xbar.begin() + k * n_);
    }
    std::vector<double> cost(1 + K_, 0.0);
    out.fluct_max = 0.0;
    const double sqh = std::sqrt(h_);
    for (int i = 0; i <= steps_; ++i) {
      Evaluate(i, w.x0.data(), w.xs.data(), w.xbar.data(), w, w.f0.data(),
               w.fs.data(), w.g.data(), true);
      const double wt = (i == 0 || i == steps_) ? 0.5 * h_ : h_;
      for (int a = 0; a <= K_; ++a) cost[a] += wt * w.node_cost[a];
      RecordNode(i, w, out);
      if (i == steps_) break;

      for (int c = 0; c < r_; ++c) w.dw0[c] = sqh * major_rng();
      for (int j = 0; j < slots_; ++j) {
        for (int c = 0; c < r_; ++c) w.dws[j * r_ + c] = sqh * rngs[j]();
      }
      const bool heun = scheme_ == SdeScheme::kHeun;
      double* x0_next = heun ? w.x0p.data() : w.x0.data();
      double* xs_next = heun ? w.xsp.data() : w.xs.data();
      double* xbar_next = heun ? w.xbarp.data() : w.xbar.data();
      // Predictor, or the full Euler-Maruyama step.
      MatVec(&sig0_[i * n_ * r_], w.dw0.data(), n_, r_, w.noise.data(), false);
      for (int a = 0; a < n_; ++a) {
        x0_next[a] = w.x0[a] + h_ * w.f0[a] + w.noise[a];
      }
      for (int j = 0; j < slots_; ++j) {
        const TypeData& t = types_[slot_type_[j]];
        double* nz = &w.nzs[j * n_];
        MatVec(&t.sig[i * n_ * r_], &w.dws[j * r_], n_, r_, nz, false);
        for (int a = 0; a < n_; ++a) {
          xs_next[j * n_ + a] = w.xs[j * n_ + a] + h_ * w.fs[j * n_ + a] + nz[a];
        }
      }
      for (int a = 0; a < n_ * K_; ++a) {
        xbar_next[a] = w.xbar[a] + h_ * w.g[a];
      }
      if (heun) {
        Evaluate(i + 1, w.x0p.data(), w.xsp.data(), w.xbarp.data(), w,
                 w.f0p.data(), w.fsp.data(), w.gp.data(), false);
        MatVec(&sig0_[i * n_ * r_], w.dw0.data(), n_, r_, w.noise.data(),
               false);
        MatVec(&sig0_[(i + 1) * n_ * r_], w.dw0.data(), n_, r_,
               w.noise.data(), true);
        for (int a = 0; a < n_; ++a) {
          w.x0[a] += 0.5 * h_ * (w.f0[a] + w.f0p[a]) + 0.5 * w.noise[a];
        }
        for (int j = 0; j < slots_; ++j) {
          const TypeData& t = types_[slot_type_[j]];
          double* nz = &w.nzs[j * n_];
          if (!t.constant_sigma) {
            MatVec(&t.sig[(i + 1) * n_ * r_], &w.dws[j * r_], n_, r_, nz,
                   true);
          } else {
            for (int a = 0; a < n_; ++a) nz[a] *= 2.0;
          }
          for (int a = 0; a < n_; ++a) {
            w.xs[j * n_ + a] += 0.5 * h_ * (w.fs[j * n_ + a] + w.fsp[j * n_ + a]) +
                                0.5 * nz[a];
          }
        }
        for (int a = 0; a < n_ * K_; ++a) {
          w.xbar[a] += 0.5 * h_ * (w.g[a] + w.gp[a]);
        }
      }
      CheckStates(i + 1, w);
    }
    // Terminal costs.
    BuildMajorState(w.x0.data(), w.Y.data(), w.X.data());
    cost[0] += cost0_.Terminal(w.X.data());
    for (int k = 0; k < K_; ++k) {
      const int j = Tracked(k);
      if (j < 0) continue;
      BuildMinorState(&w.xs[j * n_], w.x0.data(), w.Y.data(), w.X.data());
      cost[1 + k] += types_[k].cost.Terminal(w.X.data());
    }
    out.major_cost = delta0_ * cost[0];
    out.minor_cost.resize(K_);
    for (int k = 0; k < K_; ++k) out.minor_cost[k] = types_[k].delta * cost[1 + k];
  }

 private:
  void BuildMajorState(const double* x0, const double* Y, double* X) const {
    std::copy(x0, x0 + n_, X);
    std::copy(Y, Y + n_ * K_, X + n_);
  }
  void BuildMinorState(const double* xi, const double* x0, const double* Y,
                       double* X) const {
    std::copy(xi, xi + n_, X);
    std::copy(x0, x0 + n_, X + n_);
    std::copy(Y, Y + n_ * K_, X + 2 * n_);
  }

  // Drifts of every agent and of the mean field at node i. With
  // `node_costs`, also the running costs of the tracked agents.
  void Evaluate(int i, const double* x0, const double* xs, const double* xbar,
                Work& w, double* f0, double* fs, double* g,
                bool node_costs) const {
    const int n = n_, m = m_;
    double* Y = w.Y.data();
    if (N_ > 0) {
      for (int k = 0; k < K_; ++k) {
        double* y = &Y[k * n];
        if (counts_[k] == 0) {
          std::copy(xbar + k * n, xbar + (k + 1) * n, y);
          continue;
        }
        std::fill(y, y + n, 0.0);
        for (int q = offsets_[k]; q < offsets_[k + 1]; ++q) {
          const double* xj = xs + sum_order_[q] * n;
          for (int a = 0; a < n; ++a) y[a] += xj[a];
        }
        for (int a = 0; a < n; ++a) y[a] /= counts_[k];
      }
    } else {
      std::copy(xbar, xbar + n * K_, Y);
    }
    double* xavg = w.xavg.data();
    for (int a = 0; a < n; ++a) {
      double s = 0.0;
      for (int k = 0; k < K_; ++k) s += weights_[k] * Y[k * n + a];
      xavg[a] = s;
    }

    double* X = w.X.data();
    double* u = w.u.data();
    BuildMajorState(x0, Y, X);
    (has_override_ && override_major_ ? override_law_ : law0_).Apply(i, X, u);
    if (node_costs) w.node_cost[0] = cost0_.Running(X, u);
    for (int a = 0; a < n; ++a) f0[a] = b0_[i * n + a];
    MatVec(A0_.data(), x0, n, n, f0, true);
    MatVec(F0_.data(), xavg, n, n, f0, true);
    MatVec(B0_.data(), u, n, m, f0, true);

    // Part of each minor law shared within a type: K[:, n:] [x0; Y] + k.
    for (int k = 0; k < K_; ++k) {
      const FlatLaw& law = types_[k].law;
      const double* Kk = &law.K[i * m * law.d];
      double* c = &w.common[k * m];
      for (int a = 0; a < m; ++a) {
        double acc = law.k[i * m + a];
        const double* row = Kk + a * law.d + n;
        for (int b = 0; b < n; ++b) acc += row[b] * x0[b];
        for (int b = 0; b < n * K_; ++b) acc += row[n + b] * Y[b];
        c[a] = acc;
      }
    }
    // Drift terms shared within a type: b + F x_avg + G x0 + B c.
    for (int k = 0; k < K_; ++k) {
      const TypeData& t = types_[k];
      double* dk = &w.shared[k * n];
      for (int a = 0; a < n; ++a) dk[a] = t.b[i * n + a];
      MatVec(t.F.data(), xavg, n, n, dk, true);
      MatVec(t.G.data(), x0, n, n, dk, true);
      MatVec(t.B.data(), &w.common[k * m], n, m, dk, true);
    }
    for (int j = 0; j < slots_; ++j) {
      const int k = slot_type_[j];
      const TypeData& t = types_[k];
      const double* xj = xs + j * n;
      double* fj = fs + j * n;
      if (j != offsets_[k]) {
        const double* dk = &w.shared[k * n];
        const double* M = &t.closed[i * n * n];
        for (int a = 0; a < n; ++a) {
          double acc = dk[a];
          for (int b = 0; b < n; ++b) acc += M[a * n + b] * xj[b];
          fj[a] = acc;
        }
        continue;
      }
      // Tracked agent: explicit control, same arithmetic with or without
      // an override.
      const FlatLaw& law =
          has_override_ && j == override_slot_ ? override_law_ : t.law;
      BuildMinorState(xj, x0, Y, X);
      law.ApplyOwnLast(i, X, n, u);
      for (int a = 0; a < n; ++a) fj[a] = t.b[i * n + a];
      MatVec(t.A.data(), xj, n, n, fj, true);
      MatVec(t.F.data(), xavg, n, n, fj, true);
      MatVec(t.G.data(), x0, n, n, fj, true);
      MatVec(t.B.data(), u, n, m, fj, true);
      if (node_costs) w.node_cost[1 + k] = t.cost.Running(X, u);
    }
    for (int k = 0; k < K_; ++k) {
      if (counts_[k] == 0 && node_costs) w.node_cost[1 + k] = 0.0;
    }

    const int nk = n * K_;
    for (int a = 0; a < nk; ++a) g[a] = mbar_[i * nk + a];
    MatVec(&Abar_[i * nk * nk], xbar, nk, nk, g, true);
    MatVec(&Gbar_[i * nk * n], x0, nk, n, g, true);
  }

  void RecordNode(int i, const Work& w, Output& out) const {
    double dev = 0.0;
    for (int a = 0; a < n_; ++a) {
      double mf = 0.0;
      for (int k = 0; k < K_; ++k) mf += pi_[k] * w.xbar[k * n_ + a];
      if (N_ > 0) dev = std::max(dev, std::abs(w.xavg[a] - mf));
      if (out.x0_path) {
        out.x0_path[i * n_ + a] = w.x0[a];
        out.x_avg_path[i * n_ + a] = w.xavg[a];
        out.x_bar_path[i * n_ + a] = mf;
      }
    }
    out.fluct_max = std::max(out.fluct_max, dev);
    if (i == steps_) out.fluct_end = dev;
  }

  void CheckStates(int i, const Work& w) const {
    auto bad = [](double v) {
      return !std::isfinite(v) || std::abs(v) > kBlowUpBound;
    };
    bool blown = std::any_of(w.x0.begin(), w.x0.end(), bad) ||
                 std::any_of(w.xs.begin(), w.xs.end(), bad) ||
                 std::any_of(w.xbar.begin(), w.xbar.end(), bad);
    if (blown) {
      const double t = grid_.node(i);
      char buf[96];
      std::snprintf(buf, sizeof buf, "population state blew up near t=%.6g", t);
      throw NonFiniteState(t, buf);
    }
  }

  int n_, m_, r_, K_, N_;
  SdeScheme scheme_;
  TimeGrid grid_;
  int stride_, steps_;
  double h_;
  std::vector<double> pi_, weights_;
  std::vector<int> counts_, offsets_, slot_type_, streams_, sum_order_;
  int slots_ = 0;
  std::vector<double> A0_, F0_, B0_, b0_, sig0_, x00_;
  FlatLaw law0_;
  FlatCost cost0_;
  double delta0_ = 1.0;
  std::vector<TypeData> types_;
  std::vector<double> Abar_, Gbar_, mbar_;
  bool has_override_ = false, override_major_ = false;
  int override_slot_ = -1;
  FlatLaw override_law_;
};

FeedbackLaw MapLaw(const FeedbackLaw& law, double gain_scale,
                   double offset_shift, int time_shift) {
  const TimeGrid& g = law.K_gain.grid;
  std::vector<MatrixXd> K(g.size()), k(g.size());
  for (int i = 0; i < g.size(); ++i) {
    const int src = std::min(i + time_shift, g.steps());
    K[i] = gain_scale * law.K_gain[src];
    k[i] = law.k_offset[i].array() + offset_shift;
  }
  return {MatrixTrajectory(g, std::move(K)), MatrixTrajectory(g, std::move(k))};
}

const std::vector<double>& Samples(const PopulationRun& run, AgentRole agent) {
  if (agent.major) return run.major_log_cost;
  if (agent.type < 0 || agent.type >= static_cast<int>(run.minor_log_cost.size())) {
    throw OutOfRange("minor type index");
  }
  if (run.counts[agent.type] == 0) throw OutOfRange("no minor agent of that type");
  return run.minor_log_cost[agent.type];
}

}  // namespace

std::vector<int> Apportion(int n_agents, const std::vector<double>& pi) {
  if (n_agents < 1) throw OutOfRange("apportionment needs at least one agent");
  if (pi.empty()) throw OutOfRange("apportionment needs at least one type");
  const int K = static_cast<int>(pi.size());
  std::vector<int> counts(K);
  std::vector<std::pair<double, int>> rem(K);
  int used = 0;
  for (int k = 0; k < K; ++k) {
    const double q = n_agents * pi[k];
    counts[k] = static_cast<int>(std::floor(q));
    rem[k] = {q - counts[k], k};
    used += counts[k];
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
    return a.first > b.first;
  });
  for (int j = 0; used < n_agents && j < K; ++j, ++used) ++counts[rem[j].second];
  return counts;
}

double ApportionmentError(const std::vector<int>& counts,
                          const std::vector<double>& pi) {
  const int N = std::accumulate(counts.begin(), counts.end(), 0);
  double worst = 0.0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    worst = std::max(worst, std::abs(static_cast<double>(counts[k]) / N - pi[k]));
  }
  return worst;
}

std::string AgentRole::Name() const {
  return major ? "major" : "minor[" + std::to_string(type) + "]";
}

PopulationRun SimulatePopulation(const MajorMinorSpec& spec,
                                 const MfgEquilibrium& eq,
                                 const PopulationOptions& options,
                                 const std::optional<Override>& override) {
  if (options.n_reps < 1) throw OutOfRange("need at least one replication");
  const PopulationKernel kernel(spec, eq, options, override);
  const int reps = options.n_reps, K = kernel.K();
  PopulationRun run;
  run.n_agents = options.n_agents;
  run.counts = kernel.counts();
  run.grid = kernel.grid();
  run.n_reps = reps;
  run.seed = options.seed;
  run.major_log_cost.assign(reps, 0.0);
  run.minor_log_cost.assign(K, std::vector<double>(reps, 0.0));
  run.fluctuation_end.assign(reps, 0.0);
  run.fluctuation_max.assign(reps, 0.0);
  const std::size_t path = static_cast<std::size_t>(run.grid.size()) * spec.n;
  if (options.keep_paths) {
    run.x0_paths.assign(path * reps, 0.0);
    run.x_avg_paths.assign(path * reps, 0.0);
    run.x_bar_paths.assign(path * reps, 0.0);
  }
  ParallelFor(reps, ResolveThreads(options.threads),
              [&](std::size_t begin, std::size_t end) {
                auto work = kernel.MakeWork();
                PopulationKernel::Output out;
                for (std::size_t r = begin; r < end; ++r) {
                  if (options.keep_paths) {
                    out.x0_path = &run.x0_paths[r * path];
                    out.x_avg_path = &run.x_avg_paths[r * path];
                    out.x_bar_path = &run.x_bar_paths[r * path];
                  }
                  kernel.Run(static_cast<int>(r), options.seed, work, out);
                  run.major_log_cost[r] = out.major_cost;
                  for (int k = 0; k < K; ++k) {
                    run.minor_log_cost[k][r] = out.minor_cost[k];
                  }
                  run.fluctuation_end[r] = out.fluct_end;
                  run.fluctuation_max[r] = out.fluct_max;
                }
              });
  return run;
}

LogMeanExpEstimate FiniteCost(const PopulationRun& run, AgentRole agent) {
  return LogMeanExp(Samples(run, agent));
}

std::vector<Deviation> DeviationFamily(const FeedbackLaw& law) {
  const int shift =
      static_cast<int>(std::lround(0.1 * law.K_gain.grid.steps()));
  std::vector<Deviation> out;
  for (double c : {0.8, 0.9, 1.1, 1.2}) {
    char name[32];
    std::snprintf(name, sizeof name, "gain x%.1f", c);
    out.push_back({name, MapLaw(law, c, 0.0, 0)});
  }
  out.push_back({"offset +0.1", MapLaw(law, 1.0, 0.1, 0)});
  out.push_back({"offset -0.1", MapLaw(law, 1.0, -0.1, 0)});
  out.push_back({"gain ahead 0.1T", MapLaw(law, 1.0, 0.0, shift)});
  return out;
}

FeedbackLaw EquilibriumLaw(const MfgEquilibrium& eq, AgentRole agent) {
  if (agent.major) return {eq.major.K_gain, eq.major.k_offset};
  if (agent.type < 0 || agent.type >= static_cast<int>(eq.minors.size())) {
    throw OutOfRange("minor type index");
  }
  const RiccatiSolution& s = eq.minors[agent.type];
  return {s.K_gain, s.k_offset};
}

NashGapReport NashGap(const MajorMinorSpec& spec, const MfgEquilibrium& eq,
                      AgentRole agent, const std::vector<Deviation>& family,
                      const PopulationOptions& options,
                      const PopulationRun* eq_run) {
  PopulationRun own;
  if (eq_run == nullptr) {
    own = SimulatePopulation(spec, eq, options);
    eq_run = &own;
  }
  NashGapReport report;
  report.agent = agent;
  report.n_agents = options.n_agents;
  const std::vector<double>& base = Samples(*eq_run, agent);
  report.equilibrium = LogMeanExp(base);
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < family.size(); ++j) {
    const PopulationRun dev =
        SimulatePopulation(spec, eq, options, Override{agent, family[j].law});
    const std::vector<double>& a = Samples(dev, agent);
    const PairedDifference d = LogMeanExpDifference(base, a);
    report.deviations.push_back({family[j].name, LogMeanExp(a), d.value,
                                 d.std_error});
    if (d.value > best) {
      best = d.value;
      report.best = static_cast<int>(j);
    }
  }
  if (!report.deviations.empty()) {
    const DeviationResult& b = report.deviations[report.best];
    report.gap = std::max(0.0, b.improvement);
    report.gap_se = b.std_error;
  }
  return report;
}

bool GapsNonincreasing(const std::vector<NashGapReport>& reports, double n_se) {
  for (std::size_t j = 0; j + 1 < reports.size(); ++j) {
    const double se = std::hypot(reports[j].gap_se, reports[j + 1].gap_se);
    if (reports[j + 1].gap > reports[j].gap + n_se * se) return false;
  }
  return true;
}

double LogLogSlope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw DimensionMismatch("slope needs two or more paired points");
  }
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

SampleMean MeanOf(const std::vector<double>& v) {
  if (v.empty()) throw DimensionMismatch("mean of an empty sample");
  const double n = static_cast<double>(v.size());
  Accumulator s;
  for (double x : v) s.Add(x);
  const double mean = s.value() / n;
  if (v.size() < 2) return {mean, 0.0};
  Accumulator ss;
  for (double x : v) ss.Add((x - mean) * (x - mean));
  return {mean, std::sqrt(ss.value() / (n - 1.0) / n)};
}

}  // namespace rsmfg
