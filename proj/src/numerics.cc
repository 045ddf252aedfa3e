#include "rsmfg/numerics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "rsmfg/errors.h"

namespace rsmfg {

TimeGrid::TimeGrid(double t_end, int steps)
    : t_end_(t_end), steps_(steps), step_(t_end / steps) {
  if (!(t_end > 0.0) || !std::isfinite(t_end)) {
    throw OutOfRange("horizon T must be positive and finite");
  }
  if (steps < 2) throw OutOfRange("grid needs at least 2 steps");
}

double TimeGrid::node(int i) const {
  if (i == steps_) return t_end_;
  return t_end_ * static_cast<double>(i) / static_cast<double>(steps_);
}

std::vector<double> TimeGrid::nodes() const {
  std::vector<double> out(size());
  for (int i = 0; i <= steps_; ++i) out[i] = node(i);
  return out;
}

TimeGrid TimeGrid::Coarsen(int coarse_steps) const {
  if (coarse_steps < 2 || steps_ % coarse_steps != 0) {
    throw OutOfRange("coarse grid must divide the master grid");
  }
  return TimeGrid(t_end_, coarse_steps);
}

MatrixTrajectory::MatrixTrajectory(TimeGrid g, std::vector<MatrixXd> v)
    : grid(g), values(std::move(v)) {
  if (static_cast<int>(values.size()) != grid.size()) {
    throw DimensionMismatch("trajectory length does not match grid");
  }
}

MatrixTrajectory::MatrixTrajectory(TimeGrid g, const MatrixXd& constant)
    : grid(g), values(g.size(), constant) {}

namespace {

void CheckRange(const TimeGrid& grid, double t) {
  if (!(t >= 0.0 && t <= grid.t_end())) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "time %.17g outside [0, %.17g]", t,
                  grid.t_end());
    throw OutOfRange(buf);
  }
}

// Interval index and local coordinate in [0, 1]. Returns true when t
// coincides with a node, in which case *index is that node.
bool Locate(const TimeGrid& grid, double t, int* index, double* theta) {
  CheckRange(grid, t);
  const double s = t / grid.step();
  const double r = std::round(s);
  if (std::abs(s - r) < 1e-9) {
    *index = static_cast<int>(r);
    *theta = 0.0;
    return true;
  }
  int i = static_cast<int>(std::floor(s));
  i = std::clamp(i, 0, grid.steps() - 1);
  *index = i;
  *theta = s - i;
  return false;
}

void CheckFinite(const MatrixXd& m, double t) {
  for (Eigen::Index k = 0; k < m.size(); ++k) {
    const double v = m.data()[k];
    if (!std::isfinite(v) || std::abs(v) > kBlowUpBound) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "state blew up near t=%.6g", t);
      throw NonFiniteState(t, buf);
    }
  }
}

}  // namespace

MatrixXd Interpolate(const MatrixTrajectory& traj, double t) {
  int i;
  double theta;
  if (Locate(traj.grid, t, &i, &theta)) return traj.values[i];
  return (1.0 - theta) * traj.values[i] + theta * traj.values[i + 1];
}

MatrixXd InterpolateHermite(const MatrixTrajectory& values,
                            const MatrixTrajectory& derivatives, double t) {
  int i;
  double u;
  if (Locate(values.grid, t, &i, &u)) return values.values[i];
  const double h = values.grid.step();
  const double u2 = u * u, u3 = u2 * u;
  const double h00 = 2 * u3 - 3 * u2 + 1;
  const double h10 = u3 - 2 * u2 + u;
  const double h01 = -2 * u3 + 3 * u2;
  const double h11 = u3 - u2;
  return h00 * values.values[i] + (h10 * h) * derivatives.values[i] +
         h01 * values.values[i + 1] + (h11 * h) * derivatives.values[i + 1];
}

TimeFunction TimeFunction::Constant(MatrixXd value) {
  TimeFunction f;
  auto shared = std::make_shared<const MatrixXd>(std::move(value));
  f.rows_ = shared->rows();
  f.cols_ = shared->cols();
  f.constant_ = shared;
  f.fn_ = [shared](double) { return *shared; };
  return f;
}

TimeFunction TimeFunction::Linear(MatrixTrajectory samples) {
  TimeFunction f;
  f.rows_ = samples.rows();
  f.cols_ = samples.cols();
  auto shared = std::make_shared<const MatrixTrajectory>(std::move(samples));
  f.fn_ = [shared](double t) { return Interpolate(*shared, t); };
  return f;
}

TimeFunction TimeFunction::Hermite(MatrixTrajectory values,
                                   MatrixTrajectory derivatives) {
  if (!(values.grid == derivatives.grid) ||
      values.rows() != derivatives.rows() ||
      values.cols() != derivatives.cols()) {
    throw DimensionMismatch("Hermite data shapes differ");
  }
  TimeFunction f;
  f.rows_ = values.rows();
  f.cols_ = values.cols();
  auto v = std::make_shared<const MatrixTrajectory>(std::move(values));
  auto d = std::make_shared<const MatrixTrajectory>(std::move(derivatives));
  f.fn_ = [v, d](double t) { return InterpolateHermite(*v, *d, t); };
  return f;
}

TimeFunction TimeFunction::FromCallable(Eigen::Index rows, Eigen::Index cols,
                                        std::function<MatrixXd(double)> fn) {
  TimeFunction f;
  f.rows_ = rows;
  f.cols_ = cols;
  f.fn_ = std::move(fn);
  return f;
}

MatrixTrajectory Sample(const TimeFunction& f, const TimeGrid& grid) {
  if (f.is_constant()) return MatrixTrajectory(grid, f.constant_value());
  std::vector<MatrixXd> v(grid.size());
  for (int i = 0; i < grid.size(); ++i) v[i] = f(grid.node(i));
  return MatrixTrajectory(grid, std::move(v));
}

MatrixTrajectory IntegrateOde(const VectorField& field,
                              const MatrixXd& boundary, const TimeGrid& grid,
                              Direction direction,
                              const StepProjection& projection) {
  const int m = grid.steps();
  std::vector<MatrixXd> out(grid.size());
  const bool backward = direction == Direction::kBackward;
  const int start = backward ? m : 0;
  out[start] = boundary;
  CheckFinite(boundary, grid.node(start));

  // Backward integration marches in reversed time τ = T - t, where
  // dY/dτ = -f(T - τ, Y).
  const double h = backward ? -grid.step() : grid.step();
  MatrixXd y = boundary;
  for (int k = 0; k < m; ++k) {
    const int i = backward ? m - k : k;
    const int next = backward ? i - 1 : i + 1;
    const double t0 = grid.node(i);
    const double t1 = grid.node(next);
    const double tm = 0.5 * (t0 + t1);
    const MatrixXd k1 = field(t0, y);
    CheckFinite(k1, t0);
    const MatrixXd k2 = field(tm, y + (0.5 * h) * k1);
    CheckFinite(k2, tm);
    const MatrixXd k3 = field(tm, y + (0.5 * h) * k2);
    CheckFinite(k3, tm);
    const MatrixXd k4 = field(t1, y + h * k3);
    CheckFinite(k4, t1);
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (projection) projection(y);
    CheckFinite(y, t1);
    out[next] = y;
  }
  return MatrixTrajectory(grid, std::move(out));
}

StateTransition ComputeStateTransition(const TimeFunction& a,
                                       const TimeGrid& grid) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n) throw DimensionMismatch("A must be square");
  const MatrixXd eye = MatrixXd::Identity(n, n);
  if (a.is_constant()) {
    const MatrixXd& av = a.constant_value();
    auto fwd = [&av](double, const MatrixXd& y) -> MatrixXd { return av * y; };
    auto inv = [&av](double, const MatrixXd& y) -> MatrixXd {
      return -y * av;
    };
    return {IntegrateOde(fwd, eye, grid, Direction::kForward),
            IntegrateOde(inv, eye, grid, Direction::kForward)};
  }
  auto fwd = [&a](double t, const MatrixXd& y) -> MatrixXd { return a(t) * y; };
  auto inv = [&a](double t, const MatrixXd& y) -> MatrixXd {
    return -y * a(t);
  };
  return {IntegrateOde(fwd, eye, grid, Direction::kForward),
          IntegrateOde(inv, eye, grid, Direction::kForward)};
}

double MaxAbs(const MatrixXd& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

double SupDistance(const MatrixTrajectory& a, const MatrixTrajectory& b) {
  if (a.values.size() != b.values.size()) {
    throw DimensionMismatch("trajectories have different lengths");
  }
  double out = 0.0;
  for (size_t i = 0; i < a.values.size(); ++i) {
    out = std::max(out, MaxAbs(a.values[i] - b.values[i]));
  }
  return out;
}

}  // namespace rsmfg
