#ifndef RSMFG_NUMERICS_H_
#define RSMFG_NUMERICS_H_

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

namespace rsmfg {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Entries larger than this in magnitude are treated as a blow-up.
inline constexpr double kBlowUpBound = 1e8;

// Uniform grid on [0, T] with `steps` intervals.
class TimeGrid {
 public:
  TimeGrid(double t_end, int steps);

  double t_end() const { return t_end_; }
  int steps() const { return steps_; }
  double step() const { return step_; }
  int size() const { return steps_ + 1; }
  // Node i; node(steps()) is t_end exactly.
  double node(int i) const;
  std::vector<double> nodes() const;

  // Grid with `coarse_steps` intervals whose nodes are a subset of ours.
  TimeGrid Coarsen(int coarse_steps) const;

  bool operator==(const TimeGrid& other) const {
    return t_end_ == other.t_end_ && steps_ == other.steps_;
  }

 private:
  double t_end_;
  int steps_;
  double step_;
};

// One dense matrix per grid node.
struct MatrixTrajectory {
  TimeGrid grid;
  std::vector<MatrixXd> values;

  MatrixTrajectory(TimeGrid g, std::vector<MatrixXd> v);
  // Trajectory filled with a constant value.
  MatrixTrajectory(TimeGrid g, const MatrixXd& constant);

  Eigen::Index rows() const { return values.front().rows(); }
  Eigen::Index cols() const { return values.front().cols(); }
  const MatrixXd& operator[](int i) const { return values[i]; }
  MatrixXd& operator[](int i) { return values[i]; }
  const MatrixXd& front() const { return values.front(); }
  const MatrixXd& back() const { return values.back(); }
};

// Piecewise-linear interpolation. Exact at nodes; throws OutOfRange outside
// [0, T].
MatrixXd Interpolate(const MatrixTrajectory& traj, double t);

// Cubic Hermite interpolation from node values and node derivatives.
MatrixXd InterpolateHermite(const MatrixTrajectory& values,
                            const MatrixTrajectory& derivatives, double t);

// A matrix-valued coefficient of time: a constant, node samples, or an
// arbitrary callable. Cheap to copy.
class TimeFunction {
 public:
  TimeFunction() = default;
  static TimeFunction Constant(MatrixXd value);
  static TimeFunction Linear(MatrixTrajectory samples);
  static TimeFunction Hermite(MatrixTrajectory values,
                              MatrixTrajectory derivatives);
  static TimeFunction FromCallable(Eigen::Index rows, Eigen::Index cols,
                                   std::function<MatrixXd(double)> fn);

  MatrixXd operator()(double t) const { return fn_(t); }
  bool is_constant() const { return constant_ != nullptr; }
  // Only valid when is_constant().
  const MatrixXd& constant_value() const { return *constant_; }
  Eigen::Index rows() const { return rows_; }
  Eigen::Index cols() const { return cols_; }
  bool empty() const { return !fn_; }

 private:
  std::function<MatrixXd(double)> fn_;
  std::shared_ptr<const MatrixXd> constant_;
  Eigen::Index rows_ = 0;
  Eigen::Index cols_ = 0;
};

// Node values of `f` on `grid`.
MatrixTrajectory Sample(const TimeFunction& f, const TimeGrid& grid);

enum class Direction { kForward, kBackward };

using VectorField = std::function<MatrixXd(double, const MatrixXd&)>;
// Applied to the state after every completed step (e.g. symmetrization).
using StepProjection = std::function<void(MatrixXd&)>;

// Classical RK4 on a uniform grid. kBackward treats `boundary` as the value
// at t = T and marches towards t = 0. The boundary node holds `boundary`
// exactly. Throws NonFiniteState when any entry is non-finite or exceeds
// kBlowUpBound.
MatrixTrajectory IntegrateOde(const VectorField& field,
                              const MatrixXd& boundary, const TimeGrid& grid,
                              Direction direction,
                              const StepProjection& projection = {});

struct StateTransition {
  MatrixTrajectory upsilon;      // d/dt U = A U, U(0) = I
  MatrixTrajectory upsilon_inv;  // d/dt V = -V A, V(0) = I
};

StateTransition ComputeStateTransition(const TimeFunction& a,
                                       const TimeGrid& grid);

// Largest absolute entry.
double MaxAbs(const MatrixXd& m);
// Largest absolute entry of the difference, over all nodes.
double SupDistance(const MatrixTrajectory& a, const MatrixTrajectory& b);

}  // namespace rsmfg

#endif  // RSMFG_NUMERICS_H_
