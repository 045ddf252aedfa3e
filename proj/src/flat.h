#ifndef RSMFG_SRC_FLAT_H_
#define RSMFG_SRC_FLAT_H_

// Row-major flat copies of matrices and small kernels over them.

#include <cmath>
#include <vector>

#include "rsmfg/numerics.h"

namespace rsmfg::flat {

// Neumaier compensated sum.
class Accumulator {
 public:
  void Add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline void Flatten(const MatrixTrajectory& traj, std::vector<double>* out) {
  const std::size_t block = traj.rows() * traj.cols();
  out->resize(block * traj.values.size());
  for (std::size_t i = 0; i < traj.values.size(); ++i) {
    // Row-major copy.
    const MatrixXd& v = traj.values[i];
    for (Eigen::Index a = 0; a < v.rows(); ++a) {
      for (Eigen::Index b = 0; b < v.cols(); ++b) {
        (*out)[i * block + a * v.cols() + b] = v(a, b);
      }
    }
  }
}

inline void FlattenMatrix(const MatrixXd& v, std::vector<double>* out) {
  out->resize(v.size());
  for (Eigen::Index a = 0; a < v.rows(); ++a) {
    for (Eigen::Index b = 0; b < v.cols(); ++b) {
      (*out)[a * v.cols() + b] = v(a, b);
    }
  }
}

// out = M x (+ out if accumulate), M row-major rows x cols.
inline void MatVec(const double* M, const double* x, int rows, int cols,
                   double* out, bool accumulate) {
  for (int a = 0; a < rows; ++a) {
    double acc = accumulate ? out[a] : 0.0;
    const double* row = M + a * cols;
    for (int b = 0; b < cols; ++b) acc += row[b] * x[b];
    out[a] = acc;
  }
}

// out = M' x, M row-major rows x cols.
inline void MatTVec(const double* M, const double* x, int rows, int cols,
                    double* out) {
  for (int b = 0; b < cols; ++b) out[b] = 0.0;
  for (int a = 0; a < rows; ++a) {
    const double* row = M + a * cols;
    for (int b = 0; b < cols; ++b) out[b] += row[b] * x[a];
  }
}

}  // namespace rsmfg::flat

#endif  // RSMFG_SRC_FLAT_H_
