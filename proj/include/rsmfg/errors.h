#ifndef RSMFG_ERRORS_H_
#define RSMFG_ERRORS_H_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rsmfg {

// Base class for every error raised by the library. The CLI maps each
// subclass onto a distinct process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A state entry became non-finite or exceeded the blow-up bound.
class NonFiniteState : public Error {
 public:
  NonFiniteState(double time, const std::string& what)
      : Error(what), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

// A Riccati solve blew up before reaching the far end of the horizon.
class FiniteEscape : public Error {
 public:
  explicit FiniteEscape(double time)
      : Error("Riccati solution escapes to infinity near t=" +
              std::to_string(time)),
        time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

class OutOfRange : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

// One of the standing model assumptions does not hold. name() identifies it.
class AssumptionViolated : public Error {
 public:
  explicit AssumptionViolated(const std::string& name)
      : Error("assumption violated: " + name), name_(name) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

class NotConverged : public Error {
 public:
  NotConverged(std::size_t iterations, double last_error)
      : Error("fixed point not converged after " + std::to_string(iterations) +
              " iterations (last error " + std::to_string(last_error) + ")"),
        iterations_(iterations),
        last_error_(last_error) {}
  std::size_t iterations() const { return iterations_; }
  double last_error() const { return last_error_; }

 private:
  std::size_t iterations_;
  double last_error_;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace rsmfg

#endif  // RSMFG_ERRORS_H_
