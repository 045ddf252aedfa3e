#include "rsmfg/config.h"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"

#include "rsmfg/errors.h"

namespace rsmfg {

namespace {

using nlohmann::json;

[[noreturn]] void Fail(const std::string& field, const std::string& what) {
  throw ParseError("field '" + field + "': " + what);
}

// A JSON value together with its dotted path, for error messages.
class Node {
 public:
  Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

  const json& json_value() const { return j_; }
  const std::string& path() const { return path_; }

  bool Has(const std::string& key) const { return j_.contains(key); }

  Node operator[](const std::string& key) const {
    if (!j_.contains(key)) Fail(Child(key), "required");
    return Node(j_.at(key), Child(key));
  }
  Node operator[](std::size_t i) const {
    return Node(j_.at(i), path_ + "[" + std::to_string(i) + "]");
  }
  std::size_t size() const { return j_.size(); }

  void ExpectObject(const std::set<std::string>& allowed) const {
    if (!j_.is_object()) Fail(path_, "expected an object");
    for (const auto& item : j_.items()) {
      if (!allowed.count(item.key())) Fail(Child(item.key()), "unknown field");
    }
  }

  double Number() const {
    if (!j_.is_number()) Fail(path_, "expected a number");
    const double v = j_.get<double>();
    if (!std::isfinite(v)) Fail(path_, "must be finite");
    return v;
  }

  int Int(int lo) const {
    if (!j_.is_number_integer()) Fail(path_, "expected an integer");
    const auto v = j_.get<std::int64_t>();
    if (v < lo || v > std::numeric_limits<int>::max()) {
      Fail(path_, "must be at least " + std::to_string(lo));
    }
    return static_cast<int>(v);
  }

  std::uint64_t Unsigned() const {
    if (j_.is_number_unsigned()) return j_.get<std::uint64_t>();
    if (j_.is_number_integer() && j_.get<std::int64_t>() >= 0) {
      return static_cast<std::uint64_t>(j_.get<std::int64_t>());
    }
    Fail(path_, "expected a nonnegative integer");
  }

  std::string String() const {
    if (!j_.is_string()) Fail(path_, "expected a string");
    return j_.get<std::string>();
  }

  // A number is 1 x 1, a flat list a column, a list of lists a row list.
  MatrixXd Matrix() const {
    if (j_.is_number()) return MatrixXd::Constant(1, 1, Number());
    if (!j_.is_array() || j_.empty()) Fail(path_, "expected a matrix");
    if (!j_[0].is_array()) {
      VectorXd v(j_.size());
      for (std::size_t i = 0; i < j_.size(); ++i) v(i) = (*this)[i].Number();
      return v;
    }
    const std::size_t cols = j_[0].size();
    if (cols == 0) Fail(path_, "empty row");
    MatrixXd m(j_.size(), cols);
    for (std::size_t i = 0; i < j_.size(); ++i) {
      const Node row = (*this)[i];
      if (!row.j_.is_array() || row.size() != cols) {
        Fail(row.path_, "rows must have equal length");
      }
      for (std::size_t c = 0; c < cols; ++c) m(i, c) = row[c].Number();
    }
    return m;
  }

  VectorXd Vector() const {
    const MatrixXd m = Matrix();
    if (m.cols() != 1) Fail(path_, "expected a vector");
    return m;
  }

 private:
  std::string Child(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  const json& j_;
  std::string path_;
};

MatrixXd MatrixOr(const Node& parent, const std::string& key,
                  const MatrixXd& fallback) {
  return parent.Has(key) ? parent[key].Matrix() : fallback;
}

VectorXd VectorOr(const Node& parent, const std::string& key,
                  const VectorXd& fallback) {
  return parent.Has(key) ? parent[key].Vector() : fallback;
}

// A constant matrix, or {"nodes": [...]} with one matrix per grid node,
// linearly interpolated.
TimeFunction TimeCoefficient(const Node& node, const TimeGrid& grid) {
  if (!node.json_value().is_object()) {
    return TimeFunction::Constant(node.Matrix());
  }
  node.ExpectObject({"nodes"});
  const Node nodes = node["nodes"];
  if (!nodes.json_value().is_array() ||
      static_cast<int>(nodes.size()) != grid.size()) {
    Fail(nodes.path(), "expected " + std::to_string(grid.size()) +
                           " node values (grid.steps + 1)");
  }
  std::vector<MatrixXd> values;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    values.push_back(nodes[i].Matrix());
    if (values.back().rows() != values[0].rows() ||
        values.back().cols() != values[0].cols()) {
      Fail(nodes[i].path(), "node values must share one shape");
    }
  }
  return TimeFunction::Linear(MatrixTrajectory(grid, std::move(values)));
}

TimeFunction TimeCoefficientOr(const Node& parent, const std::string& key,
                               const TimeGrid& grid, const MatrixXd& fallback) {
  return parent.Has(key) ? TimeCoefficient(parent[key], grid)
                         : TimeFunction::Constant(fallback);
}

// "raw_exponent" costs exp(∫ q(..)^2 + r u^2 dt) are read as delta = 2 with
// Q = q, R = r.
double RiskParameter(const Node& agent) {
  const std::string form =
      agent.Has("cost_form") ? agent["cost_form"].String() : "standard";
  if (form == "raw_exponent") {
    if (agent.Has("delta")) {
      Fail(agent["delta"].path(), "not allowed with cost_form raw_exponent");
    }
    return 2.0;
  }
  if (form != "standard") {
    Fail(agent["cost_form"].path(), "expected 'standard' or 'raw_exponent'");
  }
  return agent["delta"].Number();
}

void CheckShape(const Node& parent, const std::string& key, const MatrixXd& m,
                Eigen::Index rows, Eigen::Index cols) {
  if (m.rows() != rows || m.cols() != cols) {
    Fail(parent.path() + "." + key,
         "expected " + std::to_string(rows) + "x" + std::to_string(cols) +
             ", got " + std::to_string(m.rows()) + "x" +
             std::to_string(m.cols()));
  }
}

void CheckShape(const Node& parent, const std::string& key,
                const TimeFunction& f, Eigen::Index rows, Eigen::Index cols) {
  if (f.rows() != rows || f.cols() != cols) {
    Fail(parent.path() + "." + key,
         "expected " + std::to_string(rows) + "x" + std::to_string(cols) +
             ", got " + std::to_string(f.rows()) + "x" +
             std::to_string(f.cols()));
  }
}

LqgProblem ParseSingle(const Node& model, const TimeGrid& grid) {
  model.ExpectObject({"T", "A", "B", "b", "sigma", "Q", "S", "R", "eta",
                      "zeta", "Q_hat", "delta", "cost_form", "x0"});
  LqgProblem p;
  p.T = grid.t_end();
  p.A = TimeCoefficient(model["A"], grid);
  p.n = static_cast<int>(p.A.rows());
  p.B = model["B"].Matrix();
  p.m = static_cast<int>(p.B.cols());
  p.sigma = TimeCoefficient(model["sigma"], grid);
  p.r = static_cast<int>(p.sigma.cols());
  const int n = p.n, m = p.m;
  p.b = TimeCoefficientOr(model, "b", grid, MatrixXd::Zero(n, 1));
  p.Q = model["Q"].Matrix();
  p.S = MatrixOr(model, "S", MatrixXd::Zero(n, m));
  p.R = model["R"].Matrix();
  p.eta = VectorOr(model, "eta", VectorXd::Zero(n));
  p.zeta = VectorOr(model, "zeta", VectorXd::Zero(m));
  p.Q_hat = MatrixOr(model, "Q_hat", MatrixXd::Zero(n, n));
  p.delta = RiskParameter(model);
  p.x0 = model["x0"].Vector();

  CheckShape(model, "A", p.A, n, n);
  CheckShape(model, "B", p.B, n, m);
  CheckShape(model, "b", p.b, n, 1);
  CheckShape(model, "sigma", p.sigma, n, p.r);
  CheckShape(model, "Q", p.Q, n, n);
  CheckShape(model, "S", p.S, n, m);
  CheckShape(model, "R", p.R, m, m);
  CheckShape(model, "eta", p.eta, n, 1);
  CheckShape(model, "zeta", p.zeta, m, 1);
  CheckShape(model, "Q_hat", p.Q_hat, n, n);
  CheckShape(model, "x0", p.x0, n, 1);
  return p;
}

MajorParams ParseMajor(const Node& a, const TimeGrid& grid) {
  a.ExpectObject({"A", "F", "B", "b", "sigma", "Q", "S", "R", "Q_hat", "H",
                  "eta", "delta", "cost_form", "x0"});
  MajorParams p;
  p.A = a["A"].Matrix();
  const auto n = p.A.rows();
  p.B = a["B"].Matrix();
  const auto m = p.B.cols();
  p.F = MatrixOr(a, "F", MatrixXd::Zero(n, n));
  p.sigma = TimeCoefficient(a["sigma"], grid);
  p.b = TimeCoefficientOr(a, "b", grid, MatrixXd::Zero(n, 1));
  p.Q = a["Q"].Matrix();
  p.S = MatrixOr(a, "S", MatrixXd::Zero(n, m));
  p.R = a["R"].Matrix();
  p.Q_hat = MatrixOr(a, "Q_hat", MatrixXd::Zero(n, n));
  p.H = MatrixOr(a, "H", MatrixXd::Zero(n, n));
  p.eta = VectorOr(a, "eta", VectorXd::Zero(n));
  p.delta = RiskParameter(a);
  p.x0 = a["x0"].Vector();
  return p;
}

MinorTypeParams ParseMinor(const Node& a, const TimeGrid& grid) {
  a.ExpectObject({"A", "F", "G", "B", "b", "sigma", "Q", "S", "R", "Q_hat",
                  "H", "H_hat", "eta", "delta", "cost_form", "x0"});
  MinorTypeParams p;
  p.A = a["A"].Matrix();
  const auto n = p.A.rows();
  p.B = a["B"].Matrix();
  const auto m = p.B.cols();
  p.F = MatrixOr(a, "F", MatrixXd::Zero(n, n));
  p.G = MatrixOr(a, "G", MatrixXd::Zero(n, n));
  p.sigma = TimeCoefficient(a["sigma"], grid);
  p.b = TimeCoefficientOr(a, "b", grid, MatrixXd::Zero(n, 1));
  p.Q = a["Q"].Matrix();
  p.S = MatrixOr(a, "S", MatrixXd::Zero(n, m));
  p.R = a["R"].Matrix();
  p.Q_hat = MatrixOr(a, "Q_hat", MatrixXd::Zero(n, n));
  p.H = MatrixOr(a, "H", MatrixXd::Zero(n, n));
  p.H_hat = MatrixOr(a, "H_hat", MatrixXd::Zero(n, n));
  p.eta = VectorOr(a, "eta", VectorXd::Zero(n));
  p.delta = RiskParameter(a);
  p.x0 = a["x0"].Vector();
  return p;
}

MajorMinorSpec ParseGame(const Node& model, const TimeGrid& grid) {
  model.ExpectObject({"T", "pi", "eta_bar_sign", "major", "minors"});
  MajorMinorSpec g;
  g.T = grid.t_end();
  g.major = ParseMajor(model["major"], grid);
  const Node minors = model["minors"];
  if (!minors.json_value().is_array() || minors.size() == 0) {
    Fail(minors.path(), "expected a nonempty list of minor types");
  }
  for (std::size_t k = 0; k < minors.size(); ++k) {
    g.minors.push_back(ParseMinor(minors[k], grid));
  }
  const int K = g.K();
  if (model.Has("pi")) {
    const Node pi = model["pi"];
    if (!pi.json_value().is_array() || static_cast<int>(pi.size()) != K) {
      Fail(pi.path(), "expected one weight per minor type");
    }
    for (std::size_t k = 0; k < pi.size(); ++k) g.pi.push_back(pi[k].Number());
  } else if (K == 1) {
    g.pi = {1.0};
  } else {
    model["pi"];  // reports the missing field
  }
  if (model.Has("eta_bar_sign")) {
    const std::string s = model["eta_bar_sign"].String();
    if (s == "minus") {
      g.eta_bar_sign = EtaBarSign::kMinus;
    } else if (s == "plus") {
      g.eta_bar_sign = EtaBarSign::kPlus;
    } else {
      Fail(model["eta_bar_sign"].path(), "expected 'minus' or 'plus'");
    }
  }
  g.n = static_cast<int>(g.major.A.rows());
  g.m = static_cast<int>(g.major.B.cols());
  g.r = static_cast<int>(g.major.sigma.cols());
  try {
    g.CheckDimensions();
  } catch (const DimensionMismatch& e) {
    Fail(model.path(), e.what());
  }
  return g;
}

SdeScheme ParseScheme(const Node& node) {
  const std::string s = node.String();
  if (s == "heun") return SdeScheme::kHeun;
  if (s == "euler-maruyama") return SdeScheme::kEulerMaruyama;
  Fail(node.path(), "expected 'heun' or 'euler-maruyama'");
}

bool NeedsGame(Mode mode) {
  return mode != Mode::kSolveSingle && mode != Mode::kVerifySingle;
}

int LineOf(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  int line = 1;
  for (std::size_t i = 0; i < byte; ++i) line += text[i] == '\n';
  return line;
}

}  // namespace

Mode ParseMode(const std::string& name) {
  static const std::pair<const char*, Mode> kModes[] = {
      {"solve-single", Mode::kSolveSingle},
      {"verify-single", Mode::kVerifySingle},
      {"solve-mfg", Mode::kSolveMfg},
      {"simulate-population", Mode::kSimulatePopulation},
      {"nash-gap", Mode::kNashGap},
      {"reproduce-paper", Mode::kReproducePaper},
  };
  for (const auto& [n, m] : kModes) {
    if (name == n) return m;
  }
  throw ParseError("unknown mode '" + name + "'");
}

std::string ModeName(Mode mode) {
  switch (mode) {
    case Mode::kSolveSingle: return "solve-single";
    case Mode::kVerifySingle: return "verify-single";
    case Mode::kSolveMfg: return "solve-mfg";
    case Mode::kSimulatePopulation: return "simulate-population";
    case Mode::kNashGap: return "nash-gap";
    case Mode::kReproducePaper: return "reproduce-paper";
  }
  return "";
}

bool IsStochastic(Mode mode) {
  return mode == Mode::kVerifySingle || mode == Mode::kSimulatePopulation ||
         mode == Mode::kNashGap;
}

ExperimentConfig ParseConfig(const std::string& text, std::optional<Mode> mode) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("config line " + std::to_string(LineOf(text, e.byte)) +
                     ": " + e.what());
  }
  const Node root(doc, "");
  root.ExpectObject({"mode", "model", "grid", "montecarlo", "fixedpoint",
                     "population", "output"});

  ExperimentConfig c;
  c.text = text;
  if (root.Has("mode")) {
    const Mode declared = ParseMode(root["mode"].String());
    if (mode && *mode != declared) {
      Fail("mode", "config declares '" + ModeName(declared) +
                       "' but '" + ModeName(*mode) + "' was requested");
    }
    mode = declared;
  }
  if (!mode) Fail("mode", "required");
  c.mode = *mode;

  if (root.Has("grid")) {
    const Node grid = root["grid"];
    grid.ExpectObject({"steps"});
    c.steps = grid["steps"].Int(1);
  }
  const Node model = root["model"];
  if (!model.json_value().is_object()) Fail("model", "expected an object");
  const double T = model["T"].Number();
  if (!(T > 0)) Fail("model.T", "must be positive");
  const TimeGrid grid(T, c.steps);
  if (NeedsGame(c.mode)) {
    if (!model.Has("major")) Fail("model.major", "required by this mode");
    c.game = ParseGame(model, grid);
    ValidateGame(*c.game);
  } else {
    if (model.Has("major")) Fail("model.major", "not allowed in this mode");
    c.single = ParseSingle(model, grid);
    ValidateSingle(*c.single);
  }

  if (root.Has("montecarlo")) {
    const Node mc = root["montecarlo"];
    mc.ExpectObject({"n_paths", "seed", "scheme"});
    if (mc.Has("n_paths")) c.montecarlo.n_paths = mc["n_paths"].Int(2);
    if (mc.Has("seed")) c.montecarlo.seed = mc["seed"].Unsigned();
    if (mc.Has("scheme")) c.montecarlo.scheme = ParseScheme(mc["scheme"]);
  }
  if (IsStochastic(c.mode) && !c.montecarlo.seed) {
    throw ParseError("seed required");
  }

  if (root.Has("fixedpoint")) {
    const Node fp = root["fixedpoint"];
    fp.ExpectObject({"tol", "max_iter", "relaxation"});
    if (fp.Has("tol")) c.fixedpoint.tol = fp["tol"].Number();
    if (fp.Has("max_iter")) c.fixedpoint.max_iter = fp["max_iter"].Int(1);
    if (fp.Has("relaxation")) {
      c.fixedpoint.relaxation = fp["relaxation"].Number();
    }
    if (!(c.fixedpoint.tol > 0)) Fail("fixedpoint.tol", "must be positive");
    if (c.fixedpoint.relaxation < 0 || c.fixedpoint.relaxation >= 1) {
      Fail("fixedpoint.relaxation", "must lie in [0, 1)");
    }
  }

  if (root.Has("population")) {
    const Node pop = root["population"];
    pop.ExpectObject({"n_agents", "n_reps", "coarse_steps"});
    if (pop.Has("n_agents")) {
      const Node list = pop["n_agents"];
      if (!list.json_value().is_array() || list.size() == 0) {
        Fail(list.path(), "expected a nonempty list");
      }
      c.population.n_agents.clear();
      for (std::size_t i = 0; i < list.size(); ++i) {
        c.population.n_agents.push_back(list[i].Int(0));
      }
    }
    if (pop.Has("n_reps")) c.population.n_reps = pop["n_reps"].Int(2);
    if (pop.Has("coarse_steps")) {
      c.population.coarse_steps = pop["coarse_steps"].Int(0);
    }
  }
  const int coarse = c.population.coarse_steps;
  const bool population = c.mode == Mode::kSimulatePopulation ||
                          c.mode == Mode::kNashGap;
  if (population && coarse > 0 && c.steps % coarse != 0) {
    Fail("population.coarse_steps", "must divide grid.steps");
  }

  if (root.Has("output")) {
    const Node out = root["output"];
    out.ExpectObject({"directory", "format"});
    if (out.Has("directory")) c.output_directory = out["directory"].String();
    if (out.Has("format") && out["format"].String() != "csv") {
      Fail("output.format", "only 'csv' is supported");
    }
  }
  return c;
}

ExperimentConfig LoadConfig(const std::string& path, std::optional<Mode> mode) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot read config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return ParseConfig(buf.str(), mode);
}

}  // namespace rsmfg
