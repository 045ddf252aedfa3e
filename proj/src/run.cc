#include "rsmfg/run.h"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>

#include "json.hpp"

#include "rsmfg/errors.h"
#include "rsmfg/mfg.h"
#include "rsmfg/montecarlo.h"
#include "rsmfg/population.h"
#include "rsmfg/riccati.h"

namespace rsmfg {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

constexpr const char* kVersion = "1.0.0";
constexpr const char* kTimeUnit = "time (problem units)";
constexpr const char* kValueUnit = "value (dimensionless)";

std::string Num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string Hex(const unsigned char* d, std::size_t n) {
  static const char* kDigits = "0123456789abcdef";
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    out += kDigits[d[i] >> 4];
    out += kDigits[d[i] & 15];
  }
  return out;
}

class Csv {
 public:
  explicit Csv(const std::vector<std::string>& header) { Row(header); }

  void Row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) text_ += ',';
      text_ += cells[i];
    }
    text_ += '\n';
  }
  const std::string& text() const { return text_; }

 private:
  std::string text_;
};

// Long-format trajectory table: time, entity, component, value.
class TrajectoryTable {
 public:
  TrajectoryTable() : csv_({kTimeUnit, "entity", "component", kValueUnit}) {}

  void Add(const std::string& entity, const MatrixTrajectory& traj) {
    for (int i = 0; i < traj.grid.size(); ++i) {
      const MatrixXd& M = traj[i];
      for (Eigen::Index a = 0; a < M.rows(); ++a) {
        for (Eigen::Index b = 0; b < M.cols(); ++b) {
          csv_.Row({Num(traj.grid.node(i)), entity, Component(M, a, b),
                    Num(M(a, b))});
        }
      }
    }
  }
  const std::string& text() const { return csv_.text(); }

  static std::string Component(const MatrixXd& M, Eigen::Index a,
                               Eigen::Index b) {
    if (M.cols() == 1) return std::to_string(a);
    return std::to_string(a) + "_" + std::to_string(b);
  }

 private:
  Csv csv_;
};

class Writer {
 public:
  explicit Writer(fs::path dir) : dir_(std::move(dir)) {
    fs::create_directories(dir_);
  }

  void Write(const std::string& name, const std::string& text) {
    std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + (dir_ / name).string());
    out << text;
    if (!out) throw Error("cannot write " + (dir_ / name).string());
    files_.push_back(name);
    hashes_.push_back(GitBlobHash(text));
  }

  const fs::path& dir() const { return dir_; }
  const std::vector<std::string>& files() const { return files_; }
  const std::vector<std::string>& hashes() const { return hashes_; }

 private:
  fs::path dir_;
  std::vector<std::string> files_, hashes_;
};

void WriteSolution(Writer& w, const RiccatiSolution& sol) {
  TrajectoryTable pi, s, feedback;
  pi.Add("Pi", sol.Pi);
  s.Add("s", sol.s);
  feedback.Add("K", sol.K_gain);
  feedback.Add("k", sol.k_offset);
  w.Write("pi.csv", pi.text());
  w.Write("offset.csv", s.text());
  w.Write("feedback.csv", feedback.text());
}

std::string TypeName(int k) { return "type" + std::to_string(k); }

void WriteEquilibrium(Writer& w, const MfgEquilibrium& eq) {
  TrajectoryTable coeffs, pi, offset, feedback;
  coeffs.Add("A_bar", eq.A_bar());
  coeffs.Add("G_bar", eq.G_bar());
  coeffs.Add("m_bar", eq.m_bar());
  pi.Add("major", eq.major.Pi);
  offset.Add("major", eq.major.s);
  feedback.Add("major.K", eq.major.K_gain);
  feedback.Add("major.k", eq.major.k_offset);
  for (std::size_t k = 0; k < eq.minors.size(); ++k) {
    const std::string name = TypeName(static_cast<int>(k));
    pi.Add(name, eq.minors[k].Pi);
    offset.Add(name, eq.minors[k].s);
    feedback.Add(name + ".K", eq.minors[k].K_gain);
    feedback.Add(name + ".k", eq.minors[k].k_offset);
  }
  w.Write("mean_field.csv", coeffs.text());
  w.Write("pi.csv", pi.text());
  w.Write("offset.csv", offset.text());
  w.Write("feedback.csv", feedback.text());

  Csv conv({"iteration", "error (sup norm)"});
  for (std::size_t j = 0; j < eq.log.errors.size(); ++j) {
    conv.Row({std::to_string(j + 1), Num(eq.log.errors[j])});
  }
  w.Write("convergence.csv", conv.text());
}

void WriteIterates(Writer& w, const MfgEquilibrium& eq) {
  Csv csv({"iteration", kTimeUnit, "entity", "component", kValueUnit});
  for (std::size_t j = 0; j < eq.iterates.size(); ++j) {
    const MfgIterate& it = eq.iterates[j];
    const std::pair<const char*, const MatrixTrajectory*> parts[] = {
        {"A_bar", &it.A_bar}, {"G_bar", &it.G_bar}, {"m_bar", &it.m_bar}};
    for (const auto& [name, traj] : parts) {
      for (int i = 0; i < traj->grid.size(); ++i) {
        const MatrixXd& M = (*traj)[i];
        for (Eigen::Index a = 0; a < M.rows(); ++a) {
          for (Eigen::Index b = 0; b < M.cols(); ++b) {
            csv.Row({std::to_string(j + 1), Num(traj->grid.node(i)), name,
                     TrajectoryTable::Component(M, a, b), Num(M(a, b))});
          }
        }
      }
    }
  }
  w.Write("iterates.csv", csv.text());
}

ordered_json ZJson(const ZScore& z) {
  return {{"estimate", z.estimate},
          {"target", z.target},
          {"std_error", z.std_error},
          {"z", z.z}};
}

void AddZRow(Csv& csv, const std::string& check, const std::string& comp,
             const ZScore& z) {
  csv.Row({check, comp, Num(z.estimate), Num(z.target), Num(z.std_error),
           Num(z.z)});
}

ordered_json SolveSingle(const ExperimentConfig& c, Writer& w, bool verify,
                         int threads) {
  const LqgProblem& p = *c.single;
  const RiccatiSolution sol = SolveLqg(p, TimeGrid(p.T, c.steps));
  WriteSolution(w, sol);
  ordered_json summary = {{"C_star", sol.C_star}};
  if (!verify) return summary;

  SimulationOptions so;
  so.scheme = c.montecarlo.scheme;
  so.threads = threads;
  const IdentityReport rep =
      VerifyIdentities(p, sol, c.montecarlo.n_paths, *c.montecarlo.seed, so);
  Csv csv({"check", "component", "estimate", "target", "std_error", "z"});
  AddZRow(csv, "normalization", "0", rep.normalization);
  AddZRow(csv, "optimal_cost", "0", rep.optimal_cost);
  ordered_json quotient = ordered_json::array();
  double worst = std::max(std::abs(rep.normalization.z),
                          std::abs(rep.optimal_cost.z));
  for (std::size_t i = 0; i < rep.quotient.size(); ++i) {
    AddZRow(csv, "martingale_quotient", std::to_string(i), rep.quotient[i]);
    quotient.push_back(ZJson(rep.quotient[i]));
    worst = std::max(worst, std::abs(rep.quotient[i].z));
  }
  w.Write("identities.csv", csv.text());
  summary["normalization"] = ZJson(rep.normalization);
  summary["optimal_cost"] = ZJson(rep.optimal_cost);
  summary["martingale_quotient"] = quotient;
  summary["max_abs_z"] = worst;
  return summary;
}

MfgEquilibrium Equilibrium(const ExperimentConfig& c, bool keep_iterates) {
  FixedPointOptions fp = c.fixedpoint;
  fp.keep_iterates = keep_iterates;
  fp.throw_on_failure = false;
  // This mode logs the iteration errors down to round-off.
  if (c.mode == Mode::kReproducePaper) fp.tol = std::min(fp.tol, 1e-14);
  return SolveConsistency(*c.game, TimeGrid(c.game->T, c.steps), fp);
}

ordered_json ConvergenceSummary(const MfgEquilibrium& eq) {
  return {{"converged", eq.log.converged},
          {"iterations", eq.log.iterations},
          {"tol", eq.log.tol},
          {"final_error", eq.log.errors.empty() ? 0.0 : eq.log.errors.back()}};
}

void ThrowIfUnconverged(const MfgEquilibrium& eq) {
  if (!eq.log.converged) {
    throw NotConverged(eq.log.iterations,
                       eq.log.errors.empty() ? 0.0 : eq.log.errors.back());
  }
}

PopulationOptions PopOptions(const ExperimentConfig& c, int N, int threads) {
  PopulationOptions o;
  o.n_agents = N;
  o.n_reps = c.population.n_reps;
  o.seed = *c.montecarlo.seed;
  o.coarse_steps = c.population.coarse_steps;
  o.scheme = c.montecarlo.scheme;
  o.threads = threads;
  return o;
}

std::vector<AgentRole> Roles(const MajorMinorSpec& g) {
  std::vector<AgentRole> roles = {AgentRole::Major()};
  for (int k = 0; k < g.K(); ++k) roles.push_back(AgentRole::Minor(k));
  return roles;
}

const std::vector<std::string> kFluctuationHeader = {
    "n_agents", "mean_abs_dev_T", "std_error_T", "mean_max_abs_dev",
    "std_error_max"};

void AddFluctuationRow(Csv& csv, const PopulationRun& run) {
  const SampleMean end = MeanOf(run.fluctuation_end);
  const SampleMean mx = MeanOf(run.fluctuation_max);
  csv.Row({std::to_string(run.n_agents), Num(end.mean), Num(end.std_error),
           Num(mx.mean), Num(mx.std_error)});
}

// Slope of the mean terminal fluctuation against N over finite N.
ordered_json FluctuationSlope(const std::vector<const PopulationRun*>& runs) {
  std::vector<double> Ns, means;
  for (const PopulationRun* r : runs) {
    if (r->n_agents > 0) {
      Ns.push_back(r->n_agents);
      means.push_back(MeanOf(r->fluctuation_end).mean);
    }
  }
  if (Ns.size() < 2) return nullptr;
  return LogLogSlope(Ns, means);
}

ordered_json SimulatePopulations(const ExperimentConfig& c, Writer& w,
                                 const MfgEquilibrium& eq, int threads) {
  Csv costs({"n_agents", "agent", "log_cost", "std_error", "n_reps"});
  Csv fluct(kFluctuationHeader);
  std::vector<PopulationRun> runs;
  for (int N : c.population.n_agents) {
    runs.push_back(SimulatePopulation(*c.game, eq, PopOptions(c, N, threads)));
    const PopulationRun& run = runs.back();
    for (AgentRole a : Roles(*c.game)) {
      if (!a.major && run.counts[a.type] == 0) continue;
      const LogMeanExpEstimate est = FiniteCost(run, a);
      costs.Row({std::to_string(N), a.Name(), Num(est.log_value),
                 Num(est.std_error), std::to_string(run.n_reps)});
    }
    AddFluctuationRow(fluct, run);
  }
  w.Write("population.csv", costs.text());
  w.Write("fluctuation.csv", fluct.text());
  std::vector<const PopulationRun*> ptrs;
  for (const auto& r : runs) ptrs.push_back(&r);
  return {{"fluctuation_loglog_slope", FluctuationSlope(ptrs)}};
}

ordered_json NashGaps(const ExperimentConfig& c, Writer& w,
                      const MfgEquilibrium& eq, int threads) {
  const MajorMinorSpec& g = *c.game;
  Csv devs({"n_agents", "agent", "deviation", "log_cost", "improvement",
            "std_error"});
  Csv gaps({"n_agents", "agent", "equilibrium_log_cost", "gap", "std_error",
            "best_deviation"});
  Csv fluct(kFluctuationHeader);
  std::vector<std::vector<NashGapReport>> by_role(1 + g.K());
  std::vector<PopulationRun> runs;
  for (int N : c.population.n_agents) {
    if (N < 1) throw ParseError("field 'population.n_agents': nash-gap needs N >= 1");
    const PopulationOptions o = PopOptions(c, N, threads);
    runs.push_back(SimulatePopulation(g, eq, o));
    const PopulationRun& run = runs.back();
    AddFluctuationRow(fluct, run);
    const std::vector<AgentRole> roles = Roles(g);
    for (std::size_t ri = 0; ri < roles.size(); ++ri) {
      const AgentRole a = roles[ri];
      if (!a.major && run.counts[a.type] == 0) continue;
      const NashGapReport rep =
          NashGap(g, eq, a, DeviationFamily(EquilibriumLaw(eq, a)), o, &run);
      for (const DeviationResult& d : rep.deviations) {
        devs.Row({std::to_string(N), a.Name(), d.name,
                  Num(d.cost.log_value), Num(d.improvement),
                  Num(d.std_error)});
      }
      gaps.Row({std::to_string(N), a.Name(), Num(rep.equilibrium.log_value),
                Num(rep.gap), Num(rep.gap_se),
                rep.deviations[rep.best].name});
      by_role[ri].push_back(rep);
    }
  }
  w.Write("deviations.csv", devs.text());
  w.Write("gaps.csv", gaps.text());
  w.Write("fluctuation.csv", fluct.text());

  ordered_json nonincreasing = ordered_json::object();
  const std::vector<AgentRole> roles = Roles(g);
  for (std::size_t ri = 0; ri < roles.size(); ++ri) {
    nonincreasing[roles[ri].Name()] = GapsNonincreasing(by_role[ri]);
  }
  std::vector<const PopulationRun*> ptrs;
  for (const auto& r : runs) ptrs.push_back(&r);
  return {{"gaps_nonincreasing", nonincreasing},
          {"fluctuation_loglog_slope", FluctuationSlope(ptrs)}};
}

std::string Versions() {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d.%d.%d", EIGEN_WORLD_VERSION,
                EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION);
  return buf;
}

ordered_json ConfigEcho(const std::string& text) {
  try {
    return ordered_json::parse(text);
  } catch (const std::exception&) {
    return text;
  }
}

}  // namespace

std::string GitBlobHash(const std::string& bytes) {
  const std::string header = "blob " + std::to_string(bytes.size());
  std::string data = header;
  data.push_back('\0');
  data += bytes;
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int size = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &size, EVP_sha1(),
                 nullptr) != 1) {
    throw Error("SHA-1 digest failed");
  }
  return Hex(digest, size);
}

int ExitCode(const std::exception& e) {
  if (dynamic_cast<const ParseError*>(&e) ||
      dynamic_cast<const AssumptionViolated*>(&e) ||
      dynamic_cast<const DimensionMismatch*>(&e) ||
      dynamic_cast<const OutOfRange*>(&e)) {
    return 2;
  }
  if (dynamic_cast<const NotConverged*>(&e)) return 3;
  if (dynamic_cast<const FiniteEscape*>(&e)) return 4;
  if (dynamic_cast<const NonFiniteState*>(&e)) return 5;
  return 1;
}

ResultBundle Run(const ExperimentConfig& c, const RunOptions& options) {
  Writer w(options.out_dir.empty() ? c.output_directory : options.out_dir);
  const int threads = options.threads;
  ordered_json summary;
  std::function<void()> after;

  switch (c.mode) {
    case Mode::kSolveSingle:
      summary = SolveSingle(c, w, false, threads);
      break;
    case Mode::kVerifySingle:
      summary = SolveSingle(c, w, true, threads);
      break;
    case Mode::kSolveMfg:
    case Mode::kReproducePaper: {
      const bool paper = c.mode == Mode::kReproducePaper;
      const MfgEquilibrium eq = Equilibrium(c, paper);
      WriteEquilibrium(w, eq);
      if (paper) WriteIterates(w, eq);
      summary = ConvergenceSummary(eq);
      if (!eq.log.converged) after = [eq] { ThrowIfUnconverged(eq); };
      break;
    }
    case Mode::kSimulatePopulation:
    case Mode::kNashGap: {
      const MfgEquilibrium eq = Equilibrium(c, false);
      WriteEquilibrium(w, eq);
      summary = ConvergenceSummary(eq);
      if (!eq.log.converged) {
        after = [eq] { ThrowIfUnconverged(eq); };
        break;
      }
      const ordered_json extra = c.mode == Mode::kNashGap
                                     ? NashGaps(c, w, eq, threads)
                                     : SimulatePopulations(c, w, eq, threads);
      for (const auto& item : extra.items()) summary[item.key()] = item.value();
      break;
    }
  }

  ordered_json manifest;
  manifest["tool"] = "rsmfg";
  manifest["version"] = kVersion;
  manifest["mode"] = ModeName(c.mode);
  manifest["config_hash"] = GitBlobHash(c.text);
  manifest["config"] = ConfigEcho(c.text);
  manifest["versions"] = {{"rsmfg", kVersion},
                          {"eigen", Versions()},
                          {"nlohmann_json",
                           std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                               std::to_string(NLOHMANN_JSON_VERSION_MINOR) +
                               "." +
                               std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                          {"compiler", __VERSION__}};
  ordered_json outputs = ordered_json::array();
  for (std::size_t i = 0; i < w.files().size(); ++i) {
    outputs.push_back({{"file", w.files()[i]}, {"sha1", w.hashes()[i]}});
  }
  manifest["outputs"] = outputs;
  manifest["summary"] = summary;
  w.Write("manifest.json", manifest.dump(2) + "\n");

  if (after) after();
  return {w.dir().string(), w.files()};
}

}  // namespace rsmfg
