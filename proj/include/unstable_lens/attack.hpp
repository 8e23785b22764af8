#pragma once

#include "unstable_lens/core.hpp"
#include "unstable_lens/operators.hpp"
#include "unstable_lens/reconstructors.hpp"

#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace ulens {

// Target p in Q^p_y: the network's own output f(Ax), or the ground truth x.
enum class PMode { NetworkOutput, GroundTruth };

std::string to_string(PMode m);
PMode p_mode_from_string(const std::string& s);  // "net" / "network-output", "gt" / "ground-truth"

struct AttackConfig {
  std::string name = "custom";
  double lambda = 0.001;
  double gamma = 0.9;
  double eta = 0.01;
  double tau = 0.01;
  int iterations = 2000;  // M
  PMode p_mode = PMode::NetworkOutput;
  std::uint64_t seed = 0;
  std::vector<int> checkpoints;  // iteration indices i in [0, M]; r_i is recorded
  int nan_check_every = 50;
  // Early stop: the loop ends before the first iterate with ||r|| above this,
  // and r_M is the last iterate inside the budget (recorded as a checkpoint).
  double norm_budget = std::numeric_limits<double>::infinity();

  void validate() const;

  // Named presets: deep-mri-table1, automap-fig2, automap-fig-si, mri-vn, med-50.
  static AttackConfig preset(const std::string& name);
  static const std::vector<std::string>& preset_names();

  // {name, lambda, gamma, eta, tau, p_mode} plus optional iterations, seed, checkpoints.
  std::string to_json() const;
  static AttackConfig from_json(const std::string& text);
};

// Presets stored in a JSON file: either one object or an array of them.
std::vector<AttackConfig> load_presets(const std::filesystem::path& path);

struct Checkpoint {
  int iteration = 0;
  Image r;
  double objective = 0.0;
  double norm = 0.0;
  double deviation = 0.0;  // ||f(y + A r) - f(y)||
};

struct PerturbationTrace {
  AttackConfig config;
  Image r;  // r_M, or the last finite iterate when aborted
  int iterations_run = 0;
  std::vector<Checkpoint> checkpoints;
  std::vector<std::pair<int, double>> objective_log;  // sampled every nan_check_every iterations
  bool aborted = false;
  std::string abort_reason;
  bool budget_reached = false;
};

// Q(r) = 1/2 ||f(y + A r) - p||^2 - lambda/2 ||r||^2.
double objective(Reconstructor& f, const SamplingOperator& A, const MeasurementVector& y, const Image& p,
                 double lambda, const Image& r);

// Exact derivative of Q with respect to real r: 1/2 Re(A* grad_g(y + A r, p)) - lambda r.
Image grad_objective(Reconstructor& f, const SamplingOperator& A, const MeasurementVector& y, const Image& p,
                     double lambda, const Image& r);

// Momentum ascent from r_0 = tau * Unif([0, 1]^N): v <- gamma v + eta grad Q(r), r <- r + v.
PerturbationTrace find_perturbation(Reconstructor& f, const SamplingOperator& A, const Image& x,
                                    const AttackConfig& cfg);

// The Radon loop: v <- gamma v + eta (1/2) Re(B grad_g(y + R r)) - lambda r, with B = fbp.
PerturbationTrace find_perturbation_radon(Reconstructor& f, const RadonOperator& R, const Image& x,
                                          const AttackConfig& cfg);

// Uniform start used by both loops, exposed for tests.
Image initial_perturbation(Eigen::Index h, Eigen::Index w, const AttackConfig& cfg);

struct StabilityRow {
  int iteration = 0;
  double norm = 0.0;
  double relative_norm = 0.0;  // ||r|| / ||x||
  double objective = 0.0;
  double deviation = 0.0;      // ||f(A(x + r)) - f(Ax)||
  double psnr = 0.0;           // f(A(x + r)) against f(Ax)
  double stable_deviation = std::numeric_limits<double>::quiet_NaN();
  double stable_psnr = std::numeric_limits<double>::quiet_NaN();
};

struct StabilityRecord {
  std::string reconstructor;
  std::string stable_reconstructor;
  std::vector<StabilityRow> rows;
  double x_norm = 0.0;
  int iterations_run = 0;
  bool aborted = false;
  // Largest deviation / norm over the checkpoints; 0 without checkpoints.
  double max_amplification = 0.0;
};

// Recomputes every metric from the checkpointed r_i. `stable` is optional.
StabilityRecord attack_report(const PerturbationTrace& trace, const Image& x, Reconstructor& f,
                              const SamplingOperator& A, Reconstructor* stable = nullptr);

std::string stability_csv(const StabilityRecord& record);

// metrics.csv, r_<i>.img per checkpoint, and PNG panels (x + r, f, stable, |r|).
void write_attack_outputs(const PerturbationTrace& trace, const StabilityRecord& record, const Image& x,
                          Reconstructor& f, const SamplingOperator& A, Reconstructor* stable,
                          const std::filesystem::path& dir);

// trace.json + trace.csv + r_<i>.img per checkpoint + final.img.
void save_trace(const PerturbationTrace& trace, const std::filesystem::path& dir);
PerturbationTrace load_trace(const std::filesystem::path& dir);

}  // namespace ulens
