#include "unstable_lens/attack.hpp"

#include "unstable_lens/io.hpp"
#include "unstable_lens/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

namespace ulens {

using nlohmann::json;

std::string to_string(PMode m) { return m == PMode::NetworkOutput ? "net" : "gt"; }

PMode p_mode_from_string(const std::string& s) {
  if (s == "net" || s == "network-output" || s == "f(Ax)") return PMode::NetworkOutput;
  if (s == "gt" || s == "ground-truth" || s == "x") return PMode::GroundTruth;
  throw ArgumentError("unknown p-mode '" + s + "' (expected net or gt)");
}

void AttackConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ArgumentError("attack lambda must be finite and >= 0");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ArgumentError("attack momentum gamma must lie in [0, 1)");
  if (!(eta > 0.0) || !std::isfinite(eta)) throw ArgumentError("attack learning rate eta must be positive");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ArgumentError("attack scale tau must be positive");
  if (iterations < 0) throw ArgumentError("attack iteration count must be >= 0");
  if (nan_check_every < 1) throw ArgumentError("NaN check interval must be positive");
  if (!(norm_budget > 0.0)) throw ArgumentError("norm budget must be positive");
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    if (checkpoints[i] < 0 || checkpoints[i] > iterations) {
      throw ArgumentError("checkpoint " + std::to_string(checkpoints[i]) + " outside [0, M]");
    }
    if (i && checkpoints[i] <= checkpoints[i - 1]) throw ArgumentError("checkpoints must be strictly increasing");
  }
}

namespace {

struct PresetRow {
  double lambda, gamma, eta, tau;
  PMode p;
  std::vector<int> checkpoints;
};

const std::map<std::string, PresetRow>& preset_table() {
  static const std::map<std::string, PresetRow> rows = {
      {"deep-mri-table1", {0.001, 0.9, 0.01, 0.01, PMode::NetworkOutput, {2000, 4000, 6000}}},
      {"automap-fig2", {0.1, 0.9, 0.001, 1e-5, PMode::NetworkOutput, {12, 16, 20, 24}}},
      {"automap-fig-si", {0.1, 0.9, 0.001, 1e-5, PMode::GroundTruth, {160, 170, 177, 183}}},
      {"mri-vn", {1.0, 0.9, 0.005, 0.001, PMode::NetworkOutput, {}}},
      {"med-50", {20.0, 0.9, 0.005, 0.005, PMode::NetworkOutput, {}}},
  };
  return rows;
}

}  // namespace

const std::vector<std::string>& AttackConfig::preset_names() {
  static const std::vector<std::string> names = {"deep-mri-table1", "automap-fig2", "automap-fig-si", "mri-vn",
                                                 "med-50"};
  return names;
}

AttackConfig AttackConfig::preset(const std::string& name) {
  const auto it = preset_table().find(name);
  if (it == preset_table().end()) throw ArgumentError("unknown preset '" + name + "'");
  const auto& row = it->second;
  AttackConfig cfg;
  cfg.name = name;
  cfg.lambda = row.lambda;
  cfg.gamma = row.gamma;
  cfg.eta = row.eta;
  cfg.tau = row.tau;
  cfg.p_mode = row.p;
  cfg.checkpoints = row.checkpoints;
  // Run to the last checkpoint; presets without a schedule ran to convergence.
  cfg.iterations = row.checkpoints.empty() ? 2000 : row.checkpoints.back();
  return cfg;
}

std::string AttackConfig::to_json() const {
  nlohmann::ordered_json j;
  j["name"] = name;
  j["lambda"] = lambda;
  j["gamma"] = gamma;
  j["eta"] = eta;
  j["tau"] = tau;
  j["p_mode"] = to_string(p_mode);
  j["iterations"] = iterations;
  j["seed"] = seed;
  j["checkpoints"] = checkpoints;
  j["nan_check_every"] = nan_check_every;
  if (std::isfinite(norm_budget)) j["norm_budget"] = norm_budget;
  return j.dump(2);
}

namespace {

AttackConfig config_from(const json& j) {
  if (!j.is_object()) throw FormatError("attack preset must be a JSON object");
  AttackConfig cfg;
  if (j.contains("name")) {
    cfg.name = j.at("name").get<std::string>();
    // A known name starts from the table row; listed fields override it.
    if (preset_table().count(cfg.name)) cfg = AttackConfig::preset(cfg.name);
  }
  try {
    for (const char* key : {"lambda", "gamma", "eta", "tau"}) {
      if (!j.contains(key) && !preset_table().count(cfg.name)) {
        throw FormatError(std::string("attack preset is missing '") + key + "'");
      }
    }
    if (j.contains("lambda")) cfg.lambda = j.at("lambda").get<double>();
    if (j.contains("gamma")) cfg.gamma = j.at("gamma").get<double>();
    if (j.contains("eta")) cfg.eta = j.at("eta").get<double>();
    if (j.contains("tau")) cfg.tau = j.at("tau").get<double>();
    if (j.contains("p_mode")) cfg.p_mode = p_mode_from_string(j.at("p_mode").get<std::string>());
    if (j.contains("checkpoints")) cfg.checkpoints = j.at("checkpoints").get<std::vector<int>>();
    if (j.contains("iterations")) {
      cfg.iterations = j.at("iterations").get<int>();
    } else if (!cfg.checkpoints.empty()) {
      cfg.iterations = cfg.checkpoints.back();
    }
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("nan_check_every")) cfg.nan_check_every = j.at("nan_check_every").get<int>();
    if (j.contains("norm_budget")) cfg.norm_budget = j.at("norm_budget").get<double>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed attack preset: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

}  // namespace

AttackConfig AttackConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("attack preset is not valid JSON: ") + e.what());
  }
  return config_from(j);
}

std::vector<AttackConfig> load_presets(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  std::vector<AttackConfig> out;
  if (j.is_array()) {
    for (const auto& item : j) out.push_back(config_from(item));
  } else {
    out.push_back(config_from(j));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void check_dims(const SamplingOperator& A, const MeasurementVector& y, const Image& r) {
  if (r.height() != A.image_height() || r.width() != A.image_width()) {
    throw ShapeError("perturbation does not match the operator grid");
  }
  if (y.size() != A.measurement_size()) throw ShapeError("measurements do not match the operator");
}

Image real_image(const RealGrid& v) { return Image::from_real(v); }

}  // namespace

double objective(Reconstructor& f, const SamplingOperator& A, const MeasurementVector& y, const Image& p,
                 double lambda, const Image& r) {
  check_dims(A, y, r);
  const Image out = f.reconstruct(y + A.apply(r));
  if (!out.same_shape(p)) throw ShapeError("target p does not match the reconstruction");
  const double n = norm2(out - p);
  const double rn = norm2(r);
  return 0.5 * n * n - 0.5 * lambda * rn * rn;
}

namespace {

// 1/2 Re(B grad_g(y + A r, p)) with B either A* or an FBP.
template <typename Back>
Image half_back_gradient(Reconstructor& f, const SamplingOperator& A, const MeasurementVector& y, const Image& p,
                         const Image& r, Back&& back) {
  if (!f.gradient_capable()) throw CapabilityError("reconstructor '" + f.name() + "' exposes no gradient");
  const MeasurementVector gu = f.grad_g(y + A.apply(r), p);
  return real_image(0.5 * back(gu).real());
}

}  // namespace

Image grad_objective(Reconstructor& f, const SamplingOperator& A, const MeasurementVector& y, const Image& p,
                     double lambda, const Image& r) {
  check_dims(A, y, r);
  const Image g = half_back_gradient(f, A, y, p, r, [&](const MeasurementVector& u) { return A.adjoint(u); });
  return g - lambda * Image::from_real(r.real());
}

Image initial_perturbation(Eigen::Index h, Eigen::Index w, const AttackConfig& cfg) {
  Rng rng(cfg.seed, 0xa77ac);
  RealGrid r(h, w);
  for (Eigen::Index i = 0; i < h; ++i)
    for (Eigen::Index j = 0; j < w; ++j) r(i, j) = cfg.tau * rng.uniform();
  return Image::from_real(r);
}

namespace {

// Shared momentum loop; `step` returns the velocity increment at r.
template <typename Step>
PerturbationTrace ascend(Reconstructor& f, const SamplingOperator& A, const Image& x, const AttackConfig& cfg,
                         Step&& step) {
  cfg.validate();
  if (x.height() != A.image_height() || x.width() != A.image_width()) {
    throw ShapeError("image does not match the operator grid");
  }
  PerturbationTrace trace;
  trace.config = cfg;
  const MeasurementVector y = A.apply(x);
  const Image fy = f.reconstruct(y);
  const Image p = cfg.p_mode == PMode::NetworkOutput ? fy : x;

  Image r = initial_perturbation(x.height(), x.width(), cfg);
  RealGrid v = RealGrid::Zero(x.height(), x.width());
  std::size_t next_checkpoint = 0;

  for (int i = 0;; ++i) {
    const bool at_checkpoint = next_checkpoint < cfg.checkpoints.size() && cfg.checkpoints[next_checkpoint] == i;
    const bool at_guard = i % cfg.nan_check_every == 0;
    if (at_checkpoint || at_guard) {
      const Image out = f.reconstruct(y + A.apply(r));
      const double fit = norm2(out - p), rn = norm2(r);
      const double q = 0.5 * fit * fit - 0.5 * cfg.lambda * rn * rn;
      if (at_guard) trace.objective_log.emplace_back(i, q);
      if (!std::isfinite(q)) {
        trace.aborted = true;
        trace.abort_reason = "objective is not finite at iteration " + std::to_string(i);
        break;
      }
      if (at_checkpoint) {
        trace.checkpoints.push_back({i, r, q, rn, norm2(out - fy)});
        ++next_checkpoint;
      }
    }
    if (i == cfg.iterations) break;
    const RealGrid inc = step(r);
    v = cfg.gamma * v + inc;
    const RealGrid next = r.real() + v;
    if (!next.allFinite()) {
      trace.aborted = true;
      trace.abort_reason = "perturbation diverged at iteration " + std::to_string(i + 1);
      break;
    }
    if (std::sqrt(next.square().sum()) > cfg.norm_budget) {
      trace.budget_reached = true;
      if (trace.checkpoints.empty() || trace.checkpoints.back().iteration != i) {
        const Image out = f.reconstruct(y + A.apply(r));
        const double fit = norm2(out - p), rn = norm2(r);
        trace.checkpoints.push_back({i, r, 0.5 * fit * fit - 0.5 * cfg.lambda * rn * rn, rn, norm2(out - fy)});
      }
      break;
    }
    r = Image::from_real(next);
    trace.iterations_run = i + 1;
  }
  trace.r = r;
  return trace;
}

}  // namespace

PerturbationTrace find_perturbation(Reconstructor& f, const SamplingOperator& A, const Image& x,
                                    const AttackConfig& cfg) {
  if (!f.gradient_capable()) throw CapabilityError("reconstructor '" + f.name() + "' exposes no gradient");
  const MeasurementVector y = A.apply(x);
  const Image p = cfg.p_mode == PMode::NetworkOutput ? f.reconstruct(y) : x;
  return ascend(f, A, x, cfg, [&](const Image& r) -> RealGrid {
    return cfg.eta * grad_objective(f, A, y, p, cfg.lambda, r).real();
  });
}

PerturbationTrace find_perturbation_radon(Reconstructor& f, const RadonOperator& R, const Image& x,
                                          const AttackConfig& cfg) {
  if (!f.gradient_capable()) throw CapabilityError("reconstructor '" + f.name() + "' exposes no gradient");
  const MeasurementVector y = R.apply(x);
  const Image p = cfg.p_mode == PMode::NetworkOutput ? f.reconstruct(y) : x;
  return ascend(f, R, x, cfg, [&](const Image& r) -> RealGrid {
    const Image g = half_back_gradient(f, R, y, p, r, [&](const MeasurementVector& u) { return fbp(R, u); });
    // The regulariser enters un-scaled by eta, as in the printed loop.
    return cfg.eta * g.real() - cfg.lambda * r.real();
  });
}

// ---------------------------------------------------------------------------
// Reports

StabilityRecord attack_report(const PerturbationTrace& trace, const Image& x, Reconstructor& f,
                              const SamplingOperator& A, Reconstructor* stable) {
  StabilityRecord rec;
  rec.reconstructor = f.name();
  rec.stable_reconstructor = stable ? stable->name() : "";
  rec.x_norm = norm2(x);
  rec.iterations_run = trace.iterations_run;
  rec.aborted = trace.aborted;

  const MeasurementVector y = A.apply(x);
  const Image fy = f.reconstruct(y);
  const Image p = trace.config.p_mode == PMode::NetworkOutput ? fy : x;
  Image sy;
  if (stable) sy = stable->reconstruct(y);
  auto peak_of = [](const Image& im) {
    const double m = im.values().abs().maxCoeff();
    return m > 0.0 ? m : 1.0;
  };

  for (const auto& cp : trace.checkpoints) {
    StabilityRow row;
    row.iteration = cp.iteration;
    row.norm = norm2(cp.r);
    row.relative_norm = rec.x_norm > 0.0 ? row.norm / rec.x_norm : 0.0;
    const MeasurementVector yr = A.apply(x + cp.r);
    const Image out = f.reconstruct(yr);
    const double fit = norm2(out - p);
    row.objective = 0.5 * fit * fit - 0.5 * trace.config.lambda * row.norm * row.norm;
    row.deviation = norm2(out - fy);
    row.psnr = psnr(fy, out, peak_of(fy));
    if (stable) {
      const Image so = stable->reconstruct(yr);
      row.stable_deviation = norm2(so - sy);
      row.stable_psnr = psnr(sy, so, peak_of(sy));
    }
    if (row.norm > 0.0) rec.max_amplification = std::max(rec.max_amplification, row.deviation / row.norm);
    rec.rows.push_back(row);
  }
  return rec;
}

std::string stability_csv(const StabilityRecord& record) {
  CsvWriter csv({"iteration", "norm", "relative_norm", "objective", "deviation", "psnr", "stable_deviation",
                 "stable_psnr"});
  auto opt = [](double v) { return std::isnan(v) ? std::string() : format_double(v); };
  for (const auto& r : record.rows) {
    csv.row({std::to_string(r.iteration), format_double(r.norm), format_double(r.relative_norm),
             format_double(r.objective), format_double(r.deviation), format_double(r.psnr), opt(r.stable_deviation),
             opt(r.stable_psnr)});
  }
  return csv.str();
}

namespace {

std::string tag(int iteration) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06d", iteration);
  return buf;
}

}  // namespace

void write_attack_outputs(const PerturbationTrace& trace, const StabilityRecord& record, const Image& x,
                          Reconstructor& f, const SamplingOperator& A, Reconstructor* stable,
                          const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "metrics.csv", stability_csv(record));
  const double peak = std::max(x.values().abs().maxCoeff(), 1e-12);
  const MeasurementVector y = A.apply(x);
  save_png(x, dir / "x.png", peak);
  save_png(f.reconstruct(y), dir / "f_clean.png", peak);
  if (stable) save_png(stable->reconstruct(y), dir / "stable_clean.png", peak);
  for (const auto& cp : trace.checkpoints) {
    const std::string t = tag(cp.iteration);
    const Image xr = x + cp.r;
    const MeasurementVector yr = A.apply(xr);
    save_png(xr, dir / ("x_plus_r_" + t + ".png"), peak);
    save_png(f.reconstruct(yr), dir / ("f_" + t + ".png"), peak);
    if (stable) save_png(stable->reconstruct(yr), dir / ("stable_" + t + ".png"), peak);
    save_png(cp.r, dir / ("r_" + t + ".png"));
  }
}

void save_trace(const PerturbationTrace& trace, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json j;
  j["config"] = json::parse(trace.config.to_json());
  j["iterations_run"] = trace.iterations_run;
  j["aborted"] = trace.aborted;
  j["abort_reason"] = trace.abort_reason;
  j["budget_reached"] = trace.budget_reached;
  j["checkpoints"] = nlohmann::ordered_json::array();
  CsvWriter csv({"iteration", "objective", "norm", "deviation"});
  for (const auto& cp : trace.checkpoints) {
    const std::string file = "r_" + tag(cp.iteration) + ".img";
    save_image(cp.r, dir / file);
    j["checkpoints"].push_back(
        {{"iteration", cp.iteration}, {"objective", cp.objective}, {"norm", cp.norm}, {"deviation", cp.deviation},
         {"file", file}});
    csv.row({std::to_string(cp.iteration), format_double(cp.objective), format_double(cp.norm),
             format_double(cp.deviation)});
  }
  j["objective_log"] = trace.objective_log;
  save_image(trace.r, dir / "final.img");
  write_text(dir / "trace.json", j.dump(2) + "\n");
  write_text(dir / "trace.csv", csv.str());
}

PerturbationTrace load_trace(const std::filesystem::path& dir) {
  json j;
  try {
    j = json::parse(read_text(dir / "trace.json"));
  } catch (const json::exception& e) {
    throw FormatError((dir / "trace.json").string() + ": " + e.what());
  }
  PerturbationTrace trace;
  try {
    trace.config = config_from(j.at("config"));
    trace.iterations_run = j.at("iterations_run").get<int>();
    trace.aborted = j.at("aborted").get<bool>();
    trace.abort_reason = j.at("abort_reason").get<std::string>();
    trace.budget_reached = j.value("budget_reached", false);
    for (const auto& c : j.at("checkpoints")) {
      Checkpoint cp;
      cp.iteration = c.at("iteration").get<int>();
      cp.objective = c.at("objective").get<double>();
      cp.norm = c.at("norm").get<double>();
      cp.deviation = c.at("deviation").get<double>();
      cp.r = load_image(dir / c.at("file").get<std::string>());
      trace.checkpoints.push_back(std::move(cp));
    }
    trace.objective_log = j.at("objective_log").get<std::vector<std::pair<int, double>>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed trace: ") + e.what());
  }
  trace.r = load_image(dir / "final.img");
  return trace;
}

}  // namespace ulens
