#include "unstable_lens/attack.hpp"
#include "unstable_lens/bridge.hpp"
#include "unstable_lens/io.hpp"
#include "unstable_lens/stability.hpp"
#include "unstable_lens/toynet.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using namespace ulens;
using nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Options {
  std::string out = "out";
  std::uint64_t seed = 0;
  std::string image;
  std::string phantom = "ellipses";
  int size = 64;
  std::string mask = "gaussian-lines:0.33";
  std::string op = "fourier";
  std::string net;
  std::string bridge;
  double bridge_timeout = 60.0;
  std::string recon;
  std::string stable = "split-bregman";
  std::string sb_preset = "unit-range";

  // attack
  std::string preset;
  std::string config;
  std::optional<double> lambda, gamma, eta, tau, budget;
  std::optional<int> iterations;
  std::string checkpoints;
  std::string p_mode;
  int views = 60;

  // structural / sweep
  std::string glyphs;
  std::string intensity = "0.4";
  int glyph_size = 16;
  std::string rates;
  bool nested = false;
  int phantoms = 5;

  // training
  int count = 30;
  int ellipses = 6;
  int epochs = 20;
  double lr = 0.3;
  double momentum = 0.9;
  double decay = 1e-7;

  // report
  std::string trace;
};

// Collected while a command runs, written to manifest.json at the end.
struct RunLog {
  std::vector<fs::path> inputs;
  ordered_json extra = ordered_json::object();
};

std::vector<std::string> split(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ArgumentError("'" + s + "' is not a number");
  }
  if (used != s.size()) throw ArgumentError("'" + s + "' is not a number");
  return v;
}

std::vector<double> doubles(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split(s)) out.push_back(to_double(item));
  return out;
}

std::vector<int> ints(const std::string& s) {
  std::vector<int> out;
  for (const auto& item : split(s)) {
    const double v = to_double(item);
    if (v != std::floor(v)) throw ArgumentError("'" + item + "' is not an integer");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

int thread_cap() {
  const char* env = std::getenv("UNSTABLE_LENS_THREADS");
  const int hw = std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
  if (!env || !*env) return hw;
  const double v = to_double(env);
  if (v < 1 || v != std::floor(v)) throw ArgumentError("UNSTABLE_LENS_THREADS must be a positive integer");
  return static_cast<int>(v);
}

// "family[:value]" on an h x w grid.
SamplingMask parse_mask(const std::string& spec, Eigen::Index h, Eigen::Index w, std::uint64_t seed) {
  const auto colon = spec.find(':');
  const std::string family = spec.substr(0, colon);
  const std::optional<double> value =
      colon == std::string::npos ? std::nullopt : std::optional<double>(to_double(spec.substr(colon + 1)));
  if (family == "full") return SamplingMask::full(h, w);
  MaskParams p;
  p.seed = seed;
  p.rate = value.value_or(0.33);
  const MaskFamily f = mask_family_from_string(family);
  if (f == MaskFamily::EquispacedLines) p.center_lines = 8;
  if (f == MaskFamily::RadialKth) throw ArgumentError("radial-kth masks select Radon views; use --views");
  return make_mask(f, h, w, p);
}

std::unique_ptr<SamplingOperator> parse_operator(const Options& o, Eigen::Index n) {
  const auto parts = split(o.op, ':');
  if (parts.empty()) throw ArgumentError("empty operator spec");
  if (parts[0] == "fourier") return std::make_unique<FourierOperator>(parse_mask(o.mask, n, n, o.seed));
  if (parts[0] == "parallel") {
    const int coils = parts.size() > 1 ? static_cast<int>(to_double(parts[1])) : 4;
    if (coils < 1) throw ArgumentError("coil count must be positive");
    return std::make_unique<ParallelFourierOperator>(synthetic_coils(static_cast<std::size_t>(coils), n, n),
                                                     parse_mask(o.mask, n, n, o.seed));
  }
  if (parts[0] == "radon") {
    const int views = parts.size() > 1 ? static_cast<int>(to_double(parts[1])) : o.views;
    if (views < 1) throw ArgumentError("view count must be positive");
    return std::make_unique<RadonOperator>(n, uniform_angles(static_cast<std::size_t>(views)));
  }
  throw ArgumentError("unknown operator '" + o.op + "' (expected fourier, parallel[:coils] or radon[:views])");
}

std::vector<Image> make_phantoms(const Options& o, int count) {
  Rng rng(o.seed, 0xe11);
  std::vector<Image> out;
  for (int i = 0; i < count; ++i) {
    if (o.phantom == "ellipses") {
      out.push_back(gen_ellipse_phantom(random_ellipse_spec(o.size, o.ellipses, rng)));
    } else if (o.phantom == "disk") {
      out.push_back(disk_phantom(o.size, 0.3 * o.size));
    } else if (o.phantom == "squares") {
      out.push_back(nested_squares_phantom(o.size));
    } else {
      throw ArgumentError("unknown phantom '" + o.phantom + "' (expected ellipses, disk or squares)");
    }
  }
  return out;
}

Image input_image(const Options& o, RunLog& log) {
  if (!o.image.empty()) {
    log.inputs.push_back(o.image);
    return load_image(o.image);
  }
  return make_phantoms(o, 1).front();
}

SplitBregmanConfig sb_config(const Options& o, const SamplingOperator& op) {
  if (dynamic_cast<const RadonOperator*>(&op)) return SplitBregmanConfig::radon_defaults();
  if (o.sb_preset == "unit-range") return SplitBregmanConfig::unit_range_defaults();
  if (o.sb_preset == "published") return SplitBregmanConfig::fourier_defaults();
  throw ArgumentError("unknown split Bregman preset '" + o.sb_preset + "' (expected unit-range or published)");
}

std::optional<ToyNet> load_net(const Options& o, RunLog& log) {
  if (o.net.empty()) return std::nullopt;
  log.inputs.push_back(o.net);
  return ToyNet::load(o.net);
}

std::unique_ptr<Reconstructor> make_recon(const std::string& name, const SamplingOperator& op, const Options& o,
                                          const std::optional<ToyNet>& net) {
  if (name == "adjoint") return std::make_unique<AdjointReconstructor>(op);
  if (name == "split-bregman") return std::make_unique<SplitBregmanReconstructor>(op, sb_config(o, op));
  if (name == "bpdn") return std::make_unique<BpdnReconstructor>(op, BpdnConfig{});
  if (name == "fbp") {
    const auto* radon = dynamic_cast<const RadonOperator*>(&op);
    if (!radon) throw ArgumentError("fbp needs the radon operator");
    return std::make_unique<FbpReconstructor>(*radon);
  }
  if (name == "net") {
    if (!net) throw ArgumentError("reconstructor 'net' needs --net");
    const auto* fourier = dynamic_cast<const FourierOperator*>(&op);
    if (!fourier) throw ArgumentError("the toy net runs on single-coil Fourier operators only");
    return std::make_unique<ToyNetReconstructor>(net->rebind(*fourier));
  }
  if (name == "bridge") {
    if (o.bridge.empty()) throw ArgumentError("reconstructor 'bridge' needs --bridge");
    const auto ms = std::chrono::milliseconds(static_cast<long long>(o.bridge_timeout * 1000.0));
    return std::make_unique<BridgeReconstructor>(o.bridge, op, ms);
  }
  throw ArgumentError("unknown reconstructor '" + name +
                      "' (expected adjoint, split-bregman, bpdn, fbp, net or bridge)");
}

// The attacked map: explicit --recon, else the bridge, else the net, else the adjoint.
std::string attacked_name(const Options& o) {
  if (!o.recon.empty()) return o.recon;
  if (!o.bridge.empty()) return "bridge";
  if (!o.net.empty()) return "net";
  return "adjoint";
}

AttackConfig attack_config(const Options& o, const std::string& default_preset, RunLog& log) {
  AttackConfig cfg;
  if (!o.config.empty()) {
    log.inputs.push_back(o.config);
    const auto loaded = load_presets(o.config);
    if (o.preset.empty()) {
      cfg = loaded.front();
    } else {
      const auto it = std::find_if(loaded.begin(), loaded.end(), [&](const auto& c) { return c.name == o.preset; });
      cfg = it != loaded.end() ? *it : AttackConfig::preset(o.preset);
    }
  } else {
    cfg = AttackConfig::preset(o.preset.empty() ? default_preset : o.preset);
  }
  if (o.lambda) cfg.lambda = *o.lambda;
  if (o.gamma) cfg.gamma = *o.gamma;
  if (o.eta) cfg.eta = *o.eta;
  if (o.tau) cfg.tau = *o.tau;
  if (!o.checkpoints.empty()) cfg.checkpoints = ints(o.checkpoints);
  if (o.iterations) {
    cfg.iterations = *o.iterations;
  } else if (!o.checkpoints.empty()) {
    cfg.iterations = cfg.checkpoints.empty() ? 0 : cfg.checkpoints.back();
  }
  if (o.iterations && o.checkpoints.empty()) {
    // Drop preset checkpoints past a shortened run.
    std::erase_if(cfg.checkpoints, [&](int c) { return c > cfg.iterations; });
  }
  if (!o.p_mode.empty()) cfg.p_mode = p_mode_from_string(o.p_mode);
  cfg.seed = o.seed;
  cfg.validate();
  return cfg;
}

int finish_attack(const PerturbationTrace& trace, const Image& x, const std::string& recon_name, Reconstructor& f,
                  const SamplingOperator& op,
                  Reconstructor* stable, const Options& o, RunLog& log) {
  const fs::path out = o.out;
  save_image(x, out / "x.img");
  // What report needs to rebuild the same operator and maps.
  ordered_json setup;
  setup["operator"] = dynamic_cast<const RadonOperator*>(&op) ? "radon:" + std::to_string(o.views) : o.op;
  setup["mask"] = o.mask;
  setup["seed"] = o.seed;
  setup["recon"] = recon_name;
  setup["stable"] = o.stable;
  setup["sb-preset"] = o.sb_preset;
  setup["net"] = o.net.empty() ? "" : fs::absolute(o.net).string();
  setup["bridge"] = o.bridge;
  write_text(out / "run.json", setup.dump(2) + "\n");
  save_trace(trace, out / "trace");
  const auto record = attack_report(trace, x, f, op, stable);
  write_attack_outputs(trace, record, x, f, op, stable, out);
  log.extra["attack"] = ordered_json::parse(trace.config.to_json());
  log.extra["reconstructor"] = f.name();
  log.extra["stable_reconstructor"] = stable ? stable->name() : "";
  log.extra["iterations_run"] = trace.iterations_run;
  log.extra["budget_reached"] = trace.budget_reached;
  log.extra["max_amplification"] = record.max_amplification;
  if (trace.aborted) throw NumericalError(trace.abort_reason);
  return 0;
}

int cmd_perturb(const Options& o, RunLog& log) {
  const Image x = input_image(o, log);
  const auto net = load_net(o, log);
  std::unique_ptr<SamplingOperator> op;
  if (net && o.mask == Options{}.mask && o.op == "fourier") {
    op = std::make_unique<FourierOperator>(net->op());
  } else {
    op = parse_operator(o, x.height());
  }
  if (dynamic_cast<const RadonOperator*>(op.get())) throw ArgumentError("use perturb-radon for the radon operator");
  const std::string name = attacked_name(o);
  auto f = make_recon(name, *op, o, net);
  std::unique_ptr<Reconstructor> stable;
  if (o.stable != "none") stable = make_recon(o.stable, *op, o, net);
  AttackConfig cfg = attack_config(o, "deep-mri-table1", log);
  if (o.budget) cfg.norm_budget = *o.budget * norm2(x);
  const auto trace = find_perturbation(*f, *op, x, cfg);
  return finish_attack(trace, x, name, *f, *op, stable.get(), o, log);
}

int cmd_perturb_radon(const Options& o, RunLog& log) {
  const Image x = input_image(o, log);
  const RadonOperator radon(x.height(), uniform_angles(static_cast<std::size_t>(o.views)));
  const std::optional<ToyNet> none;
  const std::string name = o.recon.empty() ? (o.bridge.empty() ? "fbp" : "bridge") : o.recon;
  auto f = make_recon(name, radon, o, none);
  std::unique_ptr<Reconstructor> stable;
  if (o.stable != "none") stable = make_recon(o.stable, radon, o, none);
  AttackConfig cfg = attack_config(o, "med-50", log);
  if (o.budget) cfg.norm_budget = *o.budget * norm2(x);
  const auto trace = find_perturbation_radon(*f, radon, x, cfg);
  return finish_attack(trace, x, name, *f, radon, stable.get(), o, log);
}

int cmd_structural(const Options& o, RunLog& log) {
  const Image x = input_image(o, log);
  const auto net = load_net(o, log);
  const auto op = parse_operator(o, x.height());
  std::vector<std::unique_ptr<Reconstructor>> owned;
  std::vector<Reconstructor*> recons;
  for (const auto& name : split(o.recon.empty() ? "adjoint,split-bregman" : o.recon)) {
    owned.push_back(make_recon(name, *op, o, net));
    recons.push_back(owned.back().get());
  }
  std::vector<GlyphOverlay> glyphs;
  const auto names = o.glyphs.empty() ? card_glyphs() : split(o.glyphs);
  for (const auto& name : names) {
    GlyphOverlay g = GlyphOverlay::make(name, 0, 0, 1.0, o.glyph_size);
    g.row = (x.height() - g.height()) / 2;
    g.col = (x.width() - g.width()) / 2;
    if (g.row < 0 || g.col < 0) throw ShapeError("glyph '" + name + "' does not fit the image");
    glyphs.push_back(std::move(g));
  }
  const auto rows = structural_test(recons, *op, x, glyphs, doubles(o.intensity));
  CsvWriter csv({"reconstructor", "glyph", "intensity", "local_psnr", "ncc"});
  for (const auto& r : rows) {
    csv.row({r.reconstructor, r.glyph, format_double(r.intensity), format_double(r.score.local_psnr),
             format_double(r.score.ncc)});
  }
  fs::create_directories(o.out);
  csv.save(fs::path(o.out) / "structural.csv");
  const double peak = std::max(x.values().abs().maxCoeff(), 1e-12);
  save_png(x, fs::path(o.out) / "x.png", peak);
  for (std::size_t i = 0; i < glyphs.size(); ++i) {
    GlyphOverlay g = glyphs[i];
    g.intensity = doubles(o.intensity).back();
    save_png(render_overlay(x, g), fs::path(o.out) / ("x_plus_glyph_" + std::to_string(i) + ".png"), peak);
  }
  log.extra["glyphs"] = names;
  return 0;
}

int cmd_sweep(const Options& o, RunLog& log) {
  if (o.rates.empty()) throw ArgumentError("sweep needs --rates");
  const auto net = load_net(o, log);
  SweepConfig cfg;
  cfg.rates = doubles(o.rates);
  cfg.nested = o.nested;
  cfg.seed = o.seed;
  cfg.views = o.views;
  cfg.threads = thread_cap();
  const std::string family = split(o.mask, ':').empty() ? "gaussian-lines" : split(o.mask, ':').front();
  cfg.family = family == "radon" ? MaskFamily::RadialKth : mask_family_from_string(family);
  if (cfg.family == MaskFamily::RadialKth) cfg.reference = SweepReference::FullSampling;

  std::vector<NamedFactory> factories;
  for (const auto& name : split(o.recon.empty() ? "adjoint,split-bregman" : o.recon)) {
    factories.push_back({name, [name, &o, &net](const SamplingOperator& op) { return make_recon(name, op, o, net); }});
  }
  std::vector<Image> phantoms;
  if (!o.image.empty()) {
    log.inputs.push_back(o.image);
    phantoms.push_back(load_image(o.image));
  } else {
    phantoms = make_phantoms(o, o.phantoms);
  }
  const auto result = sweep(factories, cfg, phantoms);
  fs::create_directories(o.out);
  write_text(fs::path(o.out) / "sweep.csv", sweep_csv(result));
  for (const auto& name : result.reconstructors()) {
    write_text(fs::path(o.out) / ("sweep_" + name + ".svg"), sweep_svg(result, name));
  }
  log.extra["threads"] = cfg.threads;
  return 0;
}

int cmd_train(const Options& o, RunLog& log) {
  if (o.op != "fourier") throw ArgumentError("the toy net trains on the single-coil fourier operator");
  const FourierOperator op(parse_mask(o.mask, o.size, o.size, o.seed));
  std::vector<TrainingPair> data;
  for (auto& x : make_phantoms(o, o.count)) {
    MeasurementVector y = op.apply(x);
    data.push_back({std::move(x), std::move(y)});
  }
  Rng init(o.seed, 0x1e7);
  ToyNet net(op, ToyNetShape{}, init);
  TrainConfig cfg;
  cfg.learning_rate = o.lr;
  cfg.momentum = o.momentum;
  cfg.epochs = o.epochs;
  cfg.weight_decay = o.decay;
  cfg.seed = o.seed;
  const auto result = train(net, data, cfg, [](int epoch, double loss) {
    std::cerr << "epoch " << epoch << " loss " << format_double(loss) << "\n";
  });
  fs::create_directories(o.out);
  net.save(fs::path(o.out) / "net.ulnet");
  CsvWriter loss({"epoch", "loss"});
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    loss.row({std::to_string(e), format_double(result.epoch_loss[e])});
  }
  loss.save(fs::path(o.out) / "loss.csv");
  CsvWriter fit({"phantom_id", "net_psnr", "adjoint_psnr"});
  for (std::size_t i = 0; i < data.size(); ++i) {
    fit.row({std::to_string(i), format_double(psnr(data[i].image, net.forward(data[i].measurements))),
             format_double(psnr(data[i].image, op.adjoint(data[i].measurements)))});
  }
  fit.save(fs::path(o.out) / "train_psnr.csv");
  log.extra["operator"] = op.id();
  log.extra["final_loss"] = result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back();
  return 0;
}

int cmd_reconstruct(const Options& o, RunLog& log) {
  const Image x = input_image(o, log);
  const auto net = load_net(o, log);
  const auto op = parse_operator(o, x.height());
  const std::string name = o.recon.empty() ? "split-bregman" : o.recon;
  auto f = make_recon(name, *op, o, net);
  const Image rec = f->reconstruct(op->apply(x));
  fs::create_directories(o.out);
  const double peak = std::max(x.values().abs().maxCoeff(), 1e-12);
  save_image(rec, fs::path(o.out) / "recon.img");
  save_png(rec, fs::path(o.out) / "recon.png", peak);
  save_png(x, fs::path(o.out) / "x.png", peak);
  CsvWriter csv({"reconstructor", "operator", "psnr"});
  csv.row({f->name(), op->id(), format_double(psnr(x, rec, peak))});
  csv.save(fs::path(o.out) / "metrics.csv");
  return 0;
}

int cmd_report(const Options& o, RunLog& log) {
  if (o.trace.empty()) throw ArgumentError("report needs --trace");
  const fs::path dir = o.trace;
  log.inputs.push_back(dir / "trace.json");
  const PerturbationTrace trace = load_trace(dir);
  Options with_image = o;
  if (with_image.image.empty()) with_image.image = (dir.parent_path() / "x.img").string();
  const Image x = input_image(with_image, log);
  const auto net = load_net(o, log);
  std::unique_ptr<SamplingOperator> op;
  if (o.op == "radon" || o.op.rfind("radon:", 0) == 0) {
    op = parse_operator(o, x.height());
  } else if (net && o.mask == Options{}.mask && o.op == "fourier") {
    op = std::make_unique<FourierOperator>(net->op());
  } else {
    op = parse_operator(o, x.height());
  }
  auto f = make_recon(attacked_name(o), *op, o, net);
  std::unique_ptr<Reconstructor> stable;
  if (o.stable != "none") stable = make_recon(o.stable, *op, o, net);
  const auto record = attack_report(trace, x, *f, *op, stable.get());
  write_attack_outputs(trace, record, x, *f, *op, stable.get(), o.out);
  log.extra["max_amplification"] = record.max_amplification;
  return 0;
}

void write_manifest(const std::string& command, const std::vector<std::string>& argv, const Options& o,
                    const RunLog& log, const std::string& status, const std::string& error, double seconds) {
  const fs::path out = o.out;
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) return;
  ordered_json m;
  m["tool"] = "unstable_lens";
  m["version"] = kVersion;
  m["versions"] = {{"unstable_lens", kVersion},
                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
                   {"bridge_protocol", kBridgeProtocolVersion}};
  m["command"] = command;
  m["argv"] = argv;
  m["seed"] = o.seed;
  m["status"] = status;
  if (!error.empty()) m["error"] = error;
  m["inputs"] = ordered_json::array();
  for (const auto& p : log.inputs) {
    ordered_json e{{"path", p.string()}};
    if (fs::is_regular_file(p)) e["sha256"] = sha256_file(p);
    m["inputs"].push_back(e);
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(out)) {
    if (entry.is_regular_file() && entry.path().filename() != "manifest.json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  m["outputs"] = ordered_json::array();
  for (const auto& p : files) {
    m["outputs"].push_back({{"path", fs::relative(p, out).generic_string()}, {"sha256", sha256_file(p)}});
  }
  m["details"] = log.extra;
  m["timings"] = {{"total_seconds", seconds}};
  write_text(out / "manifest.json", m.dump(2) + "\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Instability tests for image reconstruction maps"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--out", o.out, "Output directory")->capture_default_str();
    sub->add_option("--seed", o.seed, "Seed for every random choice")->capture_default_str();
    sub->add_option("--image", o.image, "Input image in the native .img format");
    sub->add_option("--phantom", o.phantom, "Generated input: ellipses, disk or squares")->capture_default_str();
    sub->add_option("--size", o.size, "Side of generated phantoms")->capture_default_str();
    sub->add_option("--ellipses", o.ellipses, "Ellipses per generated phantom")->capture_default_str();
  };
  auto sampling = [&](CLI::App* sub) {
    sub->add_option("--mask", o.mask, "family[:rate], e.g. gaussian-lines:0.33, poisson-disk:0.25, full")
        ->capture_default_str();
    sub->add_option("--operator", o.op, "fourier, parallel[:coils] or radon[:views]")->capture_default_str();
  };
  auto models = [&](CLI::App* sub) {
    sub->add_option("--net", o.net, "Toy net weights (.ulnet)");
    sub->add_option("--bridge", o.bridge, "Command line of a bridged model adapter");
    sub->add_option("--bridge-timeout", o.bridge_timeout, "Seconds per bridge call")->capture_default_str();
    sub->add_option("--recon", o.recon, "adjoint, split-bregman, bpdn, fbp, net or bridge");
    sub->add_option("--sb-preset", o.sb_preset, "unit-range or published")->capture_default_str();
  };
  auto attack = [&](CLI::App* sub) {
    sub->add_option("--preset", o.preset, "Attack preset name");
    sub->add_option("--config", o.config, "Preset JSON file (object or array)");
    sub->add_option("--lambda", o.lambda);
    sub->add_option("--gamma", o.gamma);
    sub->add_option("--eta", o.eta);
    sub->add_option("--tau", o.tau);
    sub->add_option("--iterations", o.iterations, "M");
    sub->add_option("--checkpoints", o.checkpoints, "Comma-separated iterations to record");
    sub->add_option("--p-mode", o.p_mode, "net or gt")->check(CLI::IsMember({"net", "gt"}));
    sub->add_option("--budget", o.budget, "Stop before ||r|| exceeds this fraction of ||x||");
    sub->add_option("--stable", o.stable, "Baseline evaluated on the same r, or none")->capture_default_str();
  };

  auto* perturb = app.add_subcommand("perturb", "Worst-case perturbation search against a Fourier-sampled map");
  common(perturb), sampling(perturb), models(perturb), attack(perturb);
  auto* perturb_radon = app.add_subcommand("perturb-radon", "Perturbation search for Radon sampling, FBP in the update");
  common(perturb_radon), models(perturb_radon), attack(perturb_radon);
  perturb_radon->add_option("--views", o.views, "Projection angles over [0, 180)")->capture_default_str();
  auto* structural = app.add_subcommand("structural", "Glyph overlays and their detectability");
  common(structural), sampling(structural), models(structural);
  structural->add_option("--glyphs", o.glyphs, "spade,heart,diamond,club or text:WORDS (default: the four suits)");
  structural->add_option("--intensity", o.intensity, "Comma-separated glyph intensities")->capture_default_str();
  structural->add_option("--glyph-size", o.glyph_size, "16 or 32")->capture_default_str();
  auto* sweep_cmd = app.add_subcommand("sweep", "PSNR against sampling rate");
  common(sweep_cmd), sampling(sweep_cmd), models(sweep_cmd);
  sweep_cmd->add_option("--rates", o.rates, "Comma-separated rates in (0, 1]")->required();
  sweep_cmd->add_flag("--nested", o.nested, "Nest masks across rates");
  sweep_cmd->add_option("--phantoms", o.phantoms, "Generated phantoms")->capture_default_str();
  sweep_cmd->add_option("--views", o.views, "Full view count for radon sweeps")->capture_default_str();
  auto* train_cmd = app.add_subcommand("train-toy", "Train the toy cascade on ellipse phantoms");
  common(train_cmd), sampling(train_cmd);
  train_cmd->add_option("--count", o.count, "Training images")->capture_default_str();
  train_cmd->add_option("--epochs", o.epochs)->capture_default_str();
  train_cmd->add_option("--lr", o.lr)->capture_default_str();
  train_cmd->add_option("--momentum", o.momentum)->capture_default_str();
  train_cmd->add_option("--decay", o.decay, "Weight decay")->capture_default_str();
  auto* recon_cmd = app.add_subcommand("reconstruct", "Reconstruct one image");
  common(recon_cmd), sampling(recon_cmd), models(recon_cmd);
  auto* report = app.add_subcommand("report", "Recompute metrics and panels from a saved trace");
  common(report), sampling(report), models(report);
  report->add_option("--trace", o.trace, "Trace directory written by perturb")->required();
  report->add_option("--stable", o.stable, "Baseline evaluated on the same r, or none")->capture_default_str();
  report->add_option("--views", o.views)->capture_default_str();

  const std::vector<std::string> args(argv + 1, argv + argc);
  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const auto* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();
  if (command == "report") {
    // Flags not given explicitly default to the setup recorded by perturb.
    const fs::path setup_path = fs::path(o.trace).parent_path() / "run.json";
    if (fs::exists(setup_path)) {
      try {
        const auto setup = ordered_json::parse(read_text(setup_path));
        auto fill = [&](const std::string& key, auto& field) {
          if (setup.contains(key) && sub->get_option("--" + key)->count() == 0) setup.at(key).get_to(field);
        };
        fill("operator", o.op);
        fill("mask", o.mask);
        fill("seed", o.seed);
        fill("recon", o.recon);
        fill("stable", o.stable);
        fill("sb-preset", o.sb_preset);
        fill("net", o.net);
        fill("bridge", o.bridge);
      } catch (const std::exception& e) {
        std::cerr << "unstable_lens report: cannot use " << setup_path << ": " << e.what() << "\n";
        return 2;
      }
    }
  }
  RunLog log;
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
  int code = 0;
  std::string status = "ok", error;
  try {
    log.extra["threads"] = thread_cap();
    fs::create_directories(o.out);
    if (command == "perturb") code = cmd_perturb(o, log);
    else if (command == "perturb-radon") code = cmd_perturb_radon(o, log);
    else if (command == "structural") code = cmd_structural(o, log);
    else if (command == "sweep") code = cmd_sweep(o, log);
    else if (command == "train-toy") code = cmd_train(o, log);
    else if (command == "reconstruct") code = cmd_reconstruct(o, log);
    else if (command == "report") code = cmd_report(o, log);
  } catch (const NumericalError& e) {
    code = 3, status = "numerical-abort", error = e.what();
  } catch (const BridgeError& e) {
    code = 3, status = "bridge-abort", error = e.what();
  } catch (const std::invalid_argument& e) {
    code = 2, status = "validation-error", error = e.what();
  } catch (const FormatError& e) {
    code = 2, status = "validation-error", error = e.what();
  } catch (const CapabilityError& e) {
    code = 2, status = "validation-error", error = e.what();
  } catch (const std::exception& e) {
    code = 1, status = "internal-error", error = e.what();
  }
  if (!error.empty()) std::cerr << "unstable_lens " << command << ": " << error << "\n";
  write_manifest(command, args, o, log, status, error, elapsed());
  return code;
}
