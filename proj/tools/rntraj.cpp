// Command-line entry point: gen, match, train, recover, eval,
// baseline-linear-hmm and plotdata.
//
// Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rntraj/cli/config.hpp"
#include "rntraj/eval/metrics.hpp"
#include "rntraj/mapmatch/baseline.hpp"
#include "rntraj/model/rntrajrec.hpp"
#include "rntraj/roadnet/io.hpp"
#include "rntraj/synthgen/synthgen.hpp"
#include "rntraj/train/trainer.hpp"

namespace {

using namespace rntraj;
namespace fs = std::filesystem;
using cli::LogLevel;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Fills options not given on the command line from a key=value file.
void apply_config(CLI::App& sub, const std::string& path) {
  for (const auto& [key, value] : cli::load_key_values(path)) {
    CLI::Option* opt = sub.get_option_no_throw("--" + key);
    if (!opt || key == "config") throw UsageError(path + ": unknown key '" + key + "' for " + sub.get_name());
    if (opt->count() > 0) continue;
    opt->add_result(value);
    opt->run_callback();
  }
}

void require(const CLI::App& sub, const std::vector<std::string>& names) {
  for (const auto& n : names) {
    const CLI::Option* o = sub.get_option("--" + n);
    if (o->count() == 0) throw UsageError(sub.get_name() + ": --" + n + " is required");
  }
}

cli::KeyValues resolved_options(const CLI::App& sub) {
  cli::KeyValues out;
  for (const CLI::Option* o : sub.get_options()) {
    const std::string name = o->get_single_name();
    if (name.empty() || name == "help" || name == "config") continue;
    std::string v;
    if (o->count() > 0) {
      for (const auto& r : o->results()) v += (v.empty() ? "" : ",") + r;
    } else {
      v = o->get_default_str();
    }
    out[name] = v;
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot write " + path);
  os << text;
}

// --- gen ----------------------------------------------------------------

struct GenArgs {
  std::string out_dir;
  synthgen::SynthConfig cfg;
};

void add_gen(CLI::App& app, GenArgs& a) {
  auto* s = app.add_subcommand("gen", "Generate a synthetic city and trajectories");
  s->add_option("--out-dir", a.out_dir, "Output directory");
  s->add_option("--cols", a.cfg.cols, "Lattice intersections west to east");
  s->add_option("--rows", a.cfg.rows, "Lattice intersections south to north");
  s->add_option("--block-len", a.cfg.block_len, "Block length, meters");
  s->add_option("--elevated-fraction", a.cfg.elevated_fraction, "Share of lattice lines with an elevated corridor");
  s->add_option("--elevated-offset", a.cfg.elevated_offset, "Lateral offset of elevated chains, meters");
  s->add_option("--speed-min", a.cfg.speed_min, "Minimum speed, m/s");
  s->add_option("--speed-max", a.cfg.speed_max, "Maximum speed, m/s");
  s->add_option("--noise", a.cfg.gps_noise_sigma, "GPS noise sigma per axis, meters");
  s->add_option("--interval", a.cfg.interval, "Sample interval, seconds");
  s->add_option("--points", a.cfg.points, "Samples per trajectory");
  s->add_option("--count", a.cfg.n_trajectories, "Number of trajectories");
  s->add_option("--seed", a.cfg.seed, "Random seed");
}

cli::RunManifest run_gen(const CLI::App& sub, GenArgs& a) {
  require(sub, {"out-dir"});
  fs::create_directories(a.out_dir);
  const auto sn = synthgen::gen_network(a.cfg);
  const auto trs = synthgen::gen_trajectories(sn.net, a.cfg);
  const std::string seg = a.out_dir + "/segments.txt", edg = a.out_dir + "/edges.txt";
  const std::string lab = a.out_dir + "/labels.txt", truth = a.out_dir + "/truth.txt", raw = a.out_dir + "/raw.txt";
  roadnet::save_network(seg, edg, sn.net);
  {
    std::ofstream os(lab);
    synthgen::write_labels(os, sn.net, sn.elevated);
  }
  std::vector<traj::MatchedTrajectory> truths;
  std::vector<traj::RawTrajectory> raws;
  for (const auto& t : trs) {
    truths.push_back(t.truth);
    raws.push_back(t.raw);
  }
  traj::save_matched_trajectories(truth, truths, sn.net);
  traj::save_raw_trajectories(raw, raws);
  cli::log(LogLevel::info, "generated " + std::to_string(sn.net.size()) + " segments, " +
                               std::to_string(trs.size()) + " trajectories");
  return {"gen", resolved_options(sub), {}, {seg, edg, lab, truth, raw}};
}

// --- match --------------------------------------------------------------

struct NetArgs {
  std::string segments;
  std::string edges;
  double cell_size = 50.0;
};

void add_net_options(CLI::App* s, NetArgs& n) {
  s->add_option("--segments", n.segments, "Segment file");
  s->add_option("--edges", n.edges, "Edge file");
  s->add_option("--cell-size", n.cell_size, "Grid cell size, meters");
}

roadnet::RoadNetwork load_net(const CLI::App& sub, const NetArgs& n) {
  require(sub, {"segments", "edges"});
  return roadnet::load_network(n.segments, n.edges, n.cell_size);
}

struct HmmArgs {
  mapmatch::HmmConfig cfg;
};

void add_hmm_options(CLI::App* s, HmmArgs& h) {
  s->add_option("--sigma", h.cfg.sigma_z, "Emission sigma, meters");
  s->add_option("--hmm-beta", h.cfg.beta_t, "Transition scale, meters");
  s->add_option("--radius", h.cfg.candidate_radius, "Candidate radius, meters");
  s->add_option("--max-candidates", h.cfg.max_candidates, "Candidates per point");
}

struct MatchArgs {
  NetArgs net;
  HmmArgs hmm;
  std::string traj;
  std::string out;
  double interval = 10.0;
};

void add_match(CLI::App& app, MatchArgs& a) {
  auto* s = app.add_subcommand("match", "Map-match raw trajectories with an HMM");
  add_net_options(s, a.net);
  add_hmm_options(s, a.hmm);
  s->add_option("--traj", a.traj, "Raw trajectory file");
  s->add_option("--out", a.out, "Matched output file");
  s->add_option("--interval", a.interval, "Nominal sample interval recorded with the output");
}

cli::RunManifest run_match(const CLI::App& sub, MatchArgs& a) {
  const auto net = load_net(sub, a.net);
  require(sub, {"traj", "out"});
  const auto trs = traj::load_raw_trajectories(a.traj);
  mapmatch::Router router(net);
  std::vector<traj::MatchedTrajectory> out;
  for (const auto& t : trs) {
    t.validate();
    out.push_back(mapmatch::to_matched(t, mapmatch::hmm_match(t, net, a.hmm.cfg, &router), a.interval));
  }
  traj::save_matched_trajectories(a.out, out, net);
  return {"match", resolved_options(sub), {a.net.segments, a.net.edges, a.traj}, {a.out}};
}

// --- train --------------------------------------------------------------

struct ModelArgs {
  model::ModelConfig cfg;
  std::string ablate = "none";
  bool no_mask_at_inference = false;
};

void add_model_options(CLI::App* s, ModelArgs& m) {
  s->add_option("--d", m.cfg.d, "Hidden width");
  s->add_option("--M", m.cfg.M, "GAT layers in the road-network encoder");
  s->add_option("--N", m.cfg.N, "GPSFormer blocks");
  s->add_option("--P", m.cfg.P, "GAT layers per refinement layer");
  s->add_option("--heads", m.cfg.heads, "Attention heads");
  s->add_option("--ffn-mult", m.cfg.ffn_mult, "Feed-forward width multiple");
  s->add_option("--delta", m.cfg.delta, "Sub-graph radius, meters");
  s->add_option("--gamma", m.cfg.gamma, "Sub-graph influence scale, meters");
  s->add_option("--beta", m.cfg.beta, "Constraint mask scale, meters");
  s->add_option("--max-gps-error", m.cfg.max_gps_error, "Constraint mask radius, meters");
  s->add_option("--interval", m.cfg.interval, "Target sample interval, seconds");
  s->add_option("--ablate", m.ablate, "Comma-separated grl|gf|gn|gat|gcl, or none");
  s->add_flag("--no-mask-at-inference", m.no_mask_at_inference, "Decode without the constraint mask at inference");
}

struct TrainArgs {
  NetArgs net;
  ModelArgs model;
  train::TrainConfig tc;
  std::string raw;
  std::string truth;
  std::size_t stride = 8;
  std::uint64_t jitter_seed = 0;
  bool jitter = false;
  std::size_t holdout = 0;
  std::string out;
  std::string log;
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto* s = app.add_subcommand("train", "Train a recovery model");
  add_net_options(s, a.net);
  add_model_options(s, a.model);
  s->add_option("--raw", a.raw, "Dense raw trajectory file");
  s->add_option("--truth", a.truth, "Dense ground-truth matched file");
  s->add_option("--stride", a.stride, "Downsampling stride for the low-sample input");
  s->add_flag("--jitter", a.jitter, "Jitter interior downsampling indices by one");
  s->add_option("--jitter-seed", a.jitter_seed, "Seed of the downsampling jitter");
  s->add_option("--holdout", a.holdout, "Trajectories (highest ids) held out for validation");
  s->add_option("--epochs", a.tc.epochs, "Training epochs");
  s->add_option("--batch-size", a.tc.batch_size, "Batch size");
  s->add_option("--lr", a.tc.lr, "Adam learning rate");
  s->add_option("--clip", a.tc.clip_norm, "Gradient clipping norm");
  s->add_option("--lambda1", a.tc.weights.lambda1, "Weight of the moving-ratio loss");
  s->add_option("--lambda2", a.tc.weights.lambda2, "Weight of the graph classification loss");
  s->add_option("--seed", a.tc.seed, "Seed for initialization and shuffling");
  s->add_option("--out", a.out, "Checkpoint path");
  s->add_option("--log", a.log, "Per-epoch log path");
}

model::ModelConfig resolve_model(const ModelArgs& m, std::uint64_t seed) {
  model::ModelConfig c = m.cfg;
  c.ablation = model::Ablation::parse(m.ablate);
  c.mask_at_inference = !m.no_mask_at_inference;
  c.seed = seed;
  c.validate();
  return c;
}

cli::RunManifest run_train(const CLI::App& sub, TrainArgs& a) {
  const auto net = load_net(sub, a.net);
  require(sub, {"raw", "truth", "out"});
  const model::ModelConfig mc = resolve_model(a.model, a.tc.seed);
  train::TrainConfig tc = a.tc;
  if (mc.ablation.no_gcl) tc.weights.lambda2 = 0.0;
  const auto raws = traj::load_raw_trajectories(a.raw);
  const auto truths = traj::load_matched_trajectories(a.truth, net);
  std::optional<std::uint64_t> js;
  if (a.jitter) js = a.jitter_seed;
  auto examples = train::make_examples(truths, raws, a.stride, js);
  if (a.holdout >= examples.size()) throw ConfigError("holdout leaves no training data");
  std::vector<train::Example> val(examples.end() - static_cast<std::ptrdiff_t>(a.holdout), examples.end());
  examples.resize(examples.size() - a.holdout);
  const auto train_samples = train::prepare_samples(net, mc, examples);
  const auto val_samples = train::prepare_samples(net, mc, val);
  for (const auto& s : train_samples)
    for (const auto& w : s.mask.warnings) cli::log(LogLevel::warn, "trajectory " + std::to_string(s.id) + ": " + w);

  model::RnTrajRec m(net, mc);
  std::ofstream logf;
  std::ostream* log = nullptr;
  if (!a.log.empty()) {
    logf.open(a.log, std::ios::binary);
    if (!logf) throw FormatError("cannot write " + a.log);
    log = &logf;
  }
  const auto res = train::train_model(m, train_samples, val_samples, tc, log, [](const train::EpochLog& e) {
    cli::log(LogLevel::info, "epoch " + train::format_epoch(e));
    if (e.skipped_id + e.skipped_enc > 0) {
      cli::log(LogLevel::debug, "skipped " + std::to_string(e.skipped_id) + " id targets, " +
                                    std::to_string(e.skipped_enc) + " encoder targets");
    }
  });
  logf.close();
  m.save(a.out, {{"best_epoch", std::to_string(res.best_epoch)},
                 {"lambda1", nc::hexfloat(tc.weights.lambda1)},
                 {"lambda2", nc::hexfloat(tc.weights.lambda2)}});
  cli::log(LogLevel::info, "best epoch " + std::to_string(res.best_epoch));
  auto opts = resolved_options(sub);
  opts["lambda2"] = std::to_string(tc.weights.lambda2);
  cli::RunManifest man{"train", opts, {a.net.segments, a.net.edges, a.raw, a.truth}, {a.out}};
  if (!a.log.empty()) man.outputs.push_back(a.log);
  return man;
}

// --- recover / baseline -------------------------------------------------

struct RecoverArgs {
  NetArgs net;
  std::string checkpoint;
  std::string traj;
  std::string out;
  std::size_t stride = 1;
  std::size_t batch_size = 64;
};

void add_recover(CLI::App& app, RecoverArgs& a) {
  auto* s = app.add_subcommand("recover", "Recover high-sample matched trajectories with a trained model");
  add_net_options(s, a.net);
  s->add_option("--checkpoint", a.checkpoint, "Checkpoint from train");
  s->add_option("--traj", a.traj, "Low-sample raw trajectory file");
  s->add_option("--stride", a.stride, "Downsample the input first by this stride (1 keeps it)");
  s->add_option("--batch-size", a.batch_size, "Inference batch size");
  s->add_option("--out", a.out, "Predicted matched file");
}

std::vector<traj::RawTrajectory> load_low(const std::string& path, std::size_t stride) {
  auto trs = traj::load_raw_trajectories(path);
  if (stride > 1)
    for (auto& t : trs) t = traj::downsample(t, stride).trajectory;
  return trs;
}

cli::RunManifest run_recover(const CLI::App& sub, RecoverArgs& a) {
  const auto net = load_net(sub, a.net);
  require(sub, {"checkpoint", "traj", "out"});
  const auto m = model::RnTrajRec::load(a.checkpoint, net);
  std::vector<model::Sample> samples;
  for (const auto& t : load_low(a.traj, a.stride)) samples.push_back(model::prepare_sample(net, m.config(), t));
  std::vector<traj::MatchedTrajectory> out;
  for (const auto& idx : train::make_batches(samples, a.batch_size, nullptr)) {
    for (auto& r : m.recover(train::gather(samples, idx))) out.push_back(std::move(r));
  }
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.id < y.id; });
  traj::save_matched_trajectories(a.out, out, net);
  return {"recover", resolved_options(sub), {a.net.segments, a.net.edges, a.checkpoint, a.traj}, {a.out}};
}

struct BaselineArgs {
  NetArgs net;
  HmmArgs hmm;
  std::string traj;
  std::string out;
  std::size_t stride = 1;
  double interval = 10.0;
};

void add_baseline(CLI::App& app, BaselineArgs& a) {
  auto* s = app.add_subcommand("baseline-linear-hmm", "Linear interpolation followed by HMM map matching");
  add_net_options(s, a.net);
  add_hmm_options(s, a.hmm);
  s->add_option("--traj", a.traj, "Low-sample raw trajectory file");
  s->add_option("--stride", a.stride, "Downsample the input first by this stride (1 keeps it)");
  s->add_option("--interval", a.interval, "Target sample interval, seconds");
  s->add_option("--out", a.out, "Predicted matched file");
}

cli::RunManifest run_baseline(const CLI::App& sub, BaselineArgs& a) {
  const auto net = load_net(sub, a.net);
  require(sub, {"traj", "out"});
  mapmatch::Router router(net);
  std::vector<traj::MatchedTrajectory> out;
  for (const auto& t : load_low(a.traj, a.stride)) {
    t.validate();
    out.push_back(mapmatch::linear_hmm(t, net, a.interval, a.hmm.cfg, router));
  }
  traj::save_matched_trajectories(a.out, out, net);
  return {"baseline-linear-hmm", resolved_options(sub), {a.net.segments, a.net.edges, a.traj}, {a.out}};
}

// --- eval / plotdata ----------------------------------------------------

struct EvalArgs {
  NetArgs net;
  std::string pred;
  std::string truth;
  std::string labels;
  std::string out_prefix;
};

void add_eval(CLI::App& app, EvalArgs& a) {
  auto* s = app.add_subcommand("eval", "Score predicted against ground-truth matched trajectories");
  add_net_options(s, a.net);
  s->add_option("--pred", a.pred, "Predicted matched file");
  s->add_option("--truth", a.truth, "Ground-truth matched file");
  s->add_option("--labels", a.labels, "Per-segment elevated labels (enables SR%k)");
  s->add_option("--out-prefix", a.out_prefix, "Writes <prefix>.txt, <prefix>.flat and <prefix>.csv");
}

cli::RunManifest run_eval(const CLI::App& sub, EvalArgs& a) {
  const auto net = load_net(sub, a.net);
  require(sub, {"pred", "truth", "out-prefix"});
  const auto pred = traj::load_matched_trajectories(a.pred, net);
  const auto all_truth = traj::load_matched_trajectories(a.truth, net);
  std::set<long long> ids;
  for (const auto& p : pred) ids.insert(p.id);
  std::vector<traj::MatchedTrajectory> truth;
  for (const auto& t : all_truth)
    if (ids.count(t.id)) truth.push_back(t);
  if (truth.size() != pred.size()) throw ContractError("eval: some predictions have no ground truth");
  std::vector<bool> labels;
  if (!a.labels.empty()) {
    std::ifstream is(a.labels);
    if (!is) throw FormatError("cannot open " + a.labels);
    labels = synthgen::read_labels(is, net);
  }
  const auto rep = eval::evaluate(truth, pred, net, a.labels.empty() ? nullptr : &labels);
  const std::string txt = a.out_prefix + ".txt", flat = a.out_prefix + ".flat", csv = a.out_prefix + ".csv";
  write_text(txt, eval::report_text(rep));
  write_text(flat, eval::report_flat(rep));
  write_text(csv, eval::report_csv(rep));
  std::cout << eval::report_text(rep);
  cli::RunManifest man{"eval", resolved_options(sub), {a.net.segments, a.net.edges, a.pred, a.truth}, {txt, flat, csv}};
  if (!a.labels.empty()) man.inputs.push_back(a.labels);
  return man;
}

struct PlotArgs {
  std::string report;
  std::string out;
};

void add_plot(CLI::App& app, PlotArgs& a) {
  auto* s = app.add_subcommand("plotdata", "Per-trajectory CSV with ranks and empirical CDFs for plotting");
  s->add_option("--report", a.report, "Per-trajectory CSV written by eval");
  s->add_option("--out", a.out, "Output CSV");
}

// Adds, for accuracy and F1, the rank and empirical CDF of every row.
cli::RunManifest run_plot(const CLI::App& sub, PlotArgs& a) {
  require(sub, {"report", "out"});
  std::ifstream is(a.report);
  if (!is) throw FormatError("cannot open " + a.report);
  std::string header, line;
  if (!std::getline(is, header) || header.rfind("traj_id,", 0) != 0) throw FormatError(a.report + ": not an eval CSV");
  struct Row {
    std::string id;
    double f1 = 0, acc = 0, mae = 0;
  };
  std::vector<Row> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) f.push_back(c);
    if (f.size() < 7) throw FormatError(a.report + ": short row '" + line + "'");
    rows.push_back({f[0], std::stod(f[3]), std::stod(f[4]), std::stod(f[5])});
  }
  const double n = static_cast<double>(rows.size());
  auto cdf = [&](auto key) {
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(key(r));
    std::vector<double> out;
    for (double x : v) out.push_back(static_cast<double>(std::count_if(v.begin(), v.end(), [&](double y) { return y <= x; })) / n);
    return out;
  };
  const auto f1_cdf = cdf([](const Row& r) { return r.f1; });
  const auto acc_cdf = cdf([](const Row& r) { return r.acc; });
  const auto mae_cdf = cdf([](const Row& r) { return r.mae; });
  std::string out = "traj_id,f1,f1_cdf,accuracy,accuracy_cdf,mae,mae_cdf\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out += rows[i].id + "," + eval::format_number(rows[i].f1) + "," + eval::format_number(f1_cdf[i]) + "," +
           eval::format_number(rows[i].acc) + "," + eval::format_number(acc_cdf[i]) + "," +
           eval::format_number(rows[i].mae) + "," + eval::format_number(mae_cdf[i]) + "\n";
  }
  write_text(a.out, out);
  return {"plotdata", resolved_options(sub), {a.report}, {a.out}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Road-network-aware trajectory recovery"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  std::string config;
  std::string manifest;

  GenArgs gen;
  MatchArgs match;
  TrainArgs trn;
  RecoverArgs rec;
  BaselineArgs base;
  EvalArgs ev;
  PlotArgs plot;
  add_gen(app, gen);
  add_match(app, match);
  add_train(app, trn);
  add_recover(app, rec);
  add_baseline(app, base);
  add_eval(app, ev);
  add_plot(app, plot);
  for (CLI::App* s : app.get_subcommands({})) {
    s->add_option("--config", config, "key=value file; command-line flags take precedence");
    s->add_option("--manifest", manifest, "Run manifest path (default: alongside the main output)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    if (!config.empty()) apply_config(*sub, config);
    cli::RunManifest man;
    const std::string name = sub->get_name();
    if (name == "gen") man = run_gen(*sub, gen);
    else if (name == "match") man = run_match(*sub, match);
    else if (name == "train") man = run_train(*sub, trn);
    else if (name == "recover") man = run_recover(*sub, rec);
    else if (name == "baseline-linear-hmm") man = run_baseline(*sub, base);
    else if (name == "eval") man = run_eval(*sub, ev);
    else man = run_plot(*sub, plot);
    if (!config.empty()) man.inputs.push_back(config);
    const std::string mpath = !manifest.empty() ? manifest : man.outputs.front() + ".manifest";
    man.write(mpath);
    return kExitOk;
  } catch (const UsageError& e) {
    cli::log(LogLevel::error, e.what());
    return kExitUsage;
  } catch (const ConfigError& e) {
    cli::log(LogLevel::error, e.what());
    return kExitUsage;
  } catch (const CLI::ParseError& e) {
    cli::log(LogLevel::error, std::string("bad value in config: ") + e.what());
    return kExitUsage;
  } catch (const NumericError& e) {
    cli::log(LogLevel::error, e.what());
    return kExitNumeric;
  } catch (const Error& e) {
    cli::log(LogLevel::error, e.what());
    return kExitData;
  } catch (const std::exception& e) {
    cli::log(LogLevel::error, e.what());
    return kExitData;
  }
}
