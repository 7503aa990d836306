#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "stvo/stvo.hpp"

namespace fs = std::filesystem;
using namespace stvo;

namespace {

enum ExitCode { kOk = 0, kOther = 1, kParse = 2, kIo = 3, kDivergence = 4 };

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + p.string() + "'");
  out << s;
  if (!out) throw IoError("write failed for '" + p.string() + "'");
}

/// Every option of `cmd` as key=value, sorted by key; `config` is omitted.
std::string resolved_config(const CLI::App& cmd) {
  std::map<std::string, std::string> kv;
  for (const CLI::Option* o : cmd.get_options()) {
    if (o->get_lnames().empty()) continue;
    const std::string& name = o->get_lnames().front();
    if (name == "help" || name == "config") continue;
    std::string v;
    if (o->count() > 0) {
      for (const auto& r : o->results()) v += (v.empty() ? "" : " ") + r;
    } else {
      v = o->get_default_str();
    }
    kv[name] = v;
  }
  std::string out = "command=" + cmd.get_name() + "\n";
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

/**
 * Appends `--key=value` for every entry of the config file named by
 * `--config` whose key was not given on the command line. Multi-valued
 * entries are whitespace separated.
 */
std::vector<std::string> merge_config(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  const auto kv = parse_key_values(in);
  std::vector<std::string> extra;
  for (const auto& [key, value] : kv) {
    if (key == "command" || key == "config") continue;
    const std::string flag = "--" + key;
    const bool given = std::any_of(args.begin(), args.end(), [&](const std::string& a) {
      return a == flag || a.rfind(flag + "=", 0) == 0;
    });
    if (given) continue;
    std::istringstream vs(value);
    std::string item;
    while (vs >> item) extra.push_back(flag + "=" + item);
  }
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

std::vector<LrStage> parse_schedule(const std::string& s) {
  std::vector<LrStage> out;
  if (s.empty()) return out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ParseError("lr-schedule: expected start:rate, got '" + item + "'");
    try {
      out.push_back({std::stoi(item.substr(0, colon)), std::stod(item.substr(colon + 1))});
    } catch (const std::exception&) {
      throw ParseError("lr-schedule: bad entry '" + item + "'");
    }
  }
  return out;
}

struct Common {
  std::uint64_t seed = 1;
  std::string out;
  std::string config;
};

void add_common(CLI::App* cmd, Common& c, bool out_required) {
  cmd->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  auto* o = cmd->add_option("--out", c.out, "Output directory");
  if (out_required) o->required();
  cmd->add_option("--config", c.config, "key=value file with option defaults");
}

struct LossFlags {
  double lambda_ir = 1.0, lambda_fr = 0.1, lambda_ds = 10.0;
  bool no_feature_loss = false;
  std::string extractor = "gradient";
  std::string mode = "stereo";
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::string schedule;

  LossWeights weights() const {
    LossWeights w{lambda_ir, no_feature_loss ? 0.0 : lambda_fr, lambda_ds};
    w.validate();
    return w;
  }
  ViewPairs pairs() const {
    if (mode == "stereo") return {};
    if (mode == "monocular") return ViewPairs::monocular();
    throw ParseError("--mode must be stereo or monocular");
  }
  AdamSettings adam() const { return {lr, beta1, beta2, eps}; }
};

const CLI::IsMember kExtractorNames({"identity", "gradient", "random_conv"});

void add_loss_flags(CLI::App* cmd, LossFlags& f) {
  cmd->add_option("--lambda-ir", f.lambda_ir, "Image reconstruction weight")->capture_default_str();
  cmd->add_option("--lambda-fr", f.lambda_fr, "Feature reconstruction weight")->capture_default_str();
  cmd->add_option("--lambda-ds", f.lambda_ds, "Smoothness weight")->capture_default_str();
  cmd->add_flag("--no-feature-loss", f.no_feature_loss, "Force the feature weight to zero")
      ->capture_default_str();
  cmd->add_option("--extractor", f.extractor, "Feature extractor")
      ->check(kExtractorNames)
      ->capture_default_str();
  cmd->add_option("--mode", f.mode, "Views used by the loss")
      ->check(CLI::IsMember({"stereo", "monocular"}))
      ->capture_default_str();
  cmd->add_option("--lr", f.lr, "Adam learning rate")->capture_default_str();
  cmd->add_option("--beta1", f.beta1, "Adam beta1")->capture_default_str();
  cmd->add_option("--beta2", f.beta2, "Adam beta2")->capture_default_str();
  cmd->add_option("--adam-eps", f.eps, "Adam epsilon")->capture_default_str();
  cmd->add_option("--lr-schedule", f.schedule, "Manual schedule start:rate,start:rate,...")
      ->capture_default_str();
}

void prepare_out(const Common& c, const CLI::App& cmd) {
  if (c.out.empty()) return;
  fs::create_directories(c.out);
  write_text(fs::path(c.out) / "config.txt", resolved_config(cmd));
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  Common c;
  std::string preset = "plane";
  int frames = 6;
};

int run_synth(const SynthArgs& a, const CLI::App& cmd) {
  prepare_out(a.c, cmd);
  StereoSequence seq = render_sequence(synthetic_preset(a.preset, a.frames, a.c.seed));
  seq.manifest["preset"] = a.preset;
  write_sequence(a.c.out, seq);
  std::cout << "frames=" << seq.frames.size() << "\npreset=" << a.preset << "\nseed=" << a.c.seed << '\n';
  return kOk;
}

// ---------------------------------------------------------------- optimize

struct OptimizeArgs {
  Common c;
  LossFlags loss;
  std::string sequence;
  int iterations = 200;
  double depth_guess = 10.0;
  double cap = 80.0;
};

/// Temporal image loss with depth and translation co-scaled by s.
double coscaled_temporal_loss(const TrainingInstance& inst, const ImageGrid& inverse_depth,
                              const Twist& twist, double s) {
  ImageGrid scaled = depth_from_inverse(inverse_depth);
  for (double& d : scaled.values()) d = 1.0 / (s * d) - kInverseDepthOffset;
  const Twist t(twist.rotation(), s * twist.translation());
  return total_loss(inst, scaled, t, nullptr, LossWeights{1.0, 0.0, 0.0}, ViewPairs::monocular(), false)
      .breakdown.l_ir;
}

int run_optimize(const OptimizeArgs& a, const CLI::App& cmd) {
  prepare_out(a.c, cmd);
  const StereoSequence seq = load_sequence(a.sequence);
  std::vector<std::string> warnings;
  const auto instances = assemble_instances(seq, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
  if (instances.empty()) throw DegenerateInputError("optimize: no usable frame pairs");

  const LossWeights w = a.loss.weights();
  const FeatureExtractor ex = FeatureExtractor::make(parse_feature_kind(a.loss.extractor),
                                                     instances.front().reference.channels(), a.c.seed);
  DirectOptions opt;
  opt.iterations = a.iterations;
  opt.adam = a.loss.adam();
  opt.schedule = parse_schedule(a.loss.schedule);
  opt.pairs = a.loss.pairs();

  const fs::path out = a.c.out;
  if (!a.c.out.empty()) fs::create_directories(out / "depth");
  std::ostringstream log, summary;
  log << "instance,iteration,l_ir,l_fr,l_ds,total\n";
  std::vector<SE3Transform> relatives;
  double wall = 0.0;
  for (const auto& inst : instances) {
    const auto& r0 = inst.reference;
    const SolveReport rep = optimize_direct(inst, constant_inverse_depth(r0.height(), r0.width(), a.depth_guess),
                                            Twist(), w, ex, opt);
    wall += rep.wall_seconds;
    for (std::size_t i = 0; i < rep.history.size(); ++i) {
      const auto& b = rep.history[i];
      log << inst.reference_frame << ',' << i << ',' << fmt(b.l_ir) << ',' << fmt(b.l_fr) << ','
          << fmt(b.l_ds) << ',' << fmt(b.total) << '\n';
    }
    const ImageGrid depth = depth_from_inverse(rep.inverse_depth);
    if (!a.c.out.empty()) save_pfm(out / "depth" / (frame_name(inst.reference_frame) + ".pfm"), depth);
    relatives.push_back(twist_to_transform(rep.twist));

    summary << "[frame " << inst.reference_frame << "]\n";
    summary << "final_total=" << fmt(rep.history.back().total) << "\nconverged=" << rep.converged << '\n';
    const Vec6 tv = rep.twist.vector();
    summary << "twist=" << fmt(tv[0]);
    for (int i = 1; i < 6; ++i) summary << ' ' << fmt(tv[i]);
    summary << '\n';
    if (inst.gt_depth) {
      const DepthMetrics m = depth_metrics(depth, *inst.gt_depth, a.cap);
      summary << "abs_rel=" << fmt(m.abs_rel) << "\nrmse=" << fmt(m.rmse) << '\n';
    }
    if (!opt.pairs.stereo) {
      // Monocular runs cannot observe scale: the loss is flat under co-scaling.
      const double l1 = coscaled_temporal_loss(inst, rep.inverse_depth, rep.twist, 1.0);
      summary << "scale_probe_l_ir_s0.5=" << fmt(coscaled_temporal_loss(inst, rep.inverse_depth, rep.twist, 0.5))
              << "\nscale_probe_l_ir_s1=" << fmt(l1)
              << "\nscale_probe_l_ir_s2=" << fmt(coscaled_temporal_loss(inst, rep.inverse_depth, rep.twist, 2.0))
              << '\n';
    }
  }
  const Trajectory traj = integrate_trajectory(relatives, SE3Transform::identity(), seq.frames.front().index);
  if (!a.c.out.empty()) {
    write_text(out / "log.csv", log.str());
    write_text(out / "summary.txt", summary.str());
    save_kitti_poses(out / "poses.txt", traj);
  }
  std::cout << summary.str();
  std::cerr << "wall_seconds=" << wall << '\n';
  return kOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  Common c;
  LossFlags loss;
  std::vector<std::string> data, heldout;
  int sequences = 10, heldout_sequences = 2, frames = 6, epochs = 30;
  std::string resume;
  bool paired = false;
};

std::vector<TrainingInstance> load_instances(const std::vector<std::string>& dirs) {
  std::vector<TrainingInstance> out;
  for (const auto& d : dirs) {
    std::vector<std::string> warnings;
    auto part = assemble_instances(load_sequence(d), &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << d << ": " << w << '\n';
    for (auto& i : part) out.push_back(std::move(i));
  }
  return out;
}

double mean_abs_rel(const PredictorEvaluation& ev, const std::vector<TrainingInstance>& set) {
  double s = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (!set[i].gt_depth) continue;
    s += depth_metrics(ev.depths[i], *set[i].gt_depth, 80.0).abs_rel;
    ++n;
  }
  return n ? s / n : std::numeric_limits<double>::quiet_NaN();
}

struct TrainOutcome {
  double initial_heldout = 0.0, final_heldout = 0.0, median_ratio = 0.0, abs_rel = 0.0;
};

TrainOutcome train_once(const TrainArgs& a, const std::vector<TrainingInstance>& train,
                        const std::vector<TrainingInstance>& held, const LossWeights& w,
                        const fs::path& out) {
  TrainOptions opt;
  opt.weights = w;
  opt.extractor = parse_feature_kind(a.loss.extractor);
  opt.feature_seed = a.c.seed;
  opt.pairs = a.loss.pairs();
  opt.schedule = parse_schedule(a.loss.schedule);
  opt.epochs = 1;

  PredictorState state;
  if (!a.resume.empty()) {
    std::ifstream in(a.resume);
    if (!in) throw IoError("cannot open checkpoint '" + a.resume + "'");
    state = load_checkpoint(in);
  } else {
    state = PredictorState::fresh(a.c.seed, a.loss.adam());
  }

  std::ostringstream progress, curve;
  opt.progress = &progress;
  progress << std::setprecision(17);
  curve << "epoch,train_total,heldout_total\n";
  TrainOutcome res;
  res.initial_heldout = evaluate_predictors(held, state, opt).mean_total;
  curve << state.epoch << ",," << fmt(res.initial_heldout) << '\n';
  double wall = 0.0;
  for (int e = 0; e < a.epochs; ++e) {
    const TrainReport rep = train_predictors(train, state, opt);
    wall += rep.wall_seconds;
    const double h = evaluate_predictors(held, state, opt).mean_total;
    curve << state.epoch << ',' << fmt(rep.epoch_loss.front()) << ',' << fmt(h) << '\n';
  }
  const PredictorEvaluation ev = evaluate_predictors(held, state, opt);
  res.final_heldout = ev.mean_total;
  res.median_ratio = ev.median_depth_ratio;
  res.abs_rel = mean_abs_rel(ev, held);

  fs::create_directories(out);
  write_text(out / "progress.csv", "iteration,l_ir,l_fr,l_ds,total\n" + progress.str());
  write_text(out / "loss_curve.csv", curve.str());
  std::ostringstream ck;
  save_checkpoint(ck, state);
  write_text(out / "checkpoint.txt", ck.str());
  std::ostringstream sum;
  sum << "epochs_total=" << state.epoch << "\ninitial_heldout_total=" << fmt(res.initial_heldout)
      << "\nfinal_heldout_total=" << fmt(res.final_heldout)
      << "\nheldout_reduction=" << fmt(1.0 - res.final_heldout / res.initial_heldout)
      << "\nmedian_depth_ratio=" << fmt(res.median_ratio) << "\nheldout_abs_rel=" << fmt(res.abs_rel) << '\n';
  write_text(out / "summary.txt", sum.str());
  std::cout << sum.str();
  std::cerr << "wall_seconds=" << wall << '\n';
  return res;
}

int run_train(const TrainArgs& a, const CLI::App& cmd) {
  prepare_out(a.c, cmd);
  auto train = a.data.empty() ? synthetic_dataset(a.c.seed * 1000, a.sequences, a.frames) : load_instances(a.data);
  auto held = a.heldout.empty() ? synthetic_dataset(a.c.seed * 1000 + 500, a.heldout_sequences, a.frames)
                                : load_instances(a.heldout);
  if (train.empty() || held.empty()) throw DegenerateInputError("train: empty training or held-out set");
  const fs::path out = a.c.out;
  const LossWeights w = a.loss.weights();
  if (!a.paired) {
    train_once(a, train, held, w, out);
    return kOk;
  }
  LossWeights with = w, without = w;
  if (with.lambda_fr == 0.0) with.lambda_fr = 0.1;
  without.lambda_fr = 0.0;
  std::cout << "[feature_on]\n";
  const TrainOutcome on = train_once(a, train, held, with, out / "feature_on");
  std::cout << "[feature_off]\n";
  const TrainOutcome off = train_once(a, train, held, without, out / "feature_off");
  std::ostringstream cmp;
  cmp << "run,lambda_fr,initial_heldout_total,final_heldout_total,median_depth_ratio,heldout_abs_rel\n"
      << "feature_on," << fmt(with.lambda_fr) << ',' << fmt(on.initial_heldout) << ',' << fmt(on.final_heldout)
      << ',' << fmt(on.median_ratio) << ',' << fmt(on.abs_rel) << '\n'
      << "feature_off,0," << fmt(off.initial_heldout) << ',' << fmt(off.final_heldout) << ','
      << fmt(off.median_ratio) << ',' << fmt(off.abs_rel) << '\n';
  write_text(out / "comparison.csv", cmp.str());
  std::cout << cmp.str();
  return kOk;
}

// ---------------------------------------------------------------- eval-depth

struct EvalDepthArgs {
  Common c;
  std::string pred, gt, mask;
  std::vector<double> caps{50.0, 80.0};
};

DepthMetrics mean_metrics(const std::vector<DepthMetrics>& ms) {
  DepthMetrics m;
  for (const auto& x : ms) {
    m.abs_rel += x.abs_rel;
    m.sq_rel += x.sq_rel;
    m.rmse += x.rmse;
    m.rmse_log += x.rmse_log;
    m.delta1 += x.delta1;
    m.delta2 += x.delta2;
    m.delta3 += x.delta3;
    m.valid_count += x.valid_count;
  }
  const double n = static_cast<double>(ms.size());
  m.abs_rel /= n; m.sq_rel /= n; m.rmse /= n; m.rmse_log /= n;
  m.delta1 /= n; m.delta2 /= n; m.delta3 /= n;
  m.cap = ms.front().cap;
  return m;
}

int run_eval_depth(const EvalDepthArgs& a, const CLI::App& cmd) {
  prepare_out(a.c, cmd);
  std::vector<std::pair<fs::path, fs::path>> pairs;
  if (fs::is_directory(a.pred)) {
    std::vector<fs::path> names;
    for (const auto& e : fs::directory_iterator(a.pred))
      if (e.path().extension() == ".pfm" && fs::exists(fs::path(a.gt) / e.path().filename()))
        names.push_back(e.path().filename());
    std::sort(names.begin(), names.end());
    for (const auto& n : names) pairs.emplace_back(fs::path(a.pred) / n, fs::path(a.gt) / n);
  } else {
    pairs.emplace_back(a.pred, a.gt);
  }
  if (pairs.empty()) throw IoError("eval-depth: no matching PFM files");
  std::optional<ValidityMask> mask;
  if (!a.mask.empty()) {
    const ImageGrid m = load_image(a.mask);
    mask = ValidityMask(m.height(), m.width(), false);
    for (int y = 0; y < m.height(); ++y)
      for (int x = 0; x < m.width(); ++x) mask->set(y, x, m(y, x, 0) > 0.0);
  }
  std::vector<DepthMetrics> rows;
  std::string kv;
  for (double cap : a.caps) {
    std::vector<DepthMetrics> per;
    for (const auto& [p, g] : pairs) per.push_back(depth_metrics(load_pfm(p), load_pfm(g), cap, mask ? &*mask : nullptr));
    rows.push_back(mean_metrics(per));
    kv += "[cap " + fmt(cap) + "]\nimages=" + std::to_string(per.size()) + "\n" + format_key_values(rows.back());
  }
  std::cout << format_table(rows);
  if (!a.c.out.empty()) {
    write_text(fs::path(a.c.out) / "metrics.txt", kv);
    write_text(fs::path(a.c.out) / "table.txt", format_table(rows));
  }
  return kOk;
}

// ---------------------------------------------------------------- eval-odom

struct EvalOdomArgs {
  Common c;
  std::string pred, gt;
  int stride = kDriftStartStride;
  int first = 0, last = -1;
  bool align = false;
};

int run_eval_odom(const EvalOdomArgs& a, const CLI::App& cmd) {
  prepare_out(a.c, cmd);
  Trajectory pred = filter_frames(load_kitti_poses(a.pred), a.first, a.last);
  const Trajectory gt = filter_frames(load_kitti_poses(a.gt), a.first, a.last);
  std::string kv;
  if (a.align) {
    const ScaleAlignment s = align_scale(pred, gt);
    pred = s.aligned;
    kv += "scale=" + fmt(s.scale) + "\n";
  }
  const OdomMetrics m = odometry_drift(pred, gt, a.stride);
  kv += format_key_values(m);
  std::cout << format_table(m) << kv;
  if (!a.c.out.empty()) {
    write_text(fs::path(a.c.out) / "metrics.txt", kv);
    write_text(fs::path(a.c.out) / "table.txt", format_table(m));
  }
  return kOk;
}

// ---------------------------------------------------------------- match-compare

struct MatchArgs {
  Common c;
  std::string sequence, preset = "textureless-band", extractor = "gradient";
  int frame = 0, row = -1, col = -1, dmin = 0, dmax = 12;
};

int run_match(const MatchArgs& a, const CLI::App& cmd) {
  prepare_out(a.c, cmd);
  const StereoSequence seq =
      a.sequence.empty() ? render_sequence(synthetic_preset(a.preset, a.frame + 1, a.c.seed)) : load_sequence(a.sequence);
  if (a.frame < 0 || a.frame >= static_cast<int>(seq.frames.size()))
    throw DomainError("match-compare: frame out of range");
  const StereoFrame& f = seq.frames[static_cast<std::size_t>(a.frame)];
  if (!f.right) throw IoError("match-compare: frame has no right image");
  const int row = a.row < 0 ? f.left.height() / 2 : a.row;
  const int col = a.col < 0 ? f.left.width() / 2 : a.col;
  const auto photo = matching_cost_profile(f.left, *f.right, FeatureExtractor::identity(), row, col, a.dmin, a.dmax);
  const auto feat = matching_cost_profile(
      f.left, *f.right, FeatureExtractor::make(parse_feature_kind(a.extractor), f.left.channels(), a.c.seed), row, col,
      a.dmin, a.dmax);
  std::ostringstream csv;
  csv << "disparity,photometric,feature\n";
  for (std::size_t i = 0; i < photo.disparities.size(); ++i)
    csv << photo.disparities[i] << ',' << fmt(photo.costs[i]) << ',' << fmt(feat.costs[i]) << '\n';
  std::ostringstream sum;
  sum << "row=" << row << "\ncol=" << col << "\nphotometric_argmin=" << photo.disparities[photo.argmin()]
      << "\nphotometric_flatness=" << fmt(photo.flatness())
      << "\nfeature_argmin=" << feat.disparities[feat.argmin()] << "\nfeature_flatness=" << fmt(feat.flatness())
      << "\nfeature_unique_minimum=" << feat.unique_minimum(1e-6) << "\ntruncated=" << photo.truncated << '\n';
  std::cout << sum.str();
  if (!a.c.out.empty()) {
    write_text(fs::path(a.c.out) / "cost_curves.csv", csv.str());
    write_text(fs::path(a.c.out) / "summary.txt", sum.str());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stereo-temporal depth and odometry toolkit"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Render a synthetic stereo sequence");
  add_common(c_synth, synth.c, true);
  c_synth->add_option("--preset", synth.preset, "plane | slanted | smooth | textureless-band")->capture_default_str();
  c_synth->add_option("--frames", synth.frames, "Number of frames")->capture_default_str();

  OptimizeArgs optz;
  auto* c_opt = app.add_subcommand("optimize", "Direct depth and pose optimization per frame pair");
  add_common(c_opt, optz.c, false);
  add_loss_flags(c_opt, optz.loss);
  c_opt->add_option("--sequence", optz.sequence, "Sequence directory")->required();
  c_opt->add_option("--iterations", optz.iterations, "Iterations per instance")->capture_default_str();
  c_opt->add_option("--depth-guess", optz.depth_guess, "Initial constant depth, meters")->capture_default_str();
  c_opt->add_option("--cap", optz.cap, "Depth cap for the ground-truth report")->capture_default_str();

  TrainArgs tr;
  tr.loss.lr = kPredictorLearningRate;
  auto* c_train = app.add_subcommand("train", "Train the toy depth and pose networks");
  add_common(c_train, tr.c, true);
  add_loss_flags(c_train, tr.loss);
  c_train->add_option("--data", tr.data, "Training sequence directories (default: synthetic set)");
  c_train->add_option("--heldout", tr.heldout, "Held-out sequence directories (default: synthetic set)");
  c_train->add_option("--sequences", tr.sequences, "Synthetic training sequences")->capture_default_str();
  c_train->add_option("--heldout-sequences", tr.heldout_sequences, "Synthetic held-out sequences")->capture_default_str();
  c_train->add_option("--frames", tr.frames, "Frames per synthetic sequence")->capture_default_str();
  c_train->add_option("--epochs", tr.epochs, "Epochs to run")->capture_default_str();
  c_train->add_option("--resume", tr.resume, "Checkpoint to continue from");
  c_train->add_flag("--paired", tr.paired, "Run with and without the feature loss and compare")->capture_default_str();

  EvalDepthArgs ed;
  auto* c_ed = app.add_subcommand("eval-depth", "Depth metrics of predicted against ground-truth PFM");
  add_common(c_ed, ed.c, false);
  c_ed->add_option("--pred", ed.pred, "Predicted depth PFM or directory")->required();
  c_ed->add_option("--gt", ed.gt, "Ground-truth depth PFM or directory")->required();
  c_ed->add_option("--mask", ed.mask, "Optional PGM; non-zero pixels are evaluated");
  c_ed->add_option("--cap", ed.caps, "Depth caps, meters")->capture_default_str();

  EvalOdomArgs eo;
  auto* c_eo = app.add_subcommand("eval-odom", "Drift of a predicted pose file against ground truth");
  add_common(c_eo, eo.c, false);
  c_eo->add_option("--pred", eo.pred, "Predicted poses")->required();
  c_eo->add_option("--gt", eo.gt, "Ground-truth poses")->required();
  c_eo->add_option("--stride", eo.stride, "Sub-sequence start stride, frames")->capture_default_str();
  c_eo->add_option("--first", eo.first, "First frame to evaluate")->capture_default_str();
  c_eo->add_option("--last", eo.last, "Last frame to evaluate (-1: all)")->capture_default_str();
  c_eo->add_flag("--align-scale", eo.align, "Fit a global scale first")->capture_default_str();

  MatchArgs mc;
  auto* c_mc = app.add_subcommand("match-compare", "Photometric vs feature disparity cost curves");
  add_common(c_mc, mc.c, false);
  c_mc->add_option("--sequence", mc.sequence, "Sequence directory (default: render --preset)");
  c_mc->add_option("--preset", mc.preset, "Synthetic preset when no sequence is given")->capture_default_str();
  c_mc->add_option("--extractor", mc.extractor, "Feature extractor")->check(kExtractorNames)->capture_default_str();
  c_mc->add_option("--frame", mc.frame, "Frame index")->capture_default_str();
  c_mc->add_option("--row", mc.row, "Pixel row (-1: middle)")->capture_default_str();
  c_mc->add_option("--col", mc.col, "Pixel column (-1: middle)")->capture_default_str();
  c_mc->add_option("--dmin", mc.dmin, "Smallest disparity")->capture_default_str();
  c_mc->add_option("--dmax", mc.dmax, "Largest disparity")->capture_default_str();

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = merge_config(std::move(args));
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kParse;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kParse;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  }

  try {
    if (*c_synth) return run_synth(synth, *c_synth);
    if (*c_opt) return run_optimize(optz, *c_opt);
    if (*c_train) return run_train(tr, *c_train);
    if (*c_ed) return run_eval_depth(ed, *c_ed);
    if (*c_eo) return run_eval_odom(eo, *c_eo);
    if (*c_mc) return run_match(mc, *c_mc);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kParse;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
  return kOther;
}
