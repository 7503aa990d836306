#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "stvo/assemble.hpp"
#include "stvo/errors.hpp"
#include "stvo/features.hpp"
#include "stvo/instance.hpp"
#include "stvo/losses.hpp"
#include "stvo/nets.hpp"

namespace stvo {

/// Learning rate `learning_rate` applies from iteration `start` on.
struct LrStage {
  int start = 0;
  double learning_rate = 1e-3;
};

inline double scheduled_rate(const std::vector<LrStage>& schedule, double fallback, long iteration) {
  double lr = fallback;
  for (const auto& s : schedule)
    if (iteration >= s.start) lr = s.learning_rate;
  return lr;
}

struct DirectOptions {
  int iterations = 200;
  AdamSettings adam;
  /// Optional manual schedule; empty keeps adam.learning_rate throughout.
  std::vector<LrStage> schedule;
  bool optimize_depth = true;
  bool optimize_pose = true;
  ViewPairs pairs;
  /// Converged when the mean total of the last 10 iterations moved less than
  /// this (relative) against the 10 before.
  double convergence_tolerance = 1e-6;
};

struct SolveReport {
  std::vector<LossBreakdown> history;
  ImageGrid inverse_depth;
  Twist twist;
  bool converged = false;
  double wall_seconds = 0.0;

  std::size_t iterations() const noexcept { return history.size(); }
};

inline ImageGrid constant_inverse_depth(int height, int width, double depth_guess) {
  if (!(depth_guess > 0.0)) throw DomainError("constant_inverse_depth: depth guess must be positive");
  return ImageGrid(height, width, 1, 1.0 / depth_guess, ValueRange::kInverseMeters);
}

/// Twist whose transform equals `t` (rotation angle must be below pi).
inline Twist twist_from_transform(const SE3Transform& t) {
  return Twist(axis_angle_from_rotation(t.rotation), t.translation);
}

namespace detail {

inline bool windows_settled(const std::vector<LossBreakdown>& h, double tol) {
  if (h.size() < 20) return false;
  double a = 0.0, b = 0.0;
  for (std::size_t i = h.size() - 20; i < h.size() - 10; ++i) a += h[i].total;
  for (std::size_t i = h.size() - 10; i < h.size(); ++i) b += h[i].total;
  return std::abs(a - b) <= tol * std::max(1.0, std::abs(b));
}

}  // namespace detail

/**
 * Direct mode: Adam on the free variables (per-pixel inverse depth and the
 * temporal twist) of one instance. Inverse depth is kept non-negative.
 * `history[i]` is the loss evaluated before update i.
 */
inline SolveReport optimize_direct(const TrainingInstance& instance, const ImageGrid& init_inverse_depth,
                                   const Twist& init_twist, const LossWeights& weights,
                                   const FeatureExtractor& extractor, const DirectOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  if (opt.iterations < 1) throw DomainError("optimize_direct: iterations must be >= 1");
  instance.validate();
  weights.validate();
  detail::require_extent(init_inverse_depth, instance.reference, "optimize_direct");
  require_finite(init_inverse_depth, "optimize_direct: initial inverse depth");
  for (double v : init_inverse_depth.values())
    if (v < 0.0) throw DomainError("optimize_direct: initial inverse depth must be >= 0");

  std::optional<FeatureMaps> features;
  if (weights.lambda_fr != 0.0) features = compute_features(instance, extractor);

  SolveReport rep;
  rep.inverse_depth = init_inverse_depth;
  rep.inverse_depth.set_value_range(ValueRange::kInverseMeters);
  rep.twist = init_twist;
  Vec6 twist_params = init_twist.vector();
  AdamState depth_adam(rep.inverse_depth.size(), opt.adam);
  AdamState pose_adam(6, opt.adam);

  for (int it = 0; it < opt.iterations; ++it) {
    const TotalLoss loss = total_loss(instance, rep.inverse_depth, rep.twist,
                                      features ? &*features : nullptr, weights, opt.pairs);
    if (!std::isfinite(loss.breakdown.total)) {
      throw DivergenceError("optimize_direct: non-finite loss at iteration " + std::to_string(it));
    }
    rep.history.push_back(loss.breakdown);
    const double lr = scheduled_rate(opt.schedule, opt.adam.learning_rate, it);
    if (opt.optimize_depth) {
      depth_adam.set_learning_rate(lr);
      depth_adam.step(rep.inverse_depth.values(), loss.grad_inverse_depth.values());
      for (double& v : rep.inverse_depth.values()) v = std::max(v, 0.0);
    }
    if (opt.optimize_pose) {
      pose_adam.set_learning_rate(lr);
      pose_adam.step(std::span<double>(twist_params.data(), 6),
                     std::span<const double>(loss.grad_twist.data(), 6));
      try {
        rep.twist = Twist(twist_params);
      } catch (const DomainError& e) {
        throw DivergenceError(std::string("optimize_direct: twist left its domain: ") + e.what());
      }
    }
  }
  rep.converged = detail::windows_settled(rep.history, opt.convergence_tolerance);
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

/// Depth and pose networks with their optimizer states.
/**
 * Default Adam rate for predictor training. At 1e-3 the first steps push
 * every pre-activation of the depth net's final ReLU below zero and the
 * net never recovers (constant 1e4 m depth); 1e-4 trains.
 */
inline constexpr double kPredictorLearningRate = 1e-4;

struct PredictorState {
  LayerStack depth_net;
  LayerStack pose_net;
  AdamState depth_adam;
  AdamState pose_adam;
  long epoch = 0;
  long iteration = 0;

  static PredictorState fresh(std::uint64_t seed, AdamSettings adam = {kPredictorLearningRate},
                              double initial_inverse_depth = 0.25) {
    PredictorState s;
    s.depth_net = build_depth_net(seed, initial_inverse_depth);
    s.pose_net = build_pose_net(seed + 1);
    s.depth_adam = AdamState(s.depth_net.parameter_count(), adam);
    s.pose_adam = AdamState(s.pose_net.parameter_count(), adam);
    return s;
  }
};

inline void save_checkpoint(std::ostream& os, const PredictorState& s) {
  os << "stvo-checkpoint 1\nepoch " << s.epoch << "\niteration " << s.iteration << '\n';
  save_layer_stack(os, s.depth_net);
  save_layer_stack(os, s.pose_net);
  s.depth_adam.save(os);
  s.pose_adam.save(os);
}

inline PredictorState load_checkpoint(std::istream& is) {
  detail::expect_token(is, "stvo-checkpoint");
  detail::expect_token(is, "1");
  PredictorState s;
  detail::expect_token(is, "epoch");
  if (!(is >> s.epoch)) throw ParseError("checkpoint: bad epoch");
  detail::expect_token(is, "iteration");
  if (!(is >> s.iteration)) throw ParseError("checkpoint: bad iteration");
  s.depth_net = load_layer_stack(is);
  s.pose_net = load_layer_stack(is);
  s.depth_adam = AdamState::load(is);
  s.pose_adam = AdamState::load(is);
  if (s.depth_adam.size() != s.depth_net.parameter_count() ||
      s.pose_adam.size() != s.pose_net.parameter_count()) {
    throw ParseError("checkpoint: optimizer state does not match the networks");
  }
  return s;
}

struct TrainOptions {
  int epochs = 200;
  LossWeights weights;
  FeatureKind extractor = FeatureKind::kGradientDescriptor;
  std::uint64_t feature_seed = 0;
  ViewPairs pairs;
  /// Manual per-iteration schedule; empty keeps each Adam state's rate.
  std::vector<LrStage> schedule;
  /// Receives `iteration,l_ir,l_fr,l_ds,total` lines when set.
  std::ostream* progress = nullptr;
};

struct TrainReport {
  std::vector<LossBreakdown> iterations;
  /// Mean training total per epoch.
  std::vector<double> epoch_loss;
  double wall_seconds = 0.0;
};

namespace detail {

struct PredictorStep {
  TotalLoss loss;
  ImageGrid inverse_depth;
};

inline PredictorStep predictor_loss(PredictorState& s, const TrainingInstance& inst,
                                    const FeatureExtractor* extractor, const LossWeights& w,
                                    ViewPairs pairs, bool want_gradients) {
  PredictorStep out;
  out.inverse_depth = depth_forward(s.depth_net, inst.reference);
  const Twist twist = pose_forward(s.pose_net, inst.reference, inst.temporal_live);
  std::optional<FeatureMaps> f;
  if (extractor && w.lambda_fr != 0.0) f = compute_features(inst, *extractor);
  out.loss = total_loss(inst, out.inverse_depth, twist, f ? &*f : nullptr, w, pairs, want_gradients);
  return out;
}

}  // namespace detail

/**
 * Predictor mode: per instance, depth and pose come from the networks, the
 * loss gradients are back-propagated into both and each takes one Adam step.
 * Instances are visited in the given order every epoch. On a non-finite
 * loss or pose the state is rolled back to the last good step and
 * DivergenceError is thrown.
 */
inline TrainReport train_predictors(const std::vector<TrainingInstance>& dataset, PredictorState& state,
                                    const TrainOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  if (dataset.empty()) throw DegenerateInputError("train_predictors: empty dataset");
  if (opt.epochs < 0) throw DomainError("train_predictors: epochs must be >= 0");
  opt.weights.validate();
  const int in_ch = dataset.front().reference.channels();
  const FeatureExtractor extractor = FeatureExtractor::make(opt.extractor, in_ch, opt.feature_seed);
  const double depth_lr = state.depth_adam.settings().learning_rate;
  const double pose_lr = state.pose_adam.settings().learning_rate;

  TrainReport rep;
  for (int e = 0; e < opt.epochs; ++e) {
    double sum = 0.0;
    for (const auto& inst : dataset) {
      const std::vector<double> depth_backup(state.depth_net.parameters().begin(),
                                             state.depth_net.parameters().end());
      const std::vector<double> pose_backup(state.pose_net.parameters().begin(),
                                            state.pose_net.parameters().end());
      auto rollback = [&](const std::string& why) {
        std::copy(depth_backup.begin(), depth_backup.end(), state.depth_net.parameters().begin());
        std::copy(pose_backup.begin(), pose_backup.end(), state.pose_net.parameters().begin());
        state.depth_net.clear_cache();
        state.pose_net.clear_cache();
        throw DivergenceError("train_predictors: " + why + " at iteration " +
                              std::to_string(state.iteration));
      };
      detail::PredictorStep step;
      try {
        step = detail::predictor_loss(state, inst, &extractor, opt.weights, opt.pairs, true);
      } catch (const DomainError& err) {
        rollback(err.what());
      }
      const LossBreakdown& b = step.loss.breakdown;
      if (!std::isfinite(b.total)) rollback("non-finite loss");

      state.depth_net.backward(step.loss.grad_inverse_depth);
      pose_backward(state.pose_net, step.loss.grad_twist);
      if (!opt.schedule.empty()) {
        const double lr = scheduled_rate(opt.schedule, depth_lr, state.iteration);
        state.depth_adam.set_learning_rate(lr);
        state.pose_adam.set_learning_rate(scheduled_rate(opt.schedule, pose_lr, state.iteration));
      }
      state.depth_adam.step(state.depth_net.parameters(), state.depth_net.gradients());
      state.pose_adam.step(state.pose_net.parameters(), state.pose_net.gradients());
      for (double p : state.depth_net.parameters())
        if (!std::isfinite(p)) rollback("non-finite depth-net parameter");
      for (double p : state.pose_net.parameters())
        if (!std::isfinite(p)) rollback("non-finite pose-net parameter");

      if (opt.progress) {
        *opt.progress << state.iteration << ',' << b.l_ir << ',' << b.l_fr << ',' << b.l_ds << ','
                      << b.total << '\n';
      }
      rep.iterations.push_back(b);
      sum += b.total;
      ++state.iteration;
    }
    rep.epoch_loss.push_back(sum / static_cast<double>(dataset.size()));
    ++state.epoch;
  }
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

struct PredictorEvaluation {
  /// Mean total loss over the instances.
  double mean_total = 0.0;
  std::vector<double> totals;
  /// Median of predicted / true depth over pixels with ground truth; NaN without.
  double median_depth_ratio = std::numeric_limits<double>::quiet_NaN();
  std::vector<ImageGrid> depths;
  std::vector<Twist> twists;
};

inline PredictorEvaluation evaluate_predictors(const std::vector<TrainingInstance>& dataset,
                                               PredictorState& state, const TrainOptions& opt) {
  if (dataset.empty()) throw DegenerateInputError("evaluate_predictors: empty dataset");
  const FeatureExtractor extractor =
      FeatureExtractor::make(opt.extractor, dataset.front().reference.channels(), opt.feature_seed);
  PredictorEvaluation ev;
  std::vector<double> ratios;
  for (const auto& inst : dataset) {
    const auto step = detail::predictor_loss(state, inst, &extractor, opt.weights, opt.pairs, false);
    ev.totals.push_back(step.loss.breakdown.total);
    ev.mean_total += step.loss.breakdown.total;
    ImageGrid depth = depth_from_inverse(step.inverse_depth);
    if (inst.gt_depth) {
      for (std::size_t i = 0; i < depth.size(); ++i) {
        const double g = inst.gt_depth->values()[i];
        if (g > 0.0) ratios.push_back(depth.values()[i] / g);
      }
    }
    ev.depths.push_back(std::move(depth));
    ev.twists.push_back(pose_forward(state.pose_net, inst.reference, inst.temporal_live));
  }
  state.depth_net.clear_cache();
  state.pose_net.clear_cache();
  ev.mean_total /= static_cast<double>(dataset.size());
  if (!ratios.empty()) {
    const auto mid = ratios.begin() + static_cast<std::ptrdiff_t>(ratios.size() / 2);
    std::nth_element(ratios.begin(), mid, ratios.end());
    ev.median_depth_ratio = *mid;
  }
  return ev;
}

}  // namespace stvo
