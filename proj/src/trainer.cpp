#include "structrep/trainer.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>

#include "structrep/image_io.hpp"

namespace structrep {

void TrainConfig::validate() const {
  if (!(temperature > 0.0)) throw ConfigError("train: temperature must be > 0");
  if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2 so that a negative exists");
  if (total_steps < 1) throw ConfigError("train: total_steps must be >= 1");
  if (!(base_lr >= 0.0)) throw ConfigError("train: base_lr must be >= 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("train: weight_decay must be >= 0");
  if (!(momentum >= 0.0 && momentum <= 1.0)) throw ConfigError("train: momentum must lie in [0, 1]");
  if (!(swap_probability >= 0.0 && swap_probability <= 1.0)) {
    throw ConfigError("train: swap_probability must lie in [0, 1]");
  }
}

InfoNceResult info_nce(const Matrix& f, const Matrix& f_prime, double tau) {
  if (f.rows() != f_prime.rows() || f.cols() != f_prime.cols()) {
    throw ShapeError("info_nce: " + shape_str(f.rows(), f.cols()) + " vs " +
                     shape_str(f_prime.rows(), f_prime.cols()));
  }
  const Eigen::Index b = f.rows();
  if (b < 2) throw ConfigError("info_nce: batch size " + std::to_string(b) + " < 2");
  if (!(tau > 0.0)) throw ConfigError("info_nce: tau must be > 0");
  for (Eigen::Index i = 0; i < b; ++i) {
    if (std::abs(f.row(i).norm() - 1.0) > kUnitTolerance || std::abs(f_prime.row(i).norm() - 1.0) > kUnitTolerance) {
      throw PreconditionError("info_nce: row " + std::to_string(i) + " is not unit-norm");
    }
  }

  const Matrix sim = f * f_prime.transpose();
  const Matrix logits = sim / tau;
  Matrix prob(b, b);
  InfoNceResult r;
  for (Eigen::Index i = 0; i < b; ++i) {
    Eigen::Index top = 0;
    const double mx = logits.row(i).maxCoeff(&top);
    double rest = 0.0;
    for (Eigen::Index j = 0; j < b; ++j) {
      prob(i, j) = std::exp(logits(i, j) - mx);
      if (j != top) rest += prob(i, j);
    }
    // log-sum-exp minus the positive logit; log1p keeps tiny losses accurate.
    r.loss += (mx - logits(i, i)) + std::log1p(rest);
    prob.row(i) /= 1.0 + rest;
  }
  r.loss /= double(b);

  Matrix grad_logits = prob;
  grad_logits.diagonal().array() -= 1.0;
  r.grad = grad_logits * f_prime / (tau * double(b));

  r.pos_sim = sim.diagonal().mean();
  r.neg_sim = (sim.sum() - sim.diagonal().sum()) / double(b * (b - 1));
  return r;
}

double cosine_lr(long step, long total_steps, double base_lr) {
  if (total_steps < 1) throw RangeError("cosine_lr: total_steps must be >= 1");
  if (step < 0 || step > total_steps) {
    throw RangeError("cosine_lr: step " + std::to_string(step) + " outside [0, " + std::to_string(total_steps) + "]");
  }
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * double(step) / double(total_steps)));
}

AdamWState AdamWState::zeros_like(const Trainables& params) {
  AdamWState s;
  s.m = Trainables::zeros_like(params);
  s.v = Trainables::zeros_like(params);
  return s;
}

void adamw_step(Trainables& params, const Trainables& grads, AdamWState& state, double lr, double weight_decay) {
  if (!params.same_shape(grads) || !params.same_shape(state.m) || !params.same_shape(state.v)) {
    throw ShapeError("adamw_step: parameter, gradient and moment shapes differ");
  }
  state.step += 1;
  const double c1 = 1.0 - std::pow(state.beta1, double(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, double(state.step));

  std::vector<Eigen::Map<const Vector>> g;
  for_each_tensor(grads, [&](std::string_view, Eigen::Map<const Vector> t, bool) { g.push_back(t); });
  std::vector<Eigen::Map<Vector>> m;
  for_each_tensor(state.m, [&](std::string_view, Eigen::Map<Vector> t, bool) { m.push_back(t); });
  std::vector<Eigen::Map<Vector>> v;
  for_each_tensor(state.v, [&](std::string_view, Eigen::Map<Vector> t, bool) { v.push_back(t); });

  std::size_t k = 0;
  for_each_tensor(params, [&](std::string_view, Eigen::Map<Vector> theta, bool decayed) {
    m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
    v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k].cwiseProduct(g[k]);
    if (decayed) theta *= 1.0 - lr * weight_decay;
    theta.array() -= lr * (m[k].array() / c1) / ((v[k].array() / c2).sqrt() + state.eps);
    ++k;
  });
}

TrainResult train(const std::vector<ImagePair>& pairs, const EncoderConfig& encoder, const TrainConfig& config,
                  const StepCallback& on_step) {
  config.validate();
  Rng init_rng = Rng(config.seed).substream(0);
  return train(pairs, init_params(encoder, init_rng), config, on_step);
}

TrainResult train(const std::vector<ImagePair>& pairs, EncoderParams params, const TrainConfig& config,
                  const StepCallback& on_step) {
  config.validate();
  params.config.validate();
  if (pairs.size() < std::size_t(config.batch_size)) {
    throw ConfigError("train: corpus has " + std::to_string(pairs.size()) + " pairs, fewer than batch_size " +
                      std::to_string(config.batch_size));
  }

  Rng order_rng = Rng(config.seed).substream(1);
  Rng swap_rng = Rng(config.seed).substream(2);

  TrainResult out;
  out.momentum = make_momentum(params);
  AdamWState opt = AdamWState::zeros_like(params.trainable);

  std::vector<std::size_t> order(pairs.size());
  std::size_t cursor = order.size();  // forces a shuffle before the first batch
  std::vector<const ImageRaster*> queries(config.batch_size);
  std::vector<const ImageRaster*> keys(config.batch_size);

  for (long step = 0; step < config.total_steps; ++step) {
    for (int i = 0; i < config.batch_size; ++i) {
      if (cursor == order.size()) {
        for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
        order_rng.shuffle(order.begin(), order.end());
        cursor = 0;
      }
      const ImagePair& pair = pairs[order[cursor++]];
      const bool swap = swap_rng.bernoulli(config.swap_probability);
      queries[i] = swap ? &pair.second : &pair.first;
      keys[i] = swap ? &pair.first : &pair.second;
    }

    const ForwardCache q = forward_batch(params.config, params.w_patch, params.trainable, queries);
    const ForwardCache k = forward_batch(params.config, params.w_patch, out.momentum, keys);
    const InfoNceResult loss = info_nce(q.f, k.f, config.temperature);
    if (!std::isfinite(loss.loss) || !loss.grad.allFinite()) {
      throw NumericalError("train: non-finite loss at step " + std::to_string(step));
    }

    const Trainables grads = backward_batch(params.config, params.trainable, q, loss.grad);
    const double lr = cosine_lr(step, config.total_steps, config.base_lr);
    adamw_step(params.trainable, grads, opt, lr, config.weight_decay);
    if (!params.trainable.all_finite()) {
      throw NumericalError("train: non-finite parameters after step " + std::to_string(step));
    }
    out.momentum = momentum_update(std::move(out.momentum), params, config.momentum);

    StepRecord rec{step, loss.loss, lr, loss.pos_sim, loss.neg_sim};
    out.report.steps.push_back(rec);
    if (on_step) on_step(rec);
  }
  out.params = std::move(params);
  return out;
}

std::vector<ImagePair> load_train_pairs(const Manifest& manifest) {
  std::vector<ImagePair> pairs;
  for (const ManifestRow* row : manifest.split("train")) {
    pairs.emplace_back(read_png(manifest.root / row->src_path), read_png(manifest.root / row->syn_path));
  }
  return pairs;
}

void write_train_report(const std::filesystem::path& path, const TrainReport& report, const TrainConfig& config) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open train report '" + path.string() + "' for writing");
  nlohmann::json header = {{"format", kTrainReportFormat},
                           {"version", kTrainReportVersion},
                           {"seed", config.seed},
                           {"steps", config.total_steps},
                           {"batch_size", config.batch_size},
                           {"temperature", config.temperature},
                           {"base_lr", config.base_lr},
                           {"weight_decay", config.weight_decay},
                           {"momentum", config.momentum}};
  out << header.dump() << '\n';
  for (const StepRecord& s : report.steps) {
    nlohmann::json row = {{"step", s.step}, {"loss", s.loss}, {"lr", s.lr}, {"pos_sim", s.pos_sim},
                          {"neg_sim", s.neg_sim}};
    out << row.dump() << '\n';
  }
  if (!out) throw IoError("failed writing train report '" + path.string() + "'");
}

}  // namespace structrep
