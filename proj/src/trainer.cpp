#include "jvae/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>

namespace jvae {

double lambda_at(const Schedule& schedule, std::int64_t t) {
  if (schedule.anneal_iters < 1) throw ConfigError("schedule: anneal_iters must be >= 1");
  if (t <= 0) return 0.0;
  if (t >= schedule.anneal_iters) return 1.0;
  return static_cast<double>(t) / static_cast<double>(schedule.anneal_iters);
}

void TrainConfig::validate(Index n_samples) const {
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (batch_size > n_samples) {
    throw ConfigError("train: batch_size " + std::to_string(batch_size) + " exceeds dataset size " +
                      std::to_string(n_samples));
  }
  if (anneal_iters < 1) throw ConfigError("train: anneal_iters must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw ConfigError("train: moment decay rates must be in [0,1)");
  }
}

TrainingAborted::TrainingAborted(std::int64_t iteration, LossBreakdown last_finite)
    : NumericalError("non-finite loss at iteration " + std::to_string(iteration) +
                     " (last finite total " + std::to_string(last_finite.total) + ", recon " +
                     std::to_string(last_finite.recon) + ", kl_c " + std::to_string(last_finite.kl_c) +
                     ", kl_d " + std::to_string(last_finite.kl_d) + ")"),
      iteration_(iteration),
      last_finite_(last_finite) {}

Adam::Adam(std::vector<nd::Parameter*> params, double lr, double beta1, double beta2, double eps,
           double weight_decay)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps),
      weight_decay_(weight_decay) {
  for (auto* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    nd::Parameter& p = *params_[i];
    Matrix g = p.grad;
    if (weight_decay_ != 0.0) g += weight_decay_ * p.value;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    p.value.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

double clip_grad_norm(const std::vector<nd::Parameter*>& params, double max_norm) {
  double sq = 0.0;
  for (const auto* p : params) sq += p->grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto* p : params) p->grad *= s;
  }
  return norm;
}

void check_compatible(const ModelConfig& model, const ObjectiveSpec& spec) {
  spec.validate();
  const bool arch_model = model.anneal_mode == AnnealMode::arch_anneal;
  const bool arch_obj = spec.mode == ObjectiveMode::arch_anneal;
  if (arch_model != arch_obj) {
    throw ConfigError("objective mode " + to_string(spec.mode) + " does not match model anneal_mode " +
                      to_string(model.anneal_mode));
  }
  if (!model.has_discrete() && spec.mode != ObjectiveMode::plain) {
    throw ConfigError("a continuous-only VAE trains with the plain objective only");
  }
}

StepResult evaluate_step(nd::Graph& g, JointVae& model, const ObjectiveSpec& spec, const Matrix& x,
                         double lambda, const ForwardNoise& noise) {
  StepResult r;
  r.pass = forward(g, model, x, lambda, noise);
  const LatentPosterior& post = r.pass.posterior;
  LossParts parts;
  parts.recon = recon_loss(g.constant(x), r.pass.x_hat);
  parts.kl_c = kl_continuous(post.mu, post.log_var);
  if (post.logits.valid()) parts.kl_d = kl_discrete(post.logits);
  if (spec.mode == ObjectiveMode::loss_anneal) {
    parts.kl_c_annealed = kl_continuous_annealed(post.raw_mu, post.raw_log_var, lambda);
  }
  r.objective = compose(spec, parts);
  return r;
}

namespace {

bool finite(const LossBreakdown& b) {
  return std::isfinite(b.total) && std::isfinite(b.recon) && std::isfinite(b.kl_c) &&
         std::isfinite(b.kl_d);
}

}  // namespace

TrainResult train(JointVae& model, const ConnectomeDataset& ds, const ObjectiveSpec& spec,
                  const TrainConfig& cfg) {
  cfg.validate(ds.size());
  check_compatible(model.config(), spec);
  if (ds.dim() != model.config().input_dim) {
    throw ConfigError("dataset dimension " + std::to_string(ds.dim()) + " does not match model input_dim " +
                      std::to_string(model.config().input_dim));
  }

  TrainResult result;
  const Index n = ds.size();
  const std::int64_t per_epoch = cfg.iters_per_epoch(n);
  const Schedule schedule{cfg.anneal_iters};

  RngStream shuffle_rng(cfg.seed, "shuffle");
  RngStream noise_rng(cfg.seed, "noise");
  if (cfg.init_output_prior) model.set_output_prior(ds.x.colwise().mean());
  auto params = model.parameters();
  Adam opt(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay);

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  LossBreakdown last_finite;
  Matrix batch(cfg.batch_size, ds.dim());
  std::int64_t t = 0;

  auto save = [&](const std::filesystem::path& path) {
    save_checkpoint(model, {static_cast<std::uint64_t>(t), {shuffle_rng.state(), noise_rng.state()}}, path);
  };

  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
    double recon_sum = 0.0;
    for (std::int64_t b = 0; b < per_epoch; ++b) {
      ++t;
      for (Index r = 0; r < cfg.batch_size; ++r) {
        batch.row(r) = ds.x.row(order[static_cast<std::size_t>(b * cfg.batch_size + r)]);
      }
      const double lambda = lambda_at(schedule, t);
      const ForwardNoise noise = ForwardNoise::draw(noise_rng, cfg.batch_size, model.config());

      nd::Graph g;
      StepResult step;
      try {
        step = evaluate_step(g, model, spec, batch, lambda, noise);
      } catch (const NumericalError&) {
        throw TrainingAborted(t, last_finite);
      }
      const LossBreakdown& parts = step.objective.parts;
      if (!finite(parts)) throw TrainingAborted(t, last_finite);
      last_finite = parts;

      model.zero_grad();
      g.backward(step.objective.total);
      clip_grad_norm(params, cfg.grad_clip);
      opt.step();

      result.log.push_back({t, lambda, parts});
      recon_sum += parts.recon;
      if (cfg.log_every > 0 && t % cfg.log_every == 0) {
        std::cerr << "iter " << t << " epoch " << epoch << " lambda " << std::setprecision(4) << lambda
                  << " total " << parts.total << " recon " << parts.recon << " kl_c " << parts.kl_c
                  << " kl_d " << parts.kl_d << '\n';
      }
      if (cfg.checkpoint_every > 0 && !cfg.checkpoint_dir.empty() && t % cfg.checkpoint_every == 0) {
        save(cfg.checkpoint_dir / ("checkpoint_" + std::to_string(t) + ".lfck"));
      }
    }
    result.epoch_recon.push_back(per_epoch > 0 ? recon_sum / static_cast<double>(per_epoch) : 0.0);
  }
  result.iterations = t;
  if (cfg.checkpoint_every > 0 && !cfg.checkpoint_dir.empty()) save(cfg.checkpoint_dir / "final.lfck");
  return result;
}

Latents extract_latents(const JointVae& model, const ConnectomeDataset& ds) {
  return extract_latents(model, ds.x);
}

int effective_classes(const std::vector<int>& assignment, Index k, double min_share) {
  if (assignment.empty()) return 0;
  std::vector<std::size_t> count(static_cast<std::size_t>(k), 0);
  for (int a : assignment) ++count.at(static_cast<std::size_t>(a));
  const double cut = min_share * static_cast<double>(assignment.size());
  return static_cast<int>(std::count_if(count.begin(), count.end(),
                                        [cut](std::size_t c) { return static_cast<double>(c) >= cut; }));
}

void write_training_log(const std::vector<LogRow>& log, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << "iter,lambda,total,recon,kl_c,kl_d,penalty_c,penalty_d\n";
  os << std::setprecision(17);
  for (const auto& r : log) {
    os << r.iter << ',' << r.lambda << ',' << r.loss.total << ',' << r.loss.recon << ',' << r.loss.kl_c
       << ',' << r.loss.kl_d << ',' << r.loss.penalty_c << ',' << r.loss.penalty_d << '\n';
  }
}

}  // namespace jvae
