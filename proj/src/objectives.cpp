#include "jvae/objectives.hpp"

namespace jvae {

std::string to_string(ObjectiveMode m) {
  switch (m) {
    case ObjectiveMode::plain: return "plain";
    case ObjectiveMode::hinge: return "hinge";
    case ObjectiveMode::loss_anneal: return "loss_anneal";
    case ObjectiveMode::arch_anneal: return "arch_anneal";
  }
  return "?";
}

ObjectiveMode objective_mode_from_string(const std::string& s) {
  if (s == "plain") return ObjectiveMode::plain;
  if (s == "hinge") return ObjectiveMode::hinge;
  if (s == "loss_anneal") return ObjectiveMode::loss_anneal;
  if (s == "arch_anneal") return ObjectiveMode::arch_anneal;
  throw ConfigError("unknown objective mode '" + s + "'");
}

void ObjectiveSpec::validate() const {
  if (beta < 0.0 || beta_c < 0.0 || beta_d < 0.0) throw ConfigError("objective: weights must be >= 0");
  if (mode == ObjectiveMode::hinge) {
    if (!capacity_c || !capacity_d) throw ConfigError("objective: hinge mode needs capacity_c and capacity_d");
  }
  if ((capacity_c && *capacity_c < 0.0) || (capacity_d && *capacity_d < 0.0)) {
    throw ConfigError("objective: capacities must be >= 0");
  }
}

nd::Var recon_loss(nd::Var x, nd::Var x_hat) {
  if (x.rows() != x_hat.rows() || x.cols() != x_hat.cols()) {
    throw DimensionError("recon_loss: " + shape_str(x.rows(), x.cols()) + " vs " +
                         shape_str(x_hat.rows(), x_hat.cols()));
  }
  return 0.5 * batch_mean(square(x - x_hat));
}

nd::Var kl_continuous(nd::Var mu, nd::Var log_var) {
  return 0.5 * batch_mean(exp(log_var) + square(mu) - log_var - 1.0);
}

nd::Var kl_continuous_annealed(nd::Var mu, nd::Var log_var, double lambda) {
  nd::Var scaled_lv = lambda * log_var;
  return 0.5 * batch_mean(exp(scaled_lv) + (lambda * lambda) * square(mu) - scaled_lv - 1.0);
}

nd::Var kl_discrete(nd::Var logits) {
  const double log_k = std::log(static_cast<double>(logits.cols()));
  nd::Var log_q = log_softmax_rows(logits);
  return batch_mean(exp(log_q) * (log_q + log_k));
}

double kl_discrete(const Matrix& logits) {
  const double log_k = std::log(static_cast<double>(logits.cols()));
  const Matrix log_q = nd::log_softmax_rows(logits);
  return (log_q.array().exp() * (log_q.array() + log_k)).sum() / static_cast<double>(logits.rows());
}

namespace {

double value_or_zero(const nd::Var& v) { return v.valid() ? v.item() : 0.0; }

}  // namespace

Objective hinge_objective(nd::Var recon, nd::Var kl_c, nd::Var kl_d, double beta, double capacity_c,
                          double capacity_d) {
  nd::Var pen_c = beta * abs(kl_c - capacity_c);
  Objective out;
  out.total = recon + pen_c;
  out.parts.penalty_c = pen_c.item();
  if (kl_d.valid()) {
    nd::Var pen_d = beta * abs(kl_d - capacity_d);
    out.total = out.total + pen_d;
    out.parts.penalty_d = pen_d.item();
  }
  out.parts.recon = recon.item();
  out.parts.kl_c = kl_c.item();
  out.parts.kl_d = value_or_zero(kl_d);
  out.parts.total = out.total.item();
  return out;
}

LossBreakdown hinge_objective(double recon, double kl_c, double kl_d, double beta, double capacity_c,
                              double capacity_d) {
  LossBreakdown b;
  b.recon = recon;
  b.kl_c = kl_c;
  b.kl_d = kl_d;
  b.penalty_c = beta * std::abs(kl_c - capacity_c);
  b.penalty_d = beta * std::abs(kl_d - capacity_d);
  b.total = recon + b.penalty_c + b.penalty_d;
  return b;
}

Objective compose(const ObjectiveSpec& spec, const LossParts& parts) {
  spec.validate();
  if (!parts.recon.valid() || !parts.kl_c.valid()) throw ConfigError("compose: recon and kl_c are required");

  if (spec.mode == ObjectiveMode::hinge) {
    return hinge_objective(parts.recon, parts.kl_c, parts.kl_d, spec.beta, *spec.capacity_c,
                           *spec.capacity_d);
  }

  double w_c = spec.beta;
  double w_d = spec.beta;
  nd::Var cont = parts.kl_c;
  switch (spec.mode) {
    case ObjectiveMode::plain:
      w_c = spec.beta_c;
      w_d = spec.beta_d;
      break;
    case ObjectiveMode::loss_anneal:
      if (!parts.kl_c_annealed.valid()) throw ConfigError("compose: loss_anneal needs kl_c_annealed");
      cont = parts.kl_c_annealed;
      break;
    default:
      break;
  }

  Objective out;
  nd::Var pen_c = w_c * cont;
  out.total = parts.recon + pen_c;
  out.parts.penalty_c = pen_c.item();
  if (parts.kl_d.valid()) {
    nd::Var pen_d = w_d * parts.kl_d;
    out.total = out.total + pen_d;
    out.parts.penalty_d = pen_d.item();
  }
  out.parts.recon = parts.recon.item();
  out.parts.kl_c = parts.kl_c.item();
  out.parts.kl_d = value_or_zero(parts.kl_d);
  out.parts.kl_c_annealed = value_or_zero(parts.kl_c_annealed);
  out.parts.total = out.total.item();
  return out;
}

}  // namespace jvae
