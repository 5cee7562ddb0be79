#include "jvae/model.hpp"

#include "jvae/config.hpp"

#include <json.hpp>

#include <bit>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <type_traits>

namespace jvae {

std::string to_string(AnnealMode m) {
  switch (m) {
    case AnnealMode::none: return "none";
    case AnnealMode::hinge: return "hinge";
    case AnnealMode::loss_anneal: return "loss_anneal";
    case AnnealMode::arch_anneal: return "arch_anneal";
  }
  return "?";
}

AnnealMode anneal_mode_from_string(const std::string& s) {
  if (s == "none") return AnnealMode::none;
  if (s == "hinge") return AnnealMode::hinge;
  if (s == "loss_anneal") return AnnealMode::loss_anneal;
  if (s == "arch_anneal") return AnnealMode::arch_anneal;
  throw ConfigError("unknown anneal_mode '" + s + "'");
}

void ModelConfig::validate() const {
  if (input_dim < 1 || z_c_dim < 1) throw ConfigError("model: input_dim and z_c_dim must be >= 1");
  if (hidden_dims.empty()) throw ConfigError("model: hidden_dims must not be empty");
  for (Index h : hidden_dims) {
    if (h < 1) throw ConfigError("model: hidden widths must be >= 1");
  }
  if (k_classes == 1 || k_classes < 0) {
    throw ConfigError("model: k_classes must be >= 2 (or 0 for a continuous-only VAE)");
  }
  if (!(gumbel_temperature > 0.0)) throw ConfigError("model: gumbel_temperature must be > 0");
  if (k_classes == 0 && anneal_mode != AnnealMode::none) {
    throw ConfigError("model: a continuous-only VAE supports anneal_mode=none only");
  }
}

namespace {

Linear make_linear(const std::string& name, Index in, Index out, RngStream& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  Matrix w(in, out);
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = bound * (2.0 * rng.uniform() - 1.0);
  return Linear{nd::Parameter(name + ".weight", std::move(w)),
                nd::Parameter(name + ".bias", Matrix::Zero(1, out))};
}

void check_finite(const nd::Var& v, const std::string& where) {
  if (!v.value().allFinite()) throw NumericalError("non-finite activations at " + where);
}

}  // namespace

JointVae::JointVae(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  RngStream rng(seed, "init");
  Index in = cfg_.input_dim;
  for (std::size_t l = 0; l < cfg_.hidden_dims.size(); ++l) {
    encoder_.push_back(make_linear("encoder." + std::to_string(l), in, cfg_.hidden_dims[l], rng));
    in = cfg_.hidden_dims[l];
  }
  mu_head_ = make_linear("mu_head", in, cfg_.z_c_dim, rng);
  log_var_head_ = make_linear("log_var_head", in, cfg_.z_c_dim, rng);
  if (cfg_.has_discrete()) logits_head_ = make_linear("logits_head", in, cfg_.k_classes, rng);

  in = cfg_.z_c_dim + cfg_.k_classes;
  for (std::size_t l = cfg_.hidden_dims.size(); l-- > 0;) {
    const auto idx = cfg_.hidden_dims.size() - 1 - l;
    decoder_.push_back(make_linear("decoder." + std::to_string(idx), in, cfg_.hidden_dims[l], rng));
    in = cfg_.hidden_dims[l];
  }
  output_ = make_linear("output", in, cfg_.input_dim, rng);
}

std::vector<nd::Parameter*> JointVae::parameters() {
  std::vector<nd::Parameter*> out;
  auto add = [&out](Linear& l) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  };
  for (auto& l : encoder_) add(l);
  add(mu_head_);
  add(log_var_head_);
  if (cfg_.has_discrete()) add(logits_head_);
  for (auto& l : decoder_) add(l);
  add(output_);
  return out;
}

std::vector<const nd::Parameter*> JointVae::parameters() const {
  auto mut = const_cast<JointVae*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

void JointVae::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

void JointVae::set_output_prior(const RowVector& mean) {
  if (mean.size() != cfg_.input_dim) {
    throw DimensionError("set_output_prior: mean has " + std::to_string(mean.size()) + " entries, expected " +
                         std::to_string(cfg_.input_dim));
  }
  for (Index j = 0; j < mean.size(); ++j) {
    const double p = std::clamp(mean(j), 1e-4, 1.0 - 1e-4);
    output_.bias.value(0, j) = std::log(p / (1.0 - p));
  }
}

namespace {

// Parameters of a const model enter the graph as constants.
template <typename P>
nd::Var bind(nd::Graph& g, P& p) {
  if constexpr (std::is_const_v<P>) {
    return g.constant(p.value);
  } else {
    return g.param(p);
  }
}

template <typename L>
nd::Var affine(nd::Graph& g, L& layer, nd::Var x) {
  return matmul(x, bind(g, layer.weight)) + bind(g, layer.bias);
}

}  // namespace

template <typename Model>
LatentPosterior encode_impl(nd::Graph& g, Model& model, const Matrix& x, double lambda) {
  const ModelConfig& cfg = model.cfg_;
  if (x.cols() != cfg.input_dim) {
    throw DimensionError("encode: input has " + std::to_string(x.cols()) + " columns, model expects " +
                         std::to_string(cfg.input_dim));
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("encode: lambda must be in [0,1]");

  nd::Var h = g.constant(x);
  for (std::size_t l = 0; l < model.encoder_.size(); ++l) {
    h = relu(affine(g, model.encoder_[l], h));
    check_finite(h, "encoder layer " + std::to_string(l));
  }
  LatentPosterior post;
  post.raw_mu = affine(g, model.mu_head_, h);
  post.raw_log_var = affine(g, model.log_var_head_, h);
  check_finite(post.raw_mu, "mu head");
  check_finite(post.raw_log_var, "log_var head");
  if (cfg.has_discrete()) {
    post.logits = affine(g, model.logits_head_, h);
    check_finite(post.logits, "logits head");
  }
  post.lambda_applied = lambda;
  if (cfg.anneal_mode == AnnealMode::arch_anneal) {
    post.mu = scale(post.raw_mu, lambda);
    post.log_var = scale(post.raw_log_var, lambda);
  } else {
    post.mu = post.raw_mu;
    post.log_var = post.raw_log_var;
  }
  return post;
}

template <typename Model>
nd::Var decode_impl(nd::Graph& g, Model& model, nd::Var z_c, nd::Var z_d) {
  const ModelConfig& cfg = model.cfg_;
  if (z_c.cols() != cfg.z_c_dim) throw DimensionError("decode: z_c has wrong width");
  nd::Var h = z_c;
  if (cfg.has_discrete()) {
    if (!z_d.valid() || z_d.cols() != cfg.k_classes || z_d.rows() != z_c.rows()) {
      throw DimensionError("decode: z_d must be batch x k_classes");
    }
    h = concat_cols(z_c, z_d);
  }
  for (std::size_t l = 0; l < model.decoder_.size(); ++l) {
    h = relu(affine(g, model.decoder_[l], h));
    check_finite(h, "decoder layer " + std::to_string(l));
  }
  return sigmoid(affine(g, model.output_, h));
}

LatentPosterior encode(nd::Graph& g, JointVae& model, const Matrix& x, double lambda) {
  return encode_impl(g, model, x, lambda);
}

nd::Var decode(nd::Graph& g, JointVae& model, nd::Var z_c, nd::Var z_d) {
  return decode_impl(g, model, z_c, z_d);
}

nd::Var sample_continuous(const LatentPosterior& post, const Matrix& eps) {
  if (eps.rows() != post.mu.rows() || eps.cols() != post.mu.cols()) {
    throw DimensionError("sample_continuous: noise " + shape_str(eps) + " vs mu " +
                         shape_str(post.mu.rows(), post.mu.cols()));
  }
  nd::Graph& g = post.mu.graph();
  return post.mu + exp(0.5 * post.log_var) * g.constant(eps);
}

std::vector<int> argmax_rows(const Matrix& m) {
  std::vector<int> out(static_cast<std::size_t>(m.rows()));
  for (Index i = 0; i < m.rows(); ++i) {
    Index j = 0;
    m.row(i).maxCoeff(&j);
    out[static_cast<std::size_t>(i)] = static_cast<int>(j);
  }
  return out;
}

DiscreteSample sample_discrete(const LatentPosterior& post, const Matrix& gumbel, double tau,
                               bool straight_through) {
  if (!(tau > 0.0)) throw ConfigError("sample_discrete: temperature must be > 0");
  if (!post.logits.valid()) throw ContractError("sample_discrete: model has no discrete channel");
  if (gumbel.rows() != post.logits.rows() || gumbel.cols() != post.logits.cols()) {
    throw DimensionError("sample_discrete: gumbel noise shape mismatch");
  }
  nd::Graph& g = post.logits.graph();
  DiscreteSample out;
  out.soft = softmax_rows((post.logits + g.constant(gumbel)) * (1.0 / tau));
  out.hard = argmax_rows(out.soft.value());
  if (straight_through) {
    Matrix shift = -out.soft.value();
    for (std::size_t i = 0; i < out.hard.size(); ++i) shift(static_cast<Index>(i), out.hard[i]) += 1.0;
    out.soft = out.soft + g.constant(std::move(shift));
  }
  return out;
}

ForwardNoise ForwardNoise::draw(RngStream& rng, Index batch, const ModelConfig& cfg) {
  ForwardNoise n;
  n.eps = rng.normal_matrix(batch, cfg.z_c_dim);
  if (cfg.has_discrete()) n.gumbel = rng.gumbel_matrix(batch, cfg.k_classes);
  return n;
}

ForwardNoise ForwardNoise::zeros(Index batch, const ModelConfig& cfg) {
  ForwardNoise n;
  n.eps = Matrix::Zero(batch, cfg.z_c_dim);
  if (cfg.has_discrete()) n.gumbel = Matrix::Zero(batch, cfg.k_classes);
  return n;
}

ForwardPass forward(nd::Graph& g, JointVae& model, const Matrix& x, double lambda,
                    const ForwardNoise& noise) {
  ForwardPass fp;
  fp.posterior = encode(g, model, x, lambda);
  fp.z_c = sample_continuous(fp.posterior, noise.eps);
  const ModelConfig& cfg = model.config();
  if (cfg.has_discrete()) {
    fp.z_d = sample_discrete(fp.posterior, noise.gumbel, cfg.gumbel_temperature, cfg.straight_through);
  }
  fp.x_hat = decode(g, model, fp.z_c, fp.z_d.soft);
  return fp;
}

Latents extract_latents(const JointVae& model, const Matrix& x) {
  nd::Graph g;
  const LatentPosterior post = encode_impl(g, model, x, 1.0);
  Latents out;
  out.mu = post.mu.value();
  if (model.config().has_discrete()) {
    out.probs = nd::softmax_rows(post.logits.value());
    out.assignment = argmax_rows(post.logits.value());
  }
  return out;
}

namespace {

constexpr char kCheckpointMagic[5] = {'L', 'F', 'C', 'K', '1'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw FormatError("truncated checkpoint");
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
  const auto n = get<std::uint64_t>(is);
  if (n > (1ULL << 32)) throw FormatError("implausible string length in checkpoint");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw FormatError("truncated checkpoint");
  return s;
}

}  // namespace

void save_checkpoint(const JointVae& model, const CheckpointExtras& extras,
                     const std::filesystem::path& path) {
  static_assert(std::endian::native == std::endian::little);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write checkpoint " + path.string());
  os.write(kCheckpointMagic, sizeof kCheckpointMagic);
  put_string(os, nlohmann::json(model.config()).dump());
  for (const auto* p : model.parameters()) {
    os.write(reinterpret_cast<const char*>(p->value.data()),
             static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(p->value.size())));
  }
  put<std::uint64_t>(os, extras.iteration);
  put<std::uint64_t>(os, extras.rng_states.size());
  for (const auto& s : extras.rng_states) put_string(os, s);
}

JointVae load_checkpoint(const std::filesystem::path& path, CheckpointExtras* extras) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IngestionError("missing checkpoint " + path.string());
  char magic[5];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw FormatError(path.string() + ": not a checkpoint (bad magic)");
  }
  ModelConfig cfg;
  try {
    cfg = nlohmann::json::parse(get_string(is)).get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
  JointVae model(cfg, 0);
  for (auto* p : model.parameters()) {
    is.read(reinterpret_cast<char*>(p->value.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(p->value.size())));
    if (!is) throw FormatError("truncated checkpoint weights");
  }
  CheckpointExtras ex;
  ex.iteration = get<std::uint64_t>(is);
  const auto n = get<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < n; ++i) ex.rng_states.push_back(get_string(is));
  if (extras != nullptr) *extras = std::move(ex);
  return model;
}

}  // namespace jvae
