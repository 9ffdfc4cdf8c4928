#include "dgpo/langmodel/model.hpp"

#include <cmath>
#include <random>

#include "dgpo/numerics/kernels.hpp"
#include "dgpo/numerics/ops.hpp"
#include "dgpo/util/hashing.hpp"

namespace dgpo::langmodel {

namespace nx = dgpo::numerics;
namespace kn = dgpo::numerics::kernels;

namespace {
constexpr double kLnEps = 1e-5;
}

void ModelConfig::validate() const {
  if (vocab_size == 0 || layers == 0 || width == 0 || heads == 0 || context == 0 || ffn_mult == 0) {
    throw std::invalid_argument("ModelConfig: all sizes must be positive");
  }
  if (width % heads != 0) {
    throw std::invalid_argument("ModelConfig: width " + std::to_string(width) +
                                " not divisible by heads " + std::to_string(heads));
  }
}

SequenceTooLongError::SequenceTooLongError(std::size_t length, std::size_t context)
    : std::length_error("sequence length " + std::to_string(length) + " exceeds context " +
                        std::to_string(context)) {}

PolicyModel::PolicyModel(ModelConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d = config_.width, v = config_.vocab_size, f = config_.width * config_.ffn_mult;
  const double std_base = 0.02;
  const double std_resid = 0.02 / std::sqrt(2.0 * static_cast<double>(config_.layers));

  auto add = [&](std::string name, std::string group, nx::Shape shape, double stddev, double fill) {
    std::vector<double> vals(nx::shape_size(shape), fill);
    if (stddev > 0.0) {
      for (double& x : vals) x = stddev * util::standard_normal(rng);
    }
    params_.push_back({std::move(name), std::move(group), nx::DiffArray::parameter(std::move(shape), std::move(vals))});
  };

  add("tok_emb", "actor", {v, d}, std_base, 0.0);
  add("pos_emb", "actor", {config_.context, d}, std_base, 0.0);
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    add(p + "ln1_g", "actor", {d}, 0.0, 1.0);
    add(p + "ln1_b", "actor", {d}, 0.0, 0.0);
    add(p + "wq", "actor", {d, d}, std_base, 0.0);
    add(p + "bq", "actor", {d}, 0.0, 0.0);
    add(p + "wk", "actor", {d, d}, std_base, 0.0);
    add(p + "bk", "actor", {d}, 0.0, 0.0);
    add(p + "wv", "actor", {d, d}, std_base, 0.0);
    add(p + "bv", "actor", {d}, 0.0, 0.0);
    add(p + "wo", "actor", {d, d}, std_resid, 0.0);
    add(p + "bo", "actor", {d}, 0.0, 0.0);
    add(p + "ln2_g", "actor", {d}, 0.0, 1.0);
    add(p + "ln2_b", "actor", {d}, 0.0, 0.0);
    add(p + "w1", "actor", {d, f}, std_base, 0.0);
    add(p + "b1", "actor", {f}, 0.0, 0.0);
    add(p + "w2", "actor", {f, d}, std_resid, 0.0);
    add(p + "b2", "actor", {d}, 0.0, 0.0);
  }
  add("lnf_g", "actor", {d}, 0.0, 1.0);
  add("lnf_b", "actor", {d}, 0.0, 0.0);
  add("w_out", "actor", {d, v}, std_base, 0.0);
  add("b_out", "actor", {v}, 0.0, 0.0);
  add("w_value", "critic", {d, 1}, std_base, 0.0);
  add("b_value", "critic", {1}, 0.0, 0.0);
  build_index();
}

PolicyModel::PolicyModel(ModelConfig config, std::vector<nx::NamedParameter> params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
  build_index();
}

void PolicyModel::build_index() {
  auto find = [&](const std::string& name, const nx::Shape& shape) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (params_[i].name == name) {
        if (params_[i].value.shape() != shape) {
          throw std::invalid_argument("PolicyModel: parameter '" + name + "' has shape " +
                                      nx::shape_string(params_[i].value.shape()) + ", expected " +
                                      nx::shape_string(shape));
        }
        return i;
      }
    }
    throw std::invalid_argument("PolicyModel: missing parameter '" + name + "'");
  };
  const std::size_t d = config_.width, v = config_.vocab_size, f = config_.width * config_.ffn_mult;
  tok_emb_ = find("tok_emb", {v, d});
  pos_emb_ = find("pos_emb", {config_.context, d});
  layers_.clear();
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    layers_.push_back({find(p + "ln1_g", {d}), find(p + "ln1_b", {d}), find(p + "wq", {d, d}),
                       find(p + "bq", {d}), find(p + "wk", {d, d}), find(p + "bk", {d}),
                       find(p + "wv", {d, d}), find(p + "bv", {d}), find(p + "wo", {d, d}),
                       find(p + "bo", {d}), find(p + "ln2_g", {d}), find(p + "ln2_b", {d}),
                       find(p + "w1", {d, f}), find(p + "b1", {f}), find(p + "w2", {f, d}),
                       find(p + "b2", {d})});
  }
  lnf_g_ = find("lnf_g", {d});
  lnf_b_ = find("lnf_b", {d});
  w_out_ = find("w_out", {d, v});
  b_out_ = find("b_out", {v});
  w_value_ = find("w_value", {d, 1});
  b_value_ = find("b_value", {1});
}

std::size_t PolicyModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

PolicyModel::Output PolicyModel::forward(std::span<const int> tokens) const {
  const std::size_t len = tokens.size();
  if (len > config_.context) throw SequenceTooLongError(len, config_.context);
  std::vector<int> positions(len);
  for (std::size_t t = 0; t < len; ++t) positions[t] = static_cast<int>(t);

  auto P = [&](std::size_t i) -> const nx::DiffArray& { return params_[i].value; };
  nx::DiffArray x = nx::add(nx::embedding(P(tok_emb_), tokens), nx::embedding(P(pos_emb_), positions));
  for (const auto& L : layers_) {
    auto h = nx::layer_norm(x, P(L.ln1_g), P(L.ln1_b), kLnEps);
    auto q = nx::add_bias(nx::matmul(h, P(L.wq)), P(L.bq));
    auto k = nx::add_bias(nx::matmul(h, P(L.wk)), P(L.bk));
    auto v = nx::add_bias(nx::matmul(h, P(L.wv)), P(L.bv));
    auto a = nx::causal_attention(q, k, v, config_.heads);
    x = nx::add(x, nx::add_bias(nx::matmul(a, P(L.wo)), P(L.bo)));
    auto h2 = nx::layer_norm(x, P(L.ln2_g), P(L.ln2_b), kLnEps);
    auto f = nx::gelu(nx::add_bias(nx::matmul(h2, P(L.w1)), P(L.b1)));
    x = nx::add(x, nx::add_bias(nx::matmul(f, P(L.w2)), P(L.b2)));
  }
  auto hf = nx::layer_norm(x, P(lnf_g_), P(lnf_b_), kLnEps);
  Output out;
  out.logits = nx::add_bias(nx::matmul(hf, P(w_out_)), P(b_out_));
  out.values = nx::reshape(nx::add_bias(nx::matmul(hf.detach(), P(w_value_)), P(b_value_)), {len});
  return out;
}

PolicyModel::Inference PolicyModel::infer(std::span<const int> tokens) const {
  if (tokens.size() > config_.context) throw SequenceTooLongError(tokens.size(), config_.context);
  Inference out;
  const std::size_t v = config_.vocab_size;
  out.logits.resize(tokens.size() * v);
  out.values.resize(tokens.size());
  Decoder dec(*this);
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    dec.push(tokens[t]);
    std::copy(dec.logits().begin(), dec.logits().end(), out.logits.begin() + static_cast<std::ptrdiff_t>(t * v));
    out.values[t] = dec.value();
  }
  return out;
}

PolicyModel PolicyModel::clone() const {
  std::vector<nx::NamedParameter> copy;
  copy.reserve(params_.size());
  for (const auto& p : params_) copy.push_back({p.name, p.group, p.value.clone()});
  return PolicyModel(config_, std::move(copy));
}

void PolicyModel::copy_from(const PolicyModel& other) {
  if (!(other.config_ == config_)) throw std::invalid_argument("PolicyModel::copy_from: config mismatch");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto src = other.params_[i].value.values();
    auto dst = params_[i].value.mutable_values();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

std::string PolicyModel::digest() const {
  util::Digest dg;
  for (const auto& p : params_) {
    dg.update(p.name).update_doubles(p.value.values());
  }
  return dg.hex();
}

Decoder::Decoder(const PolicyModel& model) : model_(&model) {
  const auto& c = model.config();
  keys_.assign(c.layers, std::vector<double>(c.context * c.width));
  vals_.assign(c.layers, std::vector<double>(c.context * c.width));
  x_.resize(c.width);
  h_.resize(c.width);
  q_.resize(c.width);
  att_.resize(c.width);
  proj_.resize(c.width);
  ff_.resize(c.width * c.ffn_mult);
  ff2_.resize(c.width);
  probs_.resize(c.context);
  logits_.resize(c.vocab_size);
}

void Decoder::push(int token) {
  const auto& c = model_->config();
  if (length_ >= c.context) throw SequenceTooLongError(length_ + 1, c.context);
  if (token < 0 || static_cast<std::size_t>(token) >= c.vocab_size) {
    throw std::out_of_range("Decoder::push: token id " + std::to_string(token) + " out of range");
  }
  const std::size_t d = c.width, f = c.width * c.ffn_mult, t = length_;
  const std::size_t hd = d / c.heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(hd));
  auto W = [&](std::size_t i) { return model_->params_[i].value.values().data(); };

  const double* te = W(model_->tok_emb_) + static_cast<std::size_t>(token) * d;
  const double* pe = W(model_->pos_emb_) + t * d;
  for (std::size_t j = 0; j < d; ++j) x_[j] = te[j] + pe[j];

  for (std::size_t l = 0; l < model_->layers_.size(); ++l) {
    const auto& L = model_->layers_[l];
    kn::layer_norm_row(x_.data(), W(L.ln1_g), W(L.ln1_b), h_.data(), d, kLnEps, nullptr, nullptr);
    double* krow = keys_[l].data() + t * d;
    double* vrow = vals_[l].data() + t * d;
    kn::matmul(h_.data(), W(L.wq), q_.data(), 1, d, d);
    kn::add_bias(q_.data(), W(L.bq), 1, d);
    kn::matmul(h_.data(), W(L.wk), krow, 1, d, d);
    kn::add_bias(krow, W(L.bk), 1, d);
    kn::matmul(h_.data(), W(L.wv), vrow, 1, d, d);
    kn::add_bias(vrow, W(L.bv), 1, d);
    for (std::size_t h = 0; h < c.heads; ++h) {
      kn::attention_row(q_.data(), keys_[l].data(), vals_[l].data(), t + 1, d, h * hd, hd, sc,
                        probs_.data(), att_.data() + h * hd);
    }
    kn::matmul(att_.data(), W(L.wo), proj_.data(), 1, d, d);
    kn::add_bias(proj_.data(), W(L.bo), 1, d);
    for (std::size_t j = 0; j < d; ++j) x_[j] = x_[j] + proj_[j];
    kn::layer_norm_row(x_.data(), W(L.ln2_g), W(L.ln2_b), h_.data(), d, kLnEps, nullptr, nullptr);
    kn::matmul(h_.data(), W(L.w1), ff_.data(), 1, d, f);
    kn::add_bias(ff_.data(), W(L.b1), 1, f);
    for (auto& z : ff_) z = kn::gelu(z);
    kn::matmul(ff_.data(), W(L.w2), ff2_.data(), 1, f, d);
    kn::add_bias(ff2_.data(), W(L.b2), 1, d);
    for (std::size_t j = 0; j < d; ++j) x_[j] = x_[j] + ff2_[j];
  }
  kn::layer_norm_row(x_.data(), W(model_->lnf_g_), W(model_->lnf_b_), h_.data(), d, kLnEps, nullptr,
                     nullptr);
  kn::matmul(h_.data(), W(model_->w_out_), logits_.data(), 1, d, c.vocab_size);
  kn::add_bias(logits_.data(), W(model_->b_out_), 1, c.vocab_size);
  double v = 0.0;
  kn::matmul(h_.data(), W(model_->w_value_), &v, 1, d, 1);
  kn::add_bias(&v, W(model_->b_value_), 1, 1);
  value_ = v;
  ++length_;
}

double sequence_logprob(const PolicyModel& model, std::span<const int> tokens,
                        std::span<const std::uint8_t> mask) {
  if (tokens.size() != mask.size()) {
    throw std::invalid_argument("sequence_logprob: " + std::to_string(tokens.size()) + " tokens but " +
                                std::to_string(mask.size()) + " mask entries");
  }
  if (!mask.empty() && mask[0] != 0) {
    throw std::invalid_argument("sequence_logprob: position 0 cannot be masked in");
  }
  if (tokens.empty()) return 0.0;
  const std::size_t v = model.config().vocab_size;
  Decoder dec(model);
  std::vector<double> logp(v);
  double total = 0.0;
  for (std::size_t t = 0; t + 1 < tokens.size(); ++t) {
    dec.push(tokens[t]);
    if (!mask[t + 1]) continue;
    kn::log_softmax_row(dec.logits().data(), logp.data(), v);
    total += logp[static_cast<std::size_t>(tokens[t + 1])];
  }
  return total;
}

}  // namespace dgpo::langmodel
