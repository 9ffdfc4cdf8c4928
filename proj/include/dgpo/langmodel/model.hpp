#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dgpo/numerics/diff_array.hpp"
#include "dgpo/numerics/optimizer.hpp"

namespace dgpo::langmodel {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t layers = 4;
  std::size_t width = 128;
  std::size_t heads = 4;
  std::size_t context = 512;
  std::size_t ffn_mult = 4;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

class SequenceTooLongError : public std::length_error {
 public:
  SequenceTooLongError(std::size_t length, std::size_t context);
};

// Decoder-only transformer (pre-LN) with a policy head (logits over the
// vocabulary) and a scalar value head, both reading the final trunk state.
// Parameters in group "actor" cover trunk + policy head; "critic" covers the
// value head, which reads a detached copy of the trunk state so value
// regression never moves actor parameters.
class PolicyModel {
 public:
  PolicyModel(ModelConfig config, std::uint64_t seed);
  // Builds a model around existing tensors (checkpoint loading).
  PolicyModel(ModelConfig config, std::vector<numerics::NamedParameter> params);

  struct Output {
    numerics::DiffArray logits;  // [T, V]
    numerics::DiffArray values;  // [T]
  };

  // Taped forward pass; row t of the outputs conditions on tokens[0..t].
  Output forward(std::span<const int> tokens) const;

  // Tape-free forward; bitwise identical to forward() values.
  struct Inference {
    std::vector<double> logits;  // T * V, row-major
    std::vector<double> values;  // T
  };
  Inference infer(std::span<const int> tokens) const;

  const ModelConfig& config() const { return config_; }
  std::vector<numerics::NamedParameter>& parameters() { return params_; }
  const std::vector<numerics::NamedParameter>& parameters() const { return params_; }
  const numerics::DiffArray& param(std::size_t index) const { return params_[index].value; }
  std::size_t parameter_count() const;

  // Deep copy with independent parameter storage.
  PolicyModel clone() const;
  // Overwrites parameter values with another model's (same config).
  void copy_from(const PolicyModel& other);
  std::string digest() const;

 private:
  friend class Decoder;
  struct LayerIndex {
    std::size_t ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
  };
  void build_index();

  ModelConfig config_;
  std::vector<numerics::NamedParameter> params_;
  std::size_t tok_emb_ = 0, pos_emb_ = 0, lnf_g_ = 0, lnf_b_ = 0, w_out_ = 0, b_out_ = 0,
              w_value_ = 0, b_value_ = 0;
  std::vector<LayerIndex> layers_;
};

// Incremental tape-free decoder with a key/value cache. Each push() computes
// the trunk state of one new position.
class Decoder {
 public:
  explicit Decoder(const PolicyModel& model);

  void push(int token);
  std::size_t length() const { return length_; }
  // Logits and value of the most recently pushed position.
  std::span<const double> logits() const { return logits_; }
  double value() const { return value_; }

 private:
  const PolicyModel* model_;
  std::size_t length_ = 0;
  std::vector<std::vector<double>> keys_, vals_;  // per layer [context, width]
  std::vector<double> x_, h_, q_, att_, proj_, ff_, ff2_, probs_, logits_;
  double value_ = 0.0;
};

// log p(tokens[t] | tokens[<t]) summed over positions with mask[t] != 0.
// mask[0] must be zero (position 0 has no context).
double sequence_logprob(const PolicyModel& model, std::span<const int> tokens,
                        std::span<const std::uint8_t> mask);

}  // namespace dgpo::langmodel
