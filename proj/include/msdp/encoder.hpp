#pragma once

#include <nlohmann/json.hpp>

#include "msdp/autograd.hpp"
#include "msdp/params.hpp"
#include "msdp/vocab.hpp"

namespace msdp {

struct EncoderConfig {
  int layers = 2;
  int hidden_dim = 128;
  int heads = 4;
  int max_len = 64;
  double dropout = 0.1;
  int vocab_size = 0;

  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j);
  void validate() const;
};

// Small bidirectional self-attention encoder (pre-norm, GELU MLP, learned
// positions). The MLM head is weight-tied to the input embedding.
class Encoder {
 public:
  // Attaches to existing parameters in the store or creates and
  // initializes them (normal(0, 0.02) weights, zero biases, unit LN gain).
  Encoder(const EncoderConfig& cfg, ParamStore& params, uint64_t init_seed);

  // Hidden states, one row per input position. Padding positions are
  // excluded from attention; in eval mode (training=false) the result is
  // deterministic.
  ag::Var encode(ag::Tape& tape, const std::vector<int>& ids, bool training = false,
                 Rng* dropout_rng = nullptr) const;

  // Unnormalized vocabulary scores at the given positions.
  ag::Var mlm_logits(ag::Tape& tape, ag::Var hidden, const std::vector<int>& positions) const;

  // Probability rows (softmax over the vocabulary) at the given positions.
  Mat mlm_distributions(const std::vector<int>& ids, const std::vector<int>& positions) const;

  // First-position ([CLS]) row.
  ag::Var pool(ag::Tape& tape, ag::Var hidden) const;

  // Eval-mode forward returning plain values.
  Mat encode_eval(const std::vector<int>& ids) const;

  const EncoderConfig& config() const { return cfg_; }

 private:
  struct Head {
    Param *wq, *bq, *wk, *bk, *wv, *bv, *wo;
  };
  struct Layer {
    Param *ln1_g, *ln1_b, *ln2_g, *ln2_b;
    Param *attn_bo;
    Param *w1, *b1, *w2, *b2;
    std::vector<Head> heads;
  };

  static Param& attach(ParamStore& params, const std::string& name, int rows, int cols,
                       double init_std, uint64_t seed, double fill = 0.0);

  EncoderConfig cfg_;
  Param *tok_emb_, *pos_emb_, *ln_f_g_, *ln_f_b_, *mlm_bias_;
  std::vector<Layer> layers_;
};

}  // namespace msdp
