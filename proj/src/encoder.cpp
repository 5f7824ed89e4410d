#include "msdp/encoder.hpp"

#include <cmath>

#include "msdp/errors.hpp"

namespace msdp {

nlohmann::json EncoderConfig::to_json() const {
  return {{"layers", layers},   {"hidden_dim", hidden_dim}, {"heads", heads},
          {"max_len", max_len}, {"dropout", dropout},       {"vocab_size", vocab_size}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.layers = j.value("layers", c.layers);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.heads = j.value("heads", c.heads);
  c.max_len = j.value("max_len", c.max_len);
  c.dropout = j.value("dropout", c.dropout);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  return c;
}

void EncoderConfig::validate() const {
  if (layers < 1 || hidden_dim < 1 || heads < 1 || max_len < 2)
    throw ConfigError("encoder config: all dimensions must be positive");
  if (hidden_dim % heads != 0)
    throw ConfigError("encoder config: hidden_dim must be divisible by heads");
  if (dropout < 0.0 || dropout >= 1.0)
    throw ConfigError("encoder config: dropout must be in [0, 1)");
  if (vocab_size < 5) throw ConfigError("encoder config: vocab_size not set");
}

Param& Encoder::attach(ParamStore& params, const std::string& name, int rows, int cols,
                       double init_std, uint64_t seed, double fill) {
  if (params.has(name)) {
    Param& p = params.get(name);
    if (p.value.rows() != rows || p.value.cols() != cols)
      throw ConfigError("parameter shape mismatch for " + name);
    return p;
  }
  Param& p = params.create(name, rows, cols);
  if (init_std > 0.0) {
    Rng rng(derive_seed(seed, "init." + name));
    for (int c = 0; c < cols; ++c)
      for (int r = 0; r < rows; ++r) p.value(r, c) = rng.normal(0.0, init_std);
  } else if (fill != 0.0) {
    p.value.setConstant(fill);
  }
  return p;
}

Encoder::Encoder(const EncoderConfig& cfg, ParamStore& params, uint64_t init_seed)
    : cfg_(cfg) {
  cfg_.validate();
  int d = cfg_.hidden_dim;
  int dh = d / cfg_.heads;
  const double std = 0.02;

  tok_emb_ = &attach(params, "enc.tok_emb", cfg_.vocab_size, d, std, init_seed);
  pos_emb_ = &attach(params, "enc.pos_emb", cfg_.max_len, d, std, init_seed);
  ln_f_g_ = &attach(params, "enc.ln_f.g", 1, d, 0.0, init_seed, 1.0);
  ln_f_b_ = &attach(params, "enc.ln_f.b", 1, d, 0.0, init_seed);
  mlm_bias_ = &attach(params, "enc.mlm_bias", 1, cfg_.vocab_size, 0.0, init_seed);

  for (int l = 0; l < cfg_.layers; ++l) {
    std::string base = "enc.l" + std::to_string(l) + ".";
    Layer layer;
    layer.ln1_g = &attach(params, base + "ln1.g", 1, d, 0.0, init_seed, 1.0);
    layer.ln1_b = &attach(params, base + "ln1.b", 1, d, 0.0, init_seed);
    layer.ln2_g = &attach(params, base + "ln2.g", 1, d, 0.0, init_seed, 1.0);
    layer.ln2_b = &attach(params, base + "ln2.b", 1, d, 0.0, init_seed);
    layer.attn_bo = &attach(params, base + "attn.bo", 1, d, 0.0, init_seed);
    layer.w1 = &attach(params, base + "mlp.w1", d, 4 * d, std, init_seed);
    layer.b1 = &attach(params, base + "mlp.b1", 1, 4 * d, 0.0, init_seed);
    layer.w2 = &attach(params, base + "mlp.w2", 4 * d, d, std, init_seed);
    layer.b2 = &attach(params, base + "mlp.b2", 1, d, 0.0, init_seed);
    for (int h = 0; h < cfg_.heads; ++h) {
      std::string hb = base + "h" + std::to_string(h) + ".";
      Head head;
      head.wq = &attach(params, hb + "wq", d, dh, std, init_seed);
      head.bq = &attach(params, hb + "bq", 1, dh, 0.0, init_seed);
      head.wk = &attach(params, hb + "wk", d, dh, std, init_seed);
      head.bk = &attach(params, hb + "bk", 1, dh, 0.0, init_seed);
      head.wv = &attach(params, hb + "wv", d, dh, std, init_seed);
      head.bv = &attach(params, hb + "bv", 1, dh, 0.0, init_seed);
      head.wo = &attach(params, hb + "wo", dh, d, std, init_seed);
      layer.heads.push_back(head);
    }
    layers_.push_back(layer);
  }
}

namespace {

ag::Var maybe_dropout(ag::Tape& tape, ag::Var x, double p, bool training, Rng* rng) {
  if (!training || p <= 0.0) return x;
  if (!rng) throw ConfigError("training-mode encode requires a dropout rng");
  const Mat& v = tape.val(x);
  Mat mask(v.rows(), v.cols());
  double keep = 1.0 - p;
  for (int c = 0; c < v.cols(); ++c)
    for (int r = 0; r < v.rows(); ++r)
      mask(r, c) = rng->uniform_real() < p ? 0.0 : 1.0 / keep;
  return ag::cmul(x, tape.constant(std::move(mask)));
}

}  // namespace

ag::Var Encoder::encode(ag::Tape& tape, const std::vector<int>& ids, bool training,
                        Rng* dropout_rng) const {
  if (ids.empty()) throw DataError("encode: empty input");
  if (static_cast<int>(ids.size()) > cfg_.max_len)
    throw DataError("encode: input longer than max_len");
  for (int id : ids)
    if (id < 0 || id >= cfg_.vocab_size)
      throw DataError("encode: token id out of range: " + std::to_string(id));

  int len = static_cast<int>(ids.size());
  int dh = cfg_.hidden_dim / cfg_.heads;
  double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<int> positions(len);
  for (int i = 0; i < len; ++i) positions[i] = i;

  ag::Var tok = ag::gather_rows(tape.param(*tok_emb_), ids);
  ag::Var pos = ag::gather_rows(tape.param(*pos_emb_), positions);
  ag::Var x = ag::add(tok, pos);
  x = maybe_dropout(tape, x, cfg_.dropout, training, dropout_rng);

  // Additive attention mask: padded key positions go to -1e9, which
  // underflows to exactly zero weight after softmax.
  bool has_pad = false;
  Mat mask = Mat::Zero(len, len);
  for (int j = 0; j < len; ++j) {
    if (ids[j] == Vocabulary::kPad) {
      has_pad = true;
      mask.col(j).setConstant(-1e9);
    }
  }
  ag::Var mask_var = has_pad ? tape.constant(std::move(mask)) : ag::Var{};

  for (const auto& layer : layers_) {
    ag::Var a = ag::layer_norm(x, tape.param(*layer.ln1_g), tape.param(*layer.ln1_b));
    ag::Var attn;
    bool first = true;
    for (const auto& head : layer.heads) {
      ag::Var q = ag::add_rowvec(ag::matmul(a, tape.param(*head.wq)), tape.param(*head.bq));
      ag::Var k = ag::add_rowvec(ag::matmul(a, tape.param(*head.wk)), tape.param(*head.bk));
      ag::Var v = ag::add_rowvec(ag::matmul(a, tape.param(*head.wv)), tape.param(*head.bv));
      ag::Var scores = ag::scale(ag::matmul(q, ag::transpose(k)), inv_sqrt_dh);
      if (has_pad) scores = ag::add(scores, mask_var);
      ag::Var probs = ag::softmax_rows(scores);
      probs = maybe_dropout(tape, probs, cfg_.dropout, training, dropout_rng);
      ag::Var ctx = ag::matmul(probs, v);
      ag::Var proj = ag::matmul(ctx, tape.param(*head.wo));
      attn = first ? proj : ag::add(attn, proj);
      first = false;
    }
    attn = ag::add_rowvec(attn, tape.param(*layer.attn_bo));
    x = ag::add(x, maybe_dropout(tape, attn, cfg_.dropout, training, dropout_rng));

    ag::Var m = ag::layer_norm(x, tape.param(*layer.ln2_g), tape.param(*layer.ln2_b));
    ag::Var h1 = ag::gelu(ag::add_rowvec(ag::matmul(m, tape.param(*layer.w1)),
                                         tape.param(*layer.b1)));
    ag::Var mlp = ag::add_rowvec(ag::matmul(h1, tape.param(*layer.w2)),
                                 tape.param(*layer.b2));
    x = ag::add(x, maybe_dropout(tape, mlp, cfg_.dropout, training, dropout_rng));
  }
  return ag::layer_norm(x, tape.param(*ln_f_g_), tape.param(*ln_f_b_));
}

ag::Var Encoder::mlm_logits(ag::Tape& tape, ag::Var hidden,
                            const std::vector<int>& positions) const {
  for (int p : positions)
    if (p < 0 || p >= tape.val(hidden).rows())
      throw DataError("mlm_logits: position out of range: " + std::to_string(p));
  ag::Var sel = ag::gather_rows(hidden, positions);
  ag::Var logits = ag::matmul(sel, ag::transpose(tape.param(*tok_emb_)));
  return ag::add_rowvec(logits, tape.param(*mlm_bias_));
}

Mat Encoder::mlm_distributions(const std::vector<int>& ids,
                               const std::vector<int>& positions) const {
  ag::Tape tape;
  ag::Var h = encode(tape, ids);
  ag::Var logits = mlm_logits(tape, h, positions);
  ag::Var probs = ag::softmax_rows(logits);
  return tape.val(probs);
}

ag::Var Encoder::pool(ag::Tape& tape, ag::Var hidden) const {
  if (tape.val(hidden).rows() == 0) throw DataError("pool: empty sequence");
  return ag::gather_rows(hidden, {0});
}

Mat Encoder::encode_eval(const std::vector<int>& ids) const {
  ag::Tape tape;
  return tape.val(encode(tape, ids));
}

}  // namespace msdp
