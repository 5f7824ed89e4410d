#include "msdp/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "msdp/errors.hpp"

namespace msdp {

nlohmann::json ModelConfig::to_json() const {
  return {{"encoder", encoder.to_json()},
          {"span_head_dim", span_head_dim},
          {"max_span_len", max_span_len}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  if (j.contains("encoder")) c.encoder = EncoderConfig::from_json(j["encoder"]);
  c.span_head_dim = j.value("span_head_dim", c.span_head_dim);
  c.max_span_len = j.value("max_span_len", c.max_span_len);
  return c;
}

Model::Model(const ModelConfig& cfg, Vocabulary vocab)
    : cfg_(cfg), vocab_(std::move(vocab)) {}

Model::Model(const ModelConfig& cfg, Vocabulary vocab, uint64_t seed)
    : Model(cfg, std::move(vocab)) {
  cfg_.encoder.vocab_size = vocab_.size();
  init_seed = seed;
  encoder_ = std::make_unique<Encoder>(cfg_.encoder, params_, seed);
  scorer_ = std::make_unique<SpanScorer>(cfg_.encoder.hidden_dim, cfg_.span_head_dim,
                                         cfg_.max_span_len, params_, seed);
}

void Model::save(const std::string& ckpt_path, nlohmann::json manifest_extra) const {
  std::string vocab_path = ckpt_path + ".vocab";
  vocab_.save(vocab_path);

  nlohmann::json manifest = std::move(manifest_extra);
  manifest["model"] = cfg_.to_json();
  manifest["config_hash"] = fnv1a(cfg_.to_json().dump());
  manifest["vocab_hash"] = vocab_.content_hash();
  manifest["step"] = step;
  manifest["seed"] = init_seed;
  manifest["loss_history"] = loss_history;
  save_checkpoint(ckpt_path, params_, manifest);
}

Model Model::load(const std::string& ckpt_path) {
  Vocabulary vocab = Vocabulary::load(ckpt_path + ".vocab");
  ParamStore params;
  nlohmann::json manifest = load_checkpoint(ckpt_path, params);
  ModelConfig cfg = ModelConfig::from_json(manifest.at("model"));
  if (manifest.at("vocab_hash").get<uint64_t>() != vocab.content_hash())
    throw DataError("checkpoint/vocabulary mismatch for " + ckpt_path);
  if (cfg.encoder.vocab_size != vocab.size())
    throw DataError("checkpoint vocab size differs from vocabulary file");

  Model m(cfg, std::move(vocab));
  m.params_ = std::move(params);
  m.encoder_ = std::make_unique<Encoder>(m.cfg_.encoder, m.params_, 0);
  m.scorer_ = std::make_unique<SpanScorer>(m.cfg_.encoder.hidden_dim, m.cfg_.span_head_dim,
                                           m.cfg_.max_span_len, m.params_, 0);
  m.step = manifest.value("step", 0);
  m.init_seed = manifest.value("seed", 0ULL);
  if (manifest.contains("loss_history"))
    m.loss_history = manifest["loss_history"].get<std::vector<double>>();
  return m;
}

nlohmann::json PretrainConfig::to_json() const {
  return {{"lr", lr},         {"batch_size", batch_size},
          {"epochs", epochs}, {"alpha", alpha},
          {"tau", tau},       {"k_rd", k_rd},
          {"k_nd", k_nd},     {"n_mask", n_mask},
          {"seed", seed},     {"use_mlm", use_mlm},
          {"use_scl", use_scl}};
}

PretrainConfig PretrainConfig::from_json(const nlohmann::json& j) {
  PretrainConfig c;
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.alpha = j.value("alpha", c.alpha);
  c.tau = j.value("tau", c.tau);
  c.k_rd = j.value("k_rd", c.k_rd);
  c.k_nd = j.value("k_nd", c.k_nd);
  c.n_mask = j.value("n_mask", c.n_mask);
  c.seed = j.value("seed", c.seed);
  c.use_mlm = j.value("use_mlm", c.use_mlm);
  c.use_scl = j.value("use_scl", c.use_scl);
  c.dump_instances_path = j.value("dump_instances_path", c.dump_instances_path);
  return c;
}

void PretrainConfig::validate() const {
  if (lr <= 0 || batch_size < 1 || epochs < 1 || tau <= 0 || k_rd < 0 || k_nd < 0 ||
      n_mask < 1)
    throw ConfigError("pretrain config: all quantities must be positive");
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("pretrain config: alpha not in [0,1]");
  if (!use_mlm && !use_scl)
    throw ConfigError("pretrain config: at least one pre-training task must be enabled");
}

namespace {

struct InstanceDump {
  std::ofstream out;
  explicit InstanceDump(const std::string& path) {
    if (!path.empty()) {
      out.open(path);
      if (!out) throw DataError("cannot write instance dump: " + path);
    }
  }
  void write(const DemonstrationSample& sample, const MaskedInstance& inst,
             const ContrastiveVariants& variants) {
    if (!out.is_open()) return;
    nlohmann::json j;
    j["rendered"] = sample.rendered;
    j["masked_positions"] = inst.masked_positions;
    j["targets"] = inst.target_ids;
    j["positives"] = variants.positives;
    j["hard_negative"] = variants.hard_negative;
    out << j.dump() << "\n";
  }
};

}  // namespace

TrainResult run_pretraining(Model& model, const std::vector<Sentence>& corpus,
                            const EntityIndex& index, const PretrainConfig& cfg) {
  cfg.validate();
  const Encoder& encoder = model.encoder();
  int max_len = encoder.config().max_len;

  std::vector<size_t> pool;
  for (size_t i = 0; i < corpus.size(); ++i)
    if (!corpus[i].spans.empty()) pool.push_back(i);
  if (pool.empty()) throw DataError("pre-training corpus has no entity-bearing sentences");
  if (cfg.use_scl && index.size() < 2)
    throw DataError("class contrastive discrimination needs at least two labels");

  std::vector<std::string> label_set = index.labels();
  InstanceDump dump(cfg.dump_instances_path);

  Adam opt;
  TrainResult result;
  int steps_per_epoch =
      static_cast<int>((pool.size() + cfg.batch_size - 1) / cfg.batch_size);
  int total_steps = cfg.epochs * steps_per_epoch;
  uint64_t sample_counter = 0;

  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<size_t> order = pool;
    Rng shuffle_rng(derive_seed(cfg.seed, "pretrain-shuffle", epoch));
    shuffle_rng.shuffle(order);

    for (size_t start = 0; start < order.size(); start += cfg.batch_size, ++step) {
      size_t stop = std::min(order.size(), start + cfg.batch_size);
      Rng dropout_rng(derive_seed(cfg.seed, "pretrain-dropout", step));

      ag::Tape tape;
      ag::Var mlm_sum = tape.scalar(0.0);
      int masked_total = 0;
      int mlm_samples = 0;
      ContrastiveGraphBatch batch;
      batch.tau = cfg.tau;

      for (size_t bi = start; bi < stop; ++bi, ++sample_counter) {
        const Sentence& x = corpus[order[bi]];

        std::optional<DemonstrationSample> sample;
        MaskedInstance inst;
        if (cfg.use_mlm) {
          sample = build_demonstration(x, index, cfg.k_rd, cfg.k_nd,
                                       derive_seed(cfg.seed, "demo", sample_counter));
          if (sample) {
            inst = mask_demonstration(*sample, model.vocab(), cfg.n_mask,
                                      derive_seed(cfg.seed, "mask", sample_counter));
            truncate_instance(inst, max_len);
            if (!inst.masked_positions.empty()) {
              ag::Var hidden = encoder.encode(tape, inst.input_ids, true, &dropout_rng);
              ag::Var logits = encoder.mlm_logits(tape, hidden, inst.masked_positions);
              mlm_sum = ag::add(mlm_sum, ag::ce_loss_rows(logits, inst.target_ids));
              masked_total += static_cast<int>(inst.masked_positions.size());
              ++mlm_samples;
            }
          }
        }

        if (cfg.use_scl && !x.spans.empty()) {
          ContrastiveVariants variants = build_contrastive_samples(
              x, label_set, derive_seed(cfg.seed, "contrastive", sample_counter));
          auto pooled = [&](const std::vector<std::string>& tokens) {
            TokenizedSentence ts = tokenize(model.vocab(), tokens, max_len);
            ag::Var h = encoder.encode(tape, ts.ids, true, &dropout_rng);
            return encoder.pool(tape, h);
          };
          ContrastiveGraphBatch::Item item;
          item.anchor = pooled(x.tokens);
          for (const auto& p : variants.positives) item.positives.push_back(pooled(p));
          item.hard_negative = pooled(variants.hard_negative);
          item.tag = dominant_class(x);
          batch.items.push_back(std::move(item));

          if (sample) dump.write(*sample, inst, variants);
        } else if (sample) {
          dump.write(*sample, inst, ContrastiveVariants{});
        }
      }

      for (size_t i = 0; i < batch.items.size(); ++i)
        batch.negatives.push_back(
            {batch.items[i].anchor, batch.items[i].tag, static_cast<int>(i)});

      // Per-sample sum over masked tokens, averaged over the batch; the
      // per-token mean is logged alongside.
      double mlm_value = 0.0, scl_value = 0.0, mlm_per_token = 0.0;
      ag::Var joint = tape.scalar(0.0);
      if (cfg.use_mlm && masked_total > 0) {
        ag::Var mlm_batch = ag::scale(mlm_sum, 1.0 / mlm_samples);
        mlm_value = tape.val(mlm_batch)(0, 0);
        mlm_per_token = tape.val(mlm_sum)(0, 0) / masked_total;
        joint = ag::add(joint, ag::scale(mlm_batch, cfg.alpha));
      }
      if (cfg.use_scl && !batch.items.empty()) {
        ag::Var scl = scl_loss(tape, batch);
        scl_value = tape.val(scl)(0, 0);
        joint = ag::add(joint, ag::scale(scl, 1.0 - cfg.alpha));
      }

      double joint_value = tape.val(joint)(0, 0);
      tape.backward(joint);
      opt.step(model.params(), cfg.lr);

      LossRow row;
      row.step = model.step + step;
      row.l_mlm = mlm_value;
      row.l_mlm_token = mlm_per_token;
      row.l_scl = scl_value;
      row.joint = joint_value;
      result.curve.push_back(row);
      model.loss_history.push_back(joint_value);
      if (model.loss_history.size() > 200)
        model.loss_history.erase(model.loss_history.begin());
    }
  }
  model.step += total_steps;
  result.steps = total_steps;
  return result;
}

nlohmann::json EpisodeTrainConfig::to_json() const {
  return {{"lr", lr},
          {"warmup_ratio", warmup_ratio},
          {"episode_batch", episode_batch},
          {"t_span_only", t_span_only},
          {"max_steps", max_steps},
          {"eval_interval", eval_interval},
          {"seed", seed},
          {"use_class_oriented_proto", prototypes.class_oriented},
          {"use_contextual_proto", prototypes.contextual}};
}

EpisodeTrainConfig EpisodeTrainConfig::from_json(const nlohmann::json& j) {
  EpisodeTrainConfig c;
  c.lr = j.value("lr", c.lr);
  c.warmup_ratio = j.value("warmup_ratio", c.warmup_ratio);
  c.episode_batch = j.value("episode_batch", c.episode_batch);
  c.t_span_only = j.value("t_span_only", c.t_span_only);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.eval_interval = j.value("eval_interval", c.eval_interval);
  c.seed = j.value("seed", c.seed);
  c.prototypes.class_oriented = j.value("use_class_oriented_proto", true);
  c.prototypes.contextual = j.value("use_contextual_proto", true);
  c.checkpoint_dir = j.value("checkpoint_dir", c.checkpoint_dir);
  return c;
}

void EpisodeTrainConfig::validate() const {
  if (lr <= 0 || episode_batch < 1 || max_steps < 1 || eval_interval < 1)
    throw ConfigError("train config: all quantities must be positive");
  if (warmup_ratio < 0.0 || warmup_ratio > 1.0)
    throw ConfigError("train config: warmup_ratio not in [0,1]");
  if (t_span_only < 0 || t_span_only >= max_steps)
    throw ConfigError("train config: t_span_only must lie in [0, max_steps)");
}

namespace {

void check_episode(const Episode& ep, size_t index) {
  std::set<std::string> types(ep.types.begin(), ep.types.end());
  std::map<std::string, int> support_counts;
  for (const auto& s : ep.support) {
    validate_sentence(s);
    for (const auto& span : s.spans) {
      if (!types.count(span.label))
        throw DataError("episode " + std::to_string(index) + ": support label \"" +
                        span.label + "\" outside episode types");
      ++support_counts[span.label];
    }
  }
  for (const auto& t : ep.types)
    if (support_counts[t] < 1)
      throw DataError("episode " + std::to_string(index) + ": type \"" + t +
                      "\" has no support mention");
  for (const auto& s : ep.query) {
    validate_sentence(s);
    for (const auto& span : s.spans)
      if (!types.count(span.label))
        throw DataError("episode " + std::to_string(index) + ": query label \"" +
                        span.label + "\" outside episode types");
  }
}

// Mean span loss over a set of sentences on one tape.
ag::Var support_span_loss(ag::Tape& tape, const Model& model,
                          const std::vector<Sentence>& sentences, bool training,
                          Rng* dropout_rng) {
  const SpanScorer& scorer = model.scorer();
  ag::Var total = tape.scalar(0.0);
  int counted = 0;
  for (const auto& sent : sentences) {
    EncodedTokens enc =
        encode_tokens(tape, model.encoder(), model.vocab(), sent.tokens, training,
                      dropout_rng);
    if (enc.n_tokens == 0) continue;
    auto cells = candidate_cells(enc.n_tokens, scorer.max_span_len());
    Sentence visible = sent;
    std::erase_if(visible.spans,
                  [&](const EntitySpan& sp) { return sp.end >= enc.n_tokens; });
    auto gold = gold_cells(visible, scorer.max_span_len());
    ag::Var f = scorer.scores(tape, enc.rows);
    total = ag::add(total, span_loss(tape, f, cells, gold));
    ++counted;
  }
  if (counted == 0) throw DataError("span loss: no usable sentences");
  return ag::scale(total, 1.0 / counted);
}

}  // namespace

TrainResult run_episode_training(Model& model, const std::vector<Episode>& episodes,
                                 const EpisodeTrainConfig& cfg) {
  cfg.validate();
  if (episodes.empty()) throw DataError("no training episodes");
  for (size_t i = 0; i < episodes.size(); ++i) check_episode(episodes[i], i);

  if (!cfg.checkpoint_dir.empty())
    std::filesystem::create_directories(cfg.checkpoint_dir);

  Adam opt;
  TrainResult result;
  std::vector<size_t> order(episodes.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  size_t cursor = 0;
  int epoch = 0;
  Rng shuffle_rng(derive_seed(cfg.seed, "train-shuffle", epoch));
  shuffle_rng.shuffle(order);

  for (int step = 0; step < cfg.max_steps; ++step) {
    Rng dropout_rng(derive_seed(cfg.seed, "train-dropout", step));
    bool joint_phase = step >= cfg.t_span_only;

    double span_value = 0.0, cls_value = 0.0;
    for (int b = 0; b < cfg.episode_batch; ++b) {
      if (cursor >= order.size()) {
        cursor = 0;
        ++epoch;
        Rng r(derive_seed(cfg.seed, "train-shuffle", epoch));
        r.shuffle(order);
      }
      const Episode& ep = episodes[order[cursor++]];

      ag::Tape tape;
      ag::Var loss = support_span_loss(tape, model, ep.support, true, &dropout_rng);
      span_value += tape.val(loss)(0, 0);

      if (joint_phase) {
        PrototypeSetGraph protos =
            build_prototypes(tape, model.encoder(), model.vocab(), ep.support, ep.types,
                             cfg.prototypes, true, &dropout_rng);
        ClsLossParts parts = cls_loss(tape, model.encoder(), model.vocab(), protos,
                                      ep.query, true, &dropout_rng);
        if (parts.n_spans > 0) {
          // per-span, per-view mean keeps the cls pressure comparable
          // across ablation variants with different view counts
          int views = 1 + (cfg.prototypes.class_oriented ? 1 : 0) +
                      (cfg.prototypes.contextual ? 1 : 0);
          ag::Var cls_mean = ag::scale(parts.total, 1.0 / (parts.n_spans * views));
          cls_value += tape.val(cls_mean)(0, 0);
          loss = ag::add(loss, cls_mean);
        }
      }
      // scale by batch share, then flush gradients into the store
      tape.backward(ag::scale(loss, 1.0 / cfg.episode_batch));
    }

    double lr = warmup_lr(cfg.lr, step, cfg.max_steps, cfg.warmup_ratio);
    opt.step(model.params(), lr);

    LossRow row;
    row.step = model.step + step;
    row.l_span = span_value / cfg.episode_batch;
    row.l_cls = cls_value / cfg.episode_batch;
    row.joint = row.l_span + row.l_cls;
    result.curve.push_back(row);
    model.loss_history.push_back(row.joint);
    if (model.loss_history.size() > 200)
      model.loss_history.erase(model.loss_history.begin());

    if (!cfg.checkpoint_dir.empty() && (step + 1) % cfg.eval_interval == 0) {
      std::string path =
          cfg.checkpoint_dir + "/step_" + std::to_string(model.step + step + 1) + ".ckpt";
      model.save(path);
    }
  }
  model.step += cfg.max_steps;
  result.steps = cfg.max_steps;
  return result;
}

namespace {

EpisodePredictions infer_episode(const Model& model, const Episode& ep) {
  PrototypeSet protos =
      build_prototypes_eval(model.encoder(), model.vocab(), ep.support, ep.types,
                            PrototypeOptions{.class_oriented = false, .contextual = false});
  EpisodePredictions out;
  for (const auto& sent : ep.query) {
    ag::Tape tape;
    EncodedTokens enc = encode_tokens(tape, model.encoder(), model.vocab(), sent.tokens);
    auto cells = candidate_cells(enc.n_tokens, model.scorer().max_span_len());
    Mat f = tape.val(model.scorer().scores(tape, enc.rows));
    auto decoded = decode_spans(f, cells);
    std::vector<Cell> extracted;
    for (const auto& d : decoded) extracted.push_back({d.start, d.end});
    out.extracted.push_back(extracted);
    out.typed.push_back(
        infer_span_types(model.encoder(), model.vocab(), protos, sent.tokens, extracted));
  }
  return out;
}

}  // namespace

std::vector<EpisodePredictions> infer(const Model& model,
                                      const std::vector<Episode>& episodes,
                                      int workers) {
  std::vector<EpisodePredictions> out(episodes.size());
  if (workers <= 1) {
    for (size_t i = 0; i < episodes.size(); ++i) out[i] = infer_episode(model, episodes[i]);
    return out;
  }
  std::vector<std::thread> threads;
  std::atomic<size_t> next{0};
  for (int w = 0; w < workers; ++w)
    threads.emplace_back([&]() {
      for (;;) {
        size_t i = next.fetch_add(1);
        if (i >= episodes.size()) return;
        out[i] = infer_episode(model, episodes[i]);
      }
    });
  for (auto& t : threads) t.join();
  return out;
}

void dump_representations(const Model& model, const std::vector<Episode>& episodes,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write representation dump: " + path);

  for (size_t e = 0; e < episodes.size(); ++e) {
    const Episode& ep = episodes[e];
    auto dump_sentence = [&](const Sentence& sent) {
      ag::Tape tape;
      EncodedTokens orig = encode_tokens(tape, model.encoder(), model.vocab(), sent.tokens);

      MaskView ctx_view = apply_mask(sent, ViewKind::kContextual);
      EncodedTokens ctx_enc =
          encode_tokens(tape, model.encoder(), model.vocab(), ctx_view.masked_tokens);
      ag::Var ctx = contextual_rep(tape, ctx_enc.rows);

      for (const auto& span : sent.spans) {
        if (span.end >= orig.n_tokens) continue;
        auto emit = [&](const std::string& view, const Mat& vec) {
          nlohmann::json j;
          j["episode_id"] = e;
          j["span"] = {span.start, span.end};
          j["gold_type"] = span.label;
          j["view"] = view;
          std::vector<double> v(vec.data(), vec.data() + vec.size());
          j["vector"] = v;
          out << j.dump() << "\n";
        };
        emit("original", tape.val(span_rep(tape, orig.rows, span.start, span.end)));

        MaskView cs_view = apply_mask(sent, ViewKind::kClassOriented, span.label, ep.types);
        EncodedTokens cs_enc =
            encode_tokens(tape, model.encoder(), model.vocab(), cs_view.masked_tokens);
        emit("class_oriented", tape.val(span_rep(tape, cs_enc.rows, span.start, span.end)));
        emit("contextual", tape.val(ctx));
      }
    };
    for (const auto& s : ep.support) dump_sentence(s);
    for (const auto& s : ep.query) dump_sentence(s);
  }
}

std::string loss_curve_csv(const TrainResult& result) {
  std::ostringstream out;
  out << "step,l_mlm,l_mlm_token,l_scl,l_span,l_cls,joint\n";
  for (const auto& row : result.curve)
    out << row.step << "," << row.l_mlm << "," << row.l_mlm_token << "," << row.l_scl
        << "," << row.l_span << "," << row.l_cls << "," << row.joint << "\n";
  return out.str();
}

}  // namespace msdp
