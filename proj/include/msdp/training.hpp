#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msdp/encoder.hpp"
#include "msdp/episodes.hpp"
#include "msdp/evaluation.hpp"
#include "msdp/pretrain.hpp"
#include "msdp/proto_classifier.hpp"
#include "msdp/span_extractor.hpp"

namespace msdp {

struct ModelConfig {
  EncoderConfig encoder;
  int span_head_dim = 0;  // 0 -> hidden_dim / 2
  int max_span_len = 8;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// Encoder + span scorer + vocabulary over one parameter store. Checkpoints
// are a parameter blob with a JSON manifest; the vocabulary rides in a
// sidecar file whose hash the manifest pins.
class Model {
 public:
  Model(const ModelConfig& cfg, Vocabulary vocab, uint64_t init_seed);

  Model(Model&&) = default;
  Model& operator=(Model&&) = delete;

  static Model load(const std::string& ckpt_path);
  void save(const std::string& ckpt_path, nlohmann::json manifest_extra = {}) const;

  Encoder& encoder() const { return *encoder_; }
  SpanScorer& scorer() const { return *scorer_; }
  const Vocabulary& vocab() const { return vocab_; }
  ParamStore& params() { return params_; }
  const ModelConfig& config() const { return cfg_; }

  int step = 0;
  uint64_t init_seed = 0;
  std::vector<double> loss_history;  // most recent logged joint losses

 private:
  Model(const ModelConfig& cfg, Vocabulary vocab);

  ModelConfig cfg_;
  Vocabulary vocab_;
  ParamStore params_;
  std::unique_ptr<Encoder> encoder_;
  std::unique_ptr<SpanScorer> scorer_;
};

struct PretrainConfig {
  double lr = 1e-5;
  int batch_size = 8;
  int epochs = 5;
  double alpha = 0.6;
  double tau = 0.5;
  int k_rd = 5;
  int k_nd = 3;
  int n_mask = 4;
  uint64_t seed = 0;
  bool use_mlm = true;  // ablation switches; both on in the full model
  bool use_scl = true;
  std::string dump_instances_path;  // JSONL instance dump when non-empty

  nlohmann::json to_json() const;
  static PretrainConfig from_json(const nlohmann::json& j);
  void validate() const;
};

struct LossRow {
  int step = 0;
  double l_mlm = 0.0;        // per-sample sum over masked tokens, batch mean
  double l_mlm_token = 0.0;  // per-token mean, for logging
  double l_scl = 0.0;
  double l_span = 0.0;
  double l_cls = 0.0;
  double joint = 0.0;
};

struct TrainResult {
  std::vector<LossRow> curve;
  int steps = 0;
};

// Joint demonstration-MLM + class-contrastive pre-training over the
// downstream training split. One optimizer update per step; deterministic
// per seed in single-threaded mode.
TrainResult run_pretraining(Model& model, const std::vector<Sentence>& corpus,
                            const EntityIndex& index, const PretrainConfig& cfg);

struct EpisodeTrainConfig {
  double lr = 3e-5;
  double warmup_ratio = 0.1;
  int episode_batch = 4;
  int t_span_only = 2000;  // toy runs scale this down
  int max_steps = 0;
  int eval_interval = 200;  // checkpoint/log interval
  uint64_t seed = 0;
  PrototypeOptions prototypes;      // ablation switches for the cls views
  std::string checkpoint_dir;       // periodic checkpoints when non-empty

  nlohmann::json to_json() const;
  static EpisodeTrainConfig from_json(const nlohmann::json& j);
  void validate() const;
};

// Episodic training: span loss on support from step 0, classification loss
// on query joining after t_span_only steps, linear warmup, global-norm
// clipping.
TrainResult run_episode_training(Model& model, const std::vector<Episode>& episodes,
                                 const EpisodeTrainConfig& cfg);

// Per episode: original-family prototypes from support, span decoding and
// prototype typing on query. Query gold spans are never read.
std::vector<EpisodePredictions> infer(const Model& model,
                                      const std::vector<Episode>& episodes,
                                      int workers = 1);

// Representation dump rows for external visualization.
void dump_representations(const Model& model, const std::vector<Episode>& episodes,
                          const std::string& path);

std::string loss_curve_csv(const TrainResult& result);

}  // namespace msdp
