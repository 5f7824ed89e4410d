#pragma once

#include <string>
#include <vector>

#include "msdp/evaluation.hpp"
#include "msdp/training.hpp"

namespace msdp {

// Named model variants. Each one toggles exactly one component relative to
// "full" except "base", which drops pre-training and both extra prototype
// families at once.
struct VariantSpec {
  std::string name;
  bool pretrain = true;
  bool demo_mlm = true;
  bool contrastive = true;
  bool class_oriented_proto = true;
  bool contextual_proto = true;
};

VariantSpec variant_from_name(const std::string& name);
std::vector<std::string> known_variants();

struct AblationConfig {
  ModelConfig model;
  PretrainConfig pretrain;
  EpisodeTrainConfig train;
  std::vector<std::string> variants;
  std::vector<uint64_t> seeds;
};

struct AblationRow {
  std::string variant;
  uint64_t seed = 0;
  EvalSummary summary;
};

// Trains a fresh model per (variant, seed) on the training episodes and
// evaluates it on the test episodes. The pre-training corpus must be the
// training split the episodes were sampled from.
Model train_variant(const VariantSpec& spec, const std::vector<Sentence>& corpus,
                    const std::vector<Episode>& train_episodes, const ModelConfig& model_cfg,
                    PretrainConfig pretrain_cfg, EpisodeTrainConfig train_cfg,
                    uint64_t seed);

std::vector<AblationRow> run_ablation(const std::vector<Sentence>& corpus,
                                      const std::vector<Episode>& train_episodes,
                                      const std::vector<Episode>& test_episodes,
                                      const AblationConfig& cfg, int workers = 1);

// variant, n_seeds, mean/std of micro F1 and the other headline metrics.
std::string ablation_table_csv(const std::vector<AblationRow>& rows);

}  // namespace msdp
