#include "msdp/ablation.hpp"

#include <map>
#include <sstream>

#include "msdp/errors.hpp"

namespace msdp {

std::vector<std::string> known_variants() {
  return {"full",
          "no_demo_mlm",
          "no_contrastive",
          "no_class_oriented_proto",
          "no_contextual_proto",
          "no_pretrain",
          "base"};
}

VariantSpec variant_from_name(const std::string& name) {
  VariantSpec v;
  v.name = name;
  if (name == "full") return v;
  if (name == "no_demo_mlm") {
    v.demo_mlm = false;
    return v;
  }
  if (name == "no_contrastive") {
    v.contrastive = false;
    return v;
  }
  if (name == "no_class_oriented_proto") {
    v.class_oriented_proto = false;
    return v;
  }
  if (name == "no_contextual_proto") {
    v.contextual_proto = false;
    return v;
  }
  if (name == "no_pretrain") {
    v.pretrain = false;
    return v;
  }
  if (name == "base") {
    v.pretrain = false;
    v.class_oriented_proto = false;
    v.contextual_proto = false;
    return v;
  }
  throw ConfigError("unknown ablation variant: " + name);
}

Model train_variant(const VariantSpec& spec, const std::vector<Sentence>& corpus,
                    const std::vector<Episode>& train_episodes, const ModelConfig& model_cfg,
                    PretrainConfig pretrain_cfg, EpisodeTrainConfig train_cfg,
                    uint64_t seed) {
  EntityIndex index = build_entity_index(corpus);
  std::vector<std::string> extra = index.labels();
  extra.push_back("is");
  extra.push_back("O");
  Vocabulary vocab = Vocabulary::build(corpus, extra);

  Model model(model_cfg, std::move(vocab), derive_seed(seed, "model-init"));

  if (spec.pretrain) {
    pretrain_cfg.seed = derive_seed(seed, "pretrain");
    pretrain_cfg.use_mlm = spec.demo_mlm;
    pretrain_cfg.use_scl = spec.contrastive;
    run_pretraining(model, corpus, index, pretrain_cfg);
  }

  train_cfg.seed = derive_seed(seed, "train");
  train_cfg.prototypes.class_oriented = spec.class_oriented_proto;
  train_cfg.prototypes.contextual = spec.contextual_proto;
  run_episode_training(model, train_episodes, train_cfg);
  return model;
}

std::vector<AblationRow> run_ablation(const std::vector<Sentence>& corpus,
                                      const std::vector<Episode>& train_episodes,
                                      const std::vector<Episode>& test_episodes,
                                      const AblationConfig& cfg, int workers) {
  std::vector<AblationRow> rows;
  for (const auto& name : cfg.variants) {
    VariantSpec spec = variant_from_name(name);
    for (uint64_t seed : cfg.seeds) {
      Model model = train_variant(spec, corpus, train_episodes, cfg.model, cfg.pretrain,
                                  cfg.train, seed);
      auto predictions = infer(model, test_episodes, workers);
      AblationRow row;
      row.variant = name;
      row.seed = seed;
      row.summary = evaluate_predictions(test_episodes, predictions);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string ablation_table_csv(const std::vector<AblationRow>& rows) {
  std::map<std::string, std::vector<const AblationRow*>> by_variant;
  std::vector<std::string> order;
  for (const auto& row : rows) {
    if (!by_variant.count(row.variant)) order.push_back(row.variant);
    by_variant[row.variant].push_back(&row);
  }

  std::ostringstream out;
  out << "variant,seeds,micro_f1_mean,micro_f1_std,episode_f1_mean,extractor_p_mean,"
         "extractor_r_mean,fp_type_rate_mean\n";
  for (const auto& name : order) {
    const auto& group = by_variant[name];
    std::vector<double> f1, ep_f1, xp, xr, fpt;
    for (const auto* row : group) {
      f1.push_back(row->summary.micro.f1);
      ep_f1.push_back(row->summary.per_episode_mean_f1);
      xp.push_back(row->summary.extractor_precision);
      xr.push_back(row->summary.extractor_recall);
      fpt.push_back(row->summary.errors.fp_type_rate);
    }
    out << name << "," << group.size() << "," << mean(f1) << "," << sample_std(f1) << ","
        << mean(ep_f1) << "," << mean(xp) << "," << mean(xr) << "," << mean(fpt) << "\n";
  }
  return out.str();
}

}  // namespace msdp
