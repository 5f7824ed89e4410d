#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msdp/autograd.hpp"
#include "msdp/rng.hpp"

namespace msdp {

// Named parameter matrices with Adam state. Pointers stay stable across
// creation, so tapes may hold Param* leaves.
class ParamStore {
 public:
  Param& create(const std::string& name, int rows, int cols);
  Param& get(const std::string& name);
  const Param& get(const std::string& name) const;
  bool has(const std::string& name) const;

  std::vector<Param*> all();
  std::vector<const Param*> all() const;

  void zero_grads();
  double grad_norm() const;
  size_t count() const { return order_.size(); }

 private:
  std::vector<std::unique_ptr<Param>> params_;
  std::vector<Param*> order_;
  std::map<std::string, Param*> by_name_;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // global norm; <= 0 disables clipping
};

// Adam with bias-corrected first/second moment estimates and global-norm
// gradient clipping. The learning rate is supplied per step so warmup
// schedules live outside the optimizer.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(ParamStore& params, double lr);
  int steps_taken() const { return t_; }

 private:
  AdamConfig cfg_;
  int t_ = 0;
};

// Linear warmup to peak over warmup_ratio * max_steps, constant afterwards.
double warmup_lr(double peak, int step, int max_steps, double warmup_ratio);

// Checkpoint file: "MSDPCKPT1" magic, JSON manifest, then raw little-endian
// doubles for every parameter in manifest order. Round-trips bitwise.
void save_checkpoint(const std::string& path, const ParamStore& params,
                     const nlohmann::json& manifest);
nlohmann::json load_checkpoint(const std::string& path, ParamStore& params);

uint64_t file_fnv1a(const std::string& path);

}  // namespace msdp
