#include "msdp/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "msdp/errors.hpp"

namespace msdp {

Param& ParamStore::create(const std::string& name, int rows, int cols) {
  if (by_name_.count(name)) throw ConfigError("duplicate parameter: " + name);
  auto p = std::make_unique<Param>();
  p->name = name;
  p->value = Mat::Zero(rows, cols);
  p->m = Mat::Zero(rows, cols);
  p->v = Mat::Zero(rows, cols);
  Param* raw = p.get();
  params_.push_back(std::move(p));
  order_.push_back(raw);
  by_name_[name] = raw;
  return *raw;
}

Param& ParamStore::get(const std::string& name) {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw ConfigError("unknown parameter: " + name);
  return *it->second;
}

const Param& ParamStore::get(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw ConfigError("unknown parameter: " + name);
  return *it->second;
}

bool ParamStore::has(const std::string& name) const { return by_name_.count(name) > 0; }

std::vector<Param*> ParamStore::all() { return order_; }

std::vector<const Param*> ParamStore::all() const {
  return {order_.begin(), order_.end()};
}

void ParamStore::zero_grads() {
  for (Param* p : order_) p->grad.resize(0, 0);
}

double ParamStore::grad_norm() const {
  double sq = 0.0;
  for (const Param* p : order_)
    if (p->grad.size() != 0) sq += p->grad.squaredNorm();
  return std::sqrt(sq);
}

void Adam::step(ParamStore& params, double lr) {
  ++t_;
  double scale = 1.0;
  if (cfg_.clip_norm > 0.0) {
    double norm = params.grad_norm();
    if (norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;
  }
  double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (Param* p : params.all()) {
    if (p->grad.size() == 0) continue;
    Mat g = p->grad * scale;
    p->m = cfg_.beta1 * p->m + (1.0 - cfg_.beta1) * g;
    p->v = cfg_.beta2 * p->v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    Mat mhat = p->m / bc1;
    Mat vhat = p->v / bc2;
    p->value -= lr * mhat.cwiseQuotient((vhat.cwiseSqrt().array() + cfg_.eps).matrix());
  }
  params.zero_grads();
}

double warmup_lr(double peak, int step, int max_steps, double warmup_ratio) {
  double warm_steps = warmup_ratio * max_steps;
  if (warm_steps <= 0.0) return peak;
  if (step >= warm_steps) return peak;
  return peak * (static_cast<double>(step) / warm_steps);
}

namespace {
constexpr char kMagic[] = "MSDPCKPT1\n";

void write_u64(std::ostream& out, uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), 8);
}

uint64_t read_u64(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return v;
}
}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const nlohmann::json& manifest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);

  nlohmann::json full = manifest;
  nlohmann::json plist = nlohmann::json::array();
  for (const Param* p : params.all())
    plist.push_back({{"name", p->name},
                     {"rows", p->value.rows()},
                     {"cols", p->value.cols()}});
  full["parameters"] = std::move(plist);
  std::string mjson = full.dump();

  out.write(kMagic, sizeof(kMagic) - 1);
  write_u64(out, mjson.size());
  out.write(mjson.data(), static_cast<std::streamsize>(mjson.size()));
  for (const Param* p : params.all()) {
    static_assert(sizeof(double) == 8);
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(double)));
  }
  if (!out) throw DataError("checkpoint write failed: " + path);
}

nlohmann::json load_checkpoint(const std::string& path, ParamStore& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[sizeof(kMagic) - 1];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw DataError("not a checkpoint file: " + path);
  uint64_t mlen = read_u64(in);
  std::string mjson(mlen, '\0');
  in.read(mjson.data(), static_cast<std::streamsize>(mlen));
  nlohmann::json manifest = nlohmann::json::parse(mjson);

  for (const auto& pj : manifest.at("parameters")) {
    std::string name = pj.at("name").get<std::string>();
    int rows = pj.at("rows").get<int>();
    int cols = pj.at("cols").get<int>();
    Param& p = params.has(name) ? params.get(name) : params.create(name, rows, cols);
    if (p.value.rows() != rows || p.value.cols() != cols)
      throw DataError("checkpoint/config mismatch for parameter " + name);
    in.read(reinterpret_cast<char*>(p.value.data()),
            static_cast<std::streamsize>(p.value.size() * sizeof(double)));
  }
  if (!in) throw DataError("checkpoint truncated: " + path);
  return manifest;
}

uint64_t file_fnv1a(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file for hashing: " + path);
  uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace msdp
