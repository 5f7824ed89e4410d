#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <utility>
#include <vector>

namespace msdp {

using Mat = Eigen::MatrixXd;

struct Param {
  std::string name;
  Mat value;
  Mat grad;  // accumulated across tapes until the optimizer consumes it
  Mat m, v;  // Adam moment estimates
};

namespace ag {

class Tape;

// Cheap handle into a tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
};

// Reverse-mode tape over Eigen matrices. One tape per loss evaluation;
// backward() walks the nodes in reverse creation order and flushes leaf
// gradients into their bound Param buffers.
class Tape {
 public:
  Var constant(Mat value);
  Var scalar(double value);
  Var param(Param& p);  // cached: one leaf per Param per tape

  const Mat& val(Var v) const;
  const Mat& grad(Var v) const;  // valid after backward()

  void backward(Var loss);  // loss must be 1x1

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat owned;
    const Mat* external = nullptr;  // set for param leaves
    Mat grad;
    std::function<void(Tape&)> back;
    Param* bound = nullptr;
    bool needs_grad = false;

    const Mat& value() const { return external ? *external : owned; }
  };

  Var make(Mat value, bool needs_grad, std::function<void(Tape&)> back);
  Node& node(Var v) { return nodes_[v.id]; }
  void accum(Var v, const Mat& g);

  std::vector<Node> nodes_;
  std::map<Param*, int> param_leaves_;

  friend Var add(Var a, Var b);
  friend Var sub(Var a, Var b);
  friend Var scale(Var a, double c);
  friend Var add_rowvec(Var a, Var b);
  friend Var matmul(Var a, Var b);
  friend Var transpose(Var a);
  friend Var cmul(Var a, Var b);
  friend Var gather_rows(Var a, std::vector<int> rows);
  friend Var gather_cells(Var a, std::vector<std::pair<int, int>> cells);
  friend Var concat_rows(const std::vector<Var>& parts);
  friend Var softmax_rows(Var a);
  friend Var mean_rows(Var a);
  friend Var sum_all(Var a);
  friend Var layer_norm(Var a, Var gamma, Var beta, double eps);
  friend Var gelu(Var a);
  friend Var ce_loss_rows(Var logits, std::vector<int> targets);
  friend Var log1p_sum_exp(Var colvec);
  friend Var logsumexp(Var colvec);
  friend Var cos_sim(Var u, Var v);
};

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double c);
Var add_rowvec(Var a, Var b);  // b is 1xC, broadcast over rows of a
Var matmul(Var a, Var b);
Var transpose(Var a);
Var cmul(Var a, Var b);
Var gather_rows(Var a, std::vector<int> rows);
Var gather_cells(Var a, std::vector<std::pair<int, int>> cells);  // -> n x 1
Var concat_rows(const std::vector<Var>& parts);
Var softmax_rows(Var a);
Var mean_rows(Var a);  // -> 1 x C
Var sum_all(Var a);    // -> 1 x 1
Var layer_norm(Var a, Var gamma, Var beta, double eps = 1e-5);
Var gelu(Var a);

// Sum over rows of (logsumexp(row) - row[target]); numerically stable
// softmax cross-entropy with integer targets.
Var ce_loss_rows(Var logits, std::vector<int> targets);

// log(1 + sum_i exp(v_i)) over an n x 1 vector, overflow-safe.
Var log1p_sum_exp(Var colvec);

// log(sum_i exp(v_i)) over an n x 1 vector.
Var logsumexp(Var colvec);

// Cosine similarity of two 1xD rows -> 1x1. Throws on zero-norm input.
Var cos_sim(Var u, Var v);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }

}  // namespace ag
}  // namespace msdp
