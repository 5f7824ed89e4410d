#include "msdp/autograd.hpp"

#include <cmath>
#include <numbers>

#include "msdp/errors.hpp"

namespace msdp::ag {

Var Tape::make(Mat value, bool needs_grad, std::function<void(Tape&)> back) {
  Node n;
  n.owned = std::move(value);
  n.back = std::move(back);
  n.needs_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Mat value) { return make(std::move(value), false, nullptr); }

Var Tape::scalar(double value) {
  Mat m(1, 1);
  m(0, 0) = value;
  return constant(std::move(m));
}

Var Tape::param(Param& p) {
  auto it = param_leaves_.find(&p);
  if (it != param_leaves_.end()) return Var{this, it->second};
  Node n;
  n.external = &p.value;
  n.bound = &p;
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  int id = static_cast<int>(nodes_.size()) - 1;
  param_leaves_[&p] = id;
  return Var{this, id};
}

const Mat& Tape::val(Var v) const { return nodes_[v.id].value(); }

const Mat& Tape::grad(Var v) const { return nodes_[v.id].grad; }

void Tape::accum(Var v, const Mat& g) {
  Node& n = node(v);
  if (!n.needs_grad) return;
  if (n.grad.size() == 0)
    n.grad = g;
  else
    n.grad += g;
}

void Tape::backward(Var loss) {
  if (val(loss).rows() != 1 || val(loss).cols() != 1)
    throw DataError("backward() expects a 1x1 loss");
  node(loss).grad = Mat::Ones(1, 1);
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0 || !n.back) continue;
    n.back(*this);
  }
  for (auto& n : nodes_) {
    if (n.bound && n.grad.size() != 0) {
      if (n.bound->grad.size() == 0)
        n.bound->grad = Mat::Zero(n.value().rows(), n.value().cols());
      n.bound->grad += n.grad;
    }
  }
}

namespace {

void check_same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw DataError("autograd: operands from different tapes");
}

}  // namespace

// The ops read operand values through the tape and register a backward
// closure capturing only Var handles (the tape vector may reallocate).

Var add(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  bool ng = t.node(a).needs_grad || t.node(b).needs_grad;
  Var out = t.make(t.val(a) + t.val(b), ng, nullptr);
  if (ng)
    t.node(out).back = [a, b, out](Tape& tp) {
      const Mat& g = tp.grad(out);
      tp.accum(a, g);
      tp.accum(b, g);
    };
  return out;
}

Var sub(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  bool ng = t.node(a).needs_grad || t.node(b).needs_grad;
  Var out = t.make(t.val(a) - t.val(b), ng, nullptr);
  if (ng)
    t.node(out).back = [a, b, out](Tape& tp) {
      const Mat& g = tp.grad(out);
      tp.accum(a, g);
      tp.accum(b, Mat(-g));
    };
  return out;
}

Var scale(Var a, double c) {
  Tape& t = *a.tape;
  bool ng = t.node(a).needs_grad;
  Var out = t.make(t.val(a) * c, ng, nullptr);
  if (ng)
    t.node(out).back = [a, c, out](Tape& tp) { tp.accum(a, Mat(tp.grad(out) * c)); };
  return out;
}

Var add_rowvec(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  if (t.val(b).rows() != 1 || t.val(b).cols() != t.val(a).cols())
    throw DataError("add_rowvec: bias must be 1 x cols(a)");
  Mat out_v = t.val(a);
  out_v.rowwise() += t.val(b).row(0);
  bool ng = t.node(a).needs_grad || t.node(b).needs_grad;
  Var out = t.make(std::move(out_v), ng, nullptr);
  if (ng)
    t.node(out).back = [a, b, out](Tape& tp) {
      const Mat& g = tp.grad(out);
      tp.accum(a, g);
      tp.accum(b, Mat(g.colwise().sum()));
    };
  return out;
}

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  if (t.val(a).cols() != t.val(b).rows()) throw DataError("matmul: shape mismatch");
  bool ng = t.node(a).needs_grad || t.node(b).needs_grad;
  Var out = t.make(t.val(a) * t.val(b), ng, nullptr);
  if (ng)
    t.node(out).back = [a, b, out](Tape& tp) {
      const Mat& g = tp.grad(out);
      tp.accum(a, Mat(g * tp.val(b).transpose()));
      tp.accum(b, Mat(tp.val(a).transpose() * g));
    };
  return out;
}

Var transpose(Var a) {
  Tape& t = *a.tape;
  bool ng = t.node(a).needs_grad;
  Var out = t.make(t.val(a).transpose(), ng, nullptr);
  if (ng)
    t.node(out).back = [a, out](Tape& tp) { tp.accum(a, Mat(tp.grad(out).transpose())); };
  return out;
}

Var cmul(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  bool ng = t.node(a).needs_grad || t.node(b).needs_grad;
  Var out = t.make(t.val(a).cwiseProduct(t.val(b)), ng, nullptr);
  if (ng)
    t.node(out).back = [a, b, out](Tape& tp) {
      const Mat& g = tp.grad(out);
      tp.accum(a, Mat(g.cwiseProduct(tp.val(b))));
      tp.accum(b, Mat(g.cwiseProduct(tp.val(a))));
    };
  return out;
}

Var gather_rows(Var a, std::vector<int> rows) {
  Tape& t = *a.tape;
  const Mat& av = t.val(a);
  Mat out_v(static_cast<int>(rows.size()), av.cols());
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= av.rows()) throw DataError("gather_rows: row out of range");
    out_v.row(static_cast<int>(i)) = av.row(rows[i]);
  }
  bool ng = t.node(a).needs_grad;
  Var out = t.make(std::move(out_v), ng, nullptr);
  if (ng)
    t.node(out).back = [a, rows = std::move(rows), out](Tape& tp) {
      const Mat& g = tp.grad(out);
      Mat da = Mat::Zero(tp.val(a).rows(), tp.val(a).cols());
      for (size_t i = 0; i < rows.size(); ++i) da.row(rows[i]) += g.row(static_cast<int>(i));
      tp.accum(a, da);
    };
  return out;
}

Var gather_cells(Var a, std::vector<std::pair<int, int>> cells) {
  Tape& t = *a.tape;
  const Mat& av = t.val(a);
  Mat out_v(static_cast<int>(cells.size()), 1);
  for (size_t i = 0; i < cells.size(); ++i) {
    auto [r, c] = cells[i];
    if (r < 0 || r >= av.rows() || c < 0 || c >= av.cols())
      throw DataError("gather_cells: cell out of range");
    out_v(static_cast<int>(i), 0) = av(r, c);
  }
  bool ng = t.node(a).needs_grad;
  Var out = t.make(std::move(out_v), ng, nullptr);
  if (ng)
    t.node(out).back = [a, cells = std::move(cells), out](Tape& tp) {
      const Mat& g = tp.grad(out);
      Mat da = Mat::Zero(tp.val(a).rows(), tp.val(a).cols());
      for (size_t i = 0; i < cells.size(); ++i)
        da(cells[i].first, cells[i].second) += g(static_cast<int>(i), 0);
      tp.accum(a, da);
    };
  return out;
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw DataError("concat_rows: empty input");
  Tape& t = *parts[0].tape;
  int total = 0;
  int cols = static_cast<int>(t.val(parts[0]).cols());
  bool ng = false;
  for (Var p : parts) {
    check_same_tape(parts[0], p);
    if (t.val(p).cols() != cols) throw DataError("concat_rows: column mismatch");
    total += static_cast<int>(t.val(p).rows());
    ng = ng || t.node(p).needs_grad;
  }
  Mat out_v(total, cols);
  int r = 0;
  for (Var p : parts) {
    out_v.middleRows(r, static_cast<int>(t.val(p).rows())) = t.val(p);
    r += static_cast<int>(t.val(p).rows());
  }
  Var out = t.make(std::move(out_v), ng, nullptr);
  if (ng)
    t.node(out).back = [parts, out](Tape& tp) {
      const Mat& g = tp.grad(out);
      int row = 0;
      for (Var p : parts) {
        int n = static_cast<int>(tp.val(p).rows());
        tp.accum(p, Mat(g.middleRows(row, n)));
        row += n;
      }
    };
  return out;
}

Var softmax_rows(Var a) {
  Tape& t = *a.tape;
  const Mat& av = t.val(a);
  Mat out_v(av.rows(), av.cols());
  for (int r = 0; r < av.rows(); ++r) {
    double m = av.row(r).maxCoeff();
    Eigen::RowVectorXd e = (av.row(r).array() - m).exp();
    out_v.row(r) = e / e.sum();
  }
  bool ng = t.node(a).needs_grad;
  Var out = t.make(std::move(out_v), ng, nullptr);
  if (ng)
    t.node(out).back = [a, out](Tape& tp) {
      const Mat& g = tp.grad(out);
      const Mat& p = tp.val(out);
      Mat da(g.rows(), g.cols());
      for (int r = 0; r < g.rows(); ++r) {
        double dot = g.row(r).dot(p.row(r));
        da.row(r) = (g.row(r).array() - dot) * p.row(r).array();
      }
      tp.accum(a, da);
    };
  return out;
}

Var mean_rows(Var a) {
  Tape& t = *a.tape;
  const Mat& av = t.val(a);
  if (av.rows() == 0) throw DataError("mean_rows: empty matrix");
  Mat out_v = av.colwise().mean();
  bool ng = t.node(a).needs_grad;
  Var out = t.make(std::move(out_v), ng, nullptr);
  if (ng)
    t.node(out).back = [a, out](Tape& tp) {
      const Mat& g = tp.grad(out);
      int rows = static_cast<int>(tp.val(a).rows());
      Mat da = Mat::Ones(rows, 1) * (g / rows);
      tp.accum(a, da);
    };
  return out;
}

Var sum_all(Var a) {
  Tape& t = *a.tape;
  Mat out_v(1, 1);
  out_v(0, 0) = t.val(a).sum();
  bool ng = t.node(a).needs_grad;
  Var out = t.make(std::move(out_v), ng, nullptr);
  if (ng)
    t.node(out).back = [a, out](Tape& tp) {
      tp.accum(a, Mat(Mat::Constant(tp.val(a).rows(), tp.val(a).cols(),
                                    tp.grad(out)(0, 0))));
    };
  return out;
}

Var layer_norm(Var a, Var gamma, Var beta, double eps) {
  check_same_tape(a, gamma);
  check_same_tape(a, beta);
  Tape& t = *a.tape;
  const Mat& x = t.val(a);
  const Mat& g = t.val(gamma);
  const Mat& b = t.val(beta);
  int cols = static_cast<int>(x.cols());
  Mat xhat(x.rows(), cols), out_v(x.rows(), cols);
  Eigen::VectorXd inv_sigma(x.rows());
  for (int r = 0; r < x.rows(); ++r) {
    double mu = x.row(r).mean();
    double var = (x.row(r).array() - mu).square().mean();
    double is = 1.0 / std::sqrt(var + eps);
    inv_sigma(r) = is;
    xhat.row(r) = (x.row(r).array() - mu) * is;
    out_v.row(r) = xhat.row(r).cwiseProduct(g.row(0)) + b.row(0);
  }
  bool ng = t.node(a).needs_grad || t.node(gamma).needs_grad || t.node(beta).needs_grad;
  Var out = t.make(std::move(out_v), ng, nullptr);
  if (ng)
    t.node(out).back = [a, gamma, beta, out, xhat = std::move(xhat),
                        inv_sigma = std::move(inv_sigma)](Tape& tp) {
      const Mat& gu = tp.grad(out);
      const Mat& gm = tp.val(gamma);
      Mat dgamma = Mat::Zero(1, gu.cols());
      Mat dbeta = Mat::Zero(1, gu.cols());
      Mat da(gu.rows(), gu.cols());
      for (int r = 0; r < gu.rows(); ++r) {
        dgamma.row(0) += gu.row(r).cwiseProduct(xhat.row(r));
        dbeta.row(0) += gu.row(r);
        Eigen::RowVectorXd gr = gu.row(r).cwiseProduct(gm.row(0));
        double mean_g = gr.mean();
        double mean_gx = gr.cwiseProduct(xhat.row(r)).mean();
        da.row(r) =
            (gr.array() - mean_g - xhat.row(r).array() * mean_gx) * inv_sigma(r);
      }
      tp.accum(a, da);
      tp.accum(gamma, dgamma);
      tp.accum(beta, dbeta);
    };
  return out;
}

Var gelu(Var a) {
  Tape& t = *a.tape;
  const Mat& x = t.val(a);
  Mat out_v = x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)); });
  bool ng = t.node(a).needs_grad;
  Var out = t.make(std::move(out_v), ng, nullptr);
  if (ng)
    t.node(out).back = [a, out](Tape& tp) {
      const Mat& x = tp.val(a);
      Mat d = x.unaryExpr([](double v) {
        double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
        double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
        return cdf + v * pdf;
      });
      tp.accum(a, Mat(tp.grad(out).cwiseProduct(d)));
    };
  return out;
}

Var ce_loss_rows(Var logits, std::vector<int> targets) {
  Tape& t = *logits.tape;
  const Mat& z = t.val(logits);
  if (static_cast<int>(targets.size()) != z.rows())
    throw DataError("ce_loss_rows: one target per row required");
  double total = 0.0;
  for (int r = 0; r < z.rows(); ++r) {
    int y = targets[r];
    if (y < 0 || y >= z.cols()) throw DataError("ce_loss_rows: target out of range");
    double m = z.row(r).maxCoeff();
    double lse = m + std::log((z.row(r).array() - m).exp().sum());
    total += lse - z(r, y);
  }
  Mat out_v(1, 1);
  out_v(0, 0) = total;
  bool ng = t.node(logits).needs_grad;
  Var out = t.make(std::move(out_v), ng, nullptr);
  if (ng)
    t.node(out).back = [logits, targets = std::move(targets), out](Tape& tp) {
      const Mat& z = tp.val(logits);
      double gs = tp.grad(out)(0, 0);
      Mat dz(z.rows(), z.cols());
      for (int r = 0; r < z.rows(); ++r) {
        double m = z.row(r).maxCoeff();
        Eigen::RowVectorXd e = (z.row(r).array() - m).exp();
        dz.row(r) = e / e.sum();
        dz(r, targets[r]) -= 1.0;
      }
      tp.accum(logits, Mat(dz * gs));
    };
  return out;
}

Var log1p_sum_exp(Var colvec) {
  Tape& t = *colvec.tape;
  const Mat& v = t.val(colvec);
  if (v.cols() != 1 || v.rows() == 0) throw DataError("log1p_sum_exp: needs n x 1, n >= 1");
  double m = std::max(0.0, v.maxCoeff());
  double denom = std::exp(-m) + (v.array() - m).exp().sum();
  Mat out_v(1, 1);
  out_v(0, 0) = m + std::log(denom);
  bool ng = t.node(colvec).needs_grad;
  Var out = t.make(std::move(out_v), ng, nullptr);
  if (ng)
    t.node(out).back = [colvec, out](Tape& tp) {
      const Mat& v = tp.val(colvec);
      double m = std::max(0.0, v.maxCoeff());
      double denom = std::exp(-m) + (v.array() - m).exp().sum();
      Mat dv = ((v.array() - m).exp() / denom).matrix() * tp.grad(out)(0, 0);
      tp.accum(colvec, dv);
    };
  return out;
}

Var logsumexp(Var colvec) {
  Tape& t = *colvec.tape;
  const Mat& v = t.val(colvec);
  if (v.cols() != 1 || v.rows() == 0) throw DataError("logsumexp: needs n x 1, n >= 1");
  double m = v.maxCoeff();
  double s = (v.array() - m).exp().sum();
  Mat out_v(1, 1);
  out_v(0, 0) = m + std::log(s);
  bool ng = t.node(colvec).needs_grad;
  Var out = t.make(std::move(out_v), ng, nullptr);
  if (ng)
    t.node(out).back = [colvec, out](Tape& tp) {
      const Mat& v = tp.val(colvec);
      double m = v.maxCoeff();
      Eigen::ArrayXd e = (v.array() - m).exp();
      Mat dv = (e / e.sum()).matrix() * tp.grad(out)(0, 0);
      tp.accum(colvec, dv);
    };
  return out;
}

Var cos_sim(Var u, Var v) {
  check_same_tape(u, v);
  Tape& t = *u.tape;
  const Mat& uv = t.val(u);
  const Mat& vv = t.val(v);
  if (uv.rows() != 1 || vv.rows() != 1 || uv.cols() != vv.cols())
    throw DataError("cos_sim: expects two 1xD rows of equal width");
  double nu = uv.row(0).norm();
  double nv = vv.row(0).norm();
  if (nu == 0.0 || nv == 0.0) throw DataError("cos_sim: zero-norm vector");
  double c = uv.row(0).dot(vv.row(0)) / (nu * nv);
  Mat out_v(1, 1);
  out_v(0, 0) = c;
  bool ng = t.node(u).needs_grad || t.node(v).needs_grad;
  Var out = t.make(std::move(out_v), ng, nullptr);
  if (ng)
    t.node(out).back = [u, v, out, nu, nv, c](Tape& tp) {
      double g = tp.grad(out)(0, 0);
      const Mat& uv = tp.val(u);
      const Mat& vv = tp.val(v);
      Mat du = (vv / (nu * nv) - uv * (c / (nu * nu))) * g;
      Mat dv = (uv / (nu * nv) - vv * (c / (nv * nv))) * g;
      tp.accum(u, du);
      tp.accum(v, dv);
    };
  return out;
}

}  // namespace msdp::ag
