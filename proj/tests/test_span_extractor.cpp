#include <doctest.h>

#include <cmath>
#include <set>

#include "fd_check.hpp"
#include "msdp/errors.hpp"
#include "msdp/span_extractor.hpp"

using namespace msdp;

TEST_CASE("candidate cells for L=3, max_span_len=3") {
  auto cells = candidate_cells(3, 3);
  std::set<Cell> expect = {{0, 0}, {0, 1}, {0, 2}, {1, 1}, {1, 2}, {2, 2}};
  CHECK(std::set<Cell>(cells.begin(), cells.end()) == expect);
  CHECK(candidate_cells(5, 2).size() == 9);  // 5 singles + 4 pairs
}

TEST_CASE("gold cells obey max_span_len") {
  Sentence s{{"a", "b", "c", "d"}, {{0, 2, "X"}, {3, 3, "Y"}}};
  auto cells = gold_cells(s, 8);
  CHECK(cells.size() == 2);
  auto limited = gold_cells(s, 2);
  REQUIRE(limited.size() == 1);
  CHECK(limited[0] == Cell{3, 3});
}

TEST_CASE("all-zero parameters give all-zero scores") {
  ParamStore store;
  SpanScorer scorer(4, 2, 8, store, 77);
  store.get("span.wq").value.setZero();
  store.get("span.wk").value.setZero();
  store.get("span.wv").value.setZero();
  Mat h = Mat::Random(3, 4);
  Mat f = scorer.scores_eval(h);
  CHECK(f.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("hand-computed 2-dim span score") {
  // h_0 = (1,0), h_1 = (0,1), W_q = W_k = I, biases 0, w_v = (1,1):
  // f(0,1) = q_0 . k_1 + w_v . (h_0 + h_1) = 0 + 2 = 2
  ParamStore store;
  SpanScorer scorer(2, 2, 8, store, 1);
  store.get("span.wq").value = Mat::Identity(2, 2);
  store.get("span.wk").value = Mat::Identity(2, 2);
  store.get("span.bq").value.setZero();
  store.get("span.bk").value.setZero();
  store.get("span.wv").value = Mat::Ones(2, 1);
  Mat h(2, 2);
  h << 1, 0, 0, 1;
  Mat f = scorer.scores_eval(h);
  CHECK(f(0, 1) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(f(0, 0) == doctest::Approx(1.0 + 2.0).epsilon(1e-12));  // q0.k0=1, wv.(2h0)=2
}

TEST_CASE("span_loss spec values") {
  Mat f = Mat::Zero(3, 3);
  auto cells = candidate_cells(3, 3);
  CHECK(span_loss_eval(f, cells, {}) == doctest::Approx(std::log(7.0)).epsilon(1e-12));

  Mat f1(1, 1);
  f1 << 10.0;
  CHECK(span_loss_eval(f1, {{0, 0}}, {{0, 0}}) ==
        doctest::Approx(std::log(1.0 + std::exp(-10.0))).epsilon(1e-9));
  CHECK(span_loss_eval(f1, {{0, 0}}, {}) ==
        doctest::Approx(std::log(1.0 + std::exp(10.0))).epsilon(1e-9));
}

TEST_CASE("span_loss matches brute-force enumeration on random instances") {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    int len = 1 + static_cast<int>(rng.uniform_index(8));
    int msl = 1 + static_cast<int>(rng.uniform_index(8));
    auto cells = candidate_cells(len, msl);
    Mat f(len, len);
    for (int i = 0; i < len; ++i)
      for (int j = 0; j < len; ++j) f(i, j) = rng.uniform_real(-10.0, 10.0);
    std::vector<Cell> gold;
    for (const auto& c : cells)
      if (rng.uniform_real() < 0.2) gold.push_back(c);

    // naive 64-bit reference
    double sum = 0.0;
    std::set<Cell> gset(gold.begin(), gold.end());
    for (const auto& [i, j] : cells)
      sum += std::exp((gset.count({i, j}) ? -1.0 : 1.0) * f(i, j));
    double reference = std::log(1.0 + sum);

    CHECK(span_loss_eval(f, cells, gold) == doctest::Approx(reference).epsilon(1e-9));
  }
}

TEST_CASE("span_loss is non-negative and vanishes at perfect separation") {
  auto cells = candidate_cells(4, 4);
  Mat f = Mat::Constant(4, 4, -50.0);
  f(1, 2) = 50.0;
  double loss = span_loss_eval(f, cells, {{1, 2}});
  CHECK(loss >= 0.0);
  CHECK(loss < 1e-9);
}

TEST_CASE("span_loss gradient signs push scores the right way") {
  ParamStore store;
  Param& f = store.create("f", 3, 3);
  f.value.setZero();
  auto cells = candidate_cells(3, 3);
  std::vector<Cell> gold = {{0, 1}};

  auto loss_fn = [&]() {
    ag::Tape t;
    return t.val(span_loss(t, t.param(f), cells, gold))(0, 0);
  };
  {
    ag::Tape t;
    t.backward(span_loss(t, t.param(f), cells, gold));
  }
  // gold cell gradient negative (increasing its score lowers the loss),
  // non-gold candidate cells positive
  CHECK(f.grad(0, 1) < 0.0);
  CHECK(f.grad(1, 2) > 0.0);
  CHECK(f.grad(2, 2) > 0.0);
  CHECK(f.grad(1, 0) == 0.0);  // not a candidate cell
  CHECK(testing::check_param_grad(f, loss_fn) < 1e-3);
}

TEST_CASE("span scorer gradient through hidden states") {
  Rng rng(5);
  ParamStore store;
  SpanScorer scorer(6, 3, 4, store, 99);
  Param& h = store.create("h", 5, 6);
  for (int c = 0; c < 6; ++c)
    for (int r = 0; r < 5; ++r) h.value(r, c) = rng.normal();
  auto cells = candidate_cells(5, 4);
  std::vector<Cell> gold = {{0, 0}, {2, 3}};

  auto loss_fn = [&]() {
    ag::Tape t;
    auto f = scorer.scores(t, t.param(h));
    return t.val(span_loss(t, f, cells, gold))(0, 0);
  };
  {
    ag::Tape t;
    auto f = scorer.scores(t, t.param(h));
    t.backward(span_loss(t, f, cells, gold));
  }
  CHECK(testing::check_param_grad(h, loss_fn) < 1e-3);
  CHECK(testing::check_param_grad(store.get("span.wq"), loss_fn) < 1e-3);
  CHECK(testing::check_param_grad(store.get("span.wv"), loss_fn) < 1e-3);
  CHECK(testing::check_param_grad(store.get("span.bq"), loss_fn) < 1e-3);
}

TEST_CASE("decode_spans applies threshold and flat filter") {
  Mat f = Mat::Constant(3, 3, -1.0);
  auto cells = candidate_cells(3, 3);

  f(0, 1) = 3.2;
  f(1, 1) = -1.0;
  auto spans = decode_spans(f, cells);
  REQUIRE(spans.size() == 1);
  CHECK(spans[0].start == 0);
  CHECK(spans[0].end == 1);

  Mat neg = Mat::Constant(3, 3, -0.5);
  CHECK(decode_spans(neg, cells).empty());

  Mat overlap = Mat::Constant(3, 3, -1.0);
  overlap(0, 1) = 2.0;
  overlap(1, 2) = 1.0;
  auto flat = decode_spans(overlap, cells);
  REQUIRE(flat.size() == 1);
  CHECK(flat[0].start == 0);
  CHECK(flat[0].end == 1);

  auto unfiltered = decode_spans(overlap, cells, 0.0, /*flat_filter=*/false);
  CHECK(unfiltered.size() == 2);
  CHECK(unfiltered[0].score > unfiltered[1].score);
}

TEST_CASE("span_loss requires candidate cells") {
  Mat f = Mat::Zero(2, 2);
  CHECK_THROWS_AS(span_loss_eval(f, {}, {}), DataError);
}
