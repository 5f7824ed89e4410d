#include <doctest.h>

#include <cmath>
#include <set>

#include "fd_check.hpp"
#include "msdp/errors.hpp"
#include "msdp/params.hpp"
#include "msdp/pretrain.hpp"
#include "msdp/rng.hpp"

using namespace msdp;

namespace {

Sentence mike_paris() {
  return Sentence{{"Mike", "went", "to", "Paris"}, {{0, 0, "PER"}, {3, 3, "LOC"}}};
}

EntityIndex small_index() {
  EntityIndex index;
  index.add("PER", {"Mike"});
  index.add("PER", {"Anna"});
  index.add("LOC", {"Paris"});
  index.add("LOC", {"Rome"});
  return index;
}

std::string join(const std::vector<std::string>& toks) {
  std::string out;
  for (size_t i = 0; i < toks.size(); ++i) {
    if (i) out += " ";
    out += toks[i];
  }
  return out;
}

}  // namespace

TEST_CASE("demonstration rendering matches the sample layout") {
  auto sample = build_demonstration(mike_paris(), small_index(), 0, 0, 1);
  REQUIRE(sample.has_value());
  CHECK(join(sample->rendered) ==
        "[CLS] Mike went to Paris [SEP] Mike is PER [SEP] Paris is LOC [SEP] [SEP]");
  CHECK(sample->ld.size() == 2);
  CHECK(sample->rd.empty());
  CHECK(sample->nd.empty());
}

TEST_CASE("rendered sequence parses back into four segments") {
  auto sample = build_demonstration(mike_paris(), small_index(), 2, 1, 9);
  REQUIRE(sample.has_value());
  // walk the rendered tokens: base segment ends at the first [SEP]; the
  // remaining group separators are the [SEP]s that do not follow "is X"
  // pairs -- instead just count all segments structurally
  int sep_count = 0;
  for (const auto& t : sample->rendered)
    if (t == "[SEP]") ++sep_count;
  // 1 after base + (ld-1) + 1 + (rd-1) + 1 + (nd-1) joins
  int expected = 1 + 1 + 1 + (2 - 1) + (1 - 1) + (2 - 1);
  CHECK(sep_count == expected);
  CHECK(sample->rendered.front() == "[CLS]");
}

TEST_CASE("RD pairs come only from the input's label set and skip own entities") {
  EntityIndex index = small_index();
  index.add("ORG", {"Acme"});
  for (uint64_t seed = 0; seed < 10; ++seed) {
    auto sample = build_demonstration(mike_paris(), index, 2, 0, seed);
    REQUIRE(sample.has_value());
    CHECK(sample->rd.size() == 2);
    for (const auto& p : sample->rd) {
      CHECK((p.label == "PER" || p.label == "LOC"));
      // own surface forms excluded because alternatives exist
      CHECK(join(p.entity) != "Mike");
      CHECK(join(p.entity) != "Paris");
    }
  }
}

TEST_CASE("RD falls back to own entities when nothing else exists") {
  EntityIndex index;
  index.add("PER", {"Mike"});
  index.add("LOC", {"Paris"});
  auto sample = build_demonstration(mike_paris(), index, 2, 0, 3);
  REQUIRE(sample.has_value());
  CHECK(sample->rd.size() == 2);
}

TEST_CASE("ND fragments are contiguous non-entity text with O label") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    auto sample = build_demonstration(mike_paris(), small_index(), 0, 1, seed);
    REQUIRE(sample.has_value());
    REQUIRE(sample->nd.size() == 1);
    const auto& p = sample->nd[0];
    CHECK(p.label == "O");
    CHECK(p.entity.size() >= 1);
    CHECK(p.entity.size() <= 3);
    std::set<std::string> non_entity = {"went", "to"};
    for (const auto& t : p.entity) CHECK(non_entity.count(t) == 1);
  }
}

TEST_CASE("ND truncates to available fragments and records it") {
  auto sample = build_demonstration(mike_paris(), small_index(), 0, 50, 4);
  REQUIRE(sample.has_value());
  // non-entity region is "went to": fragments are went, to, went-to
  CHECK(sample->nd.size() == 3);
  CHECK(sample->nd_truncated == 47);
}

TEST_CASE("sentences without entities signal skip") {
  Sentence bare{{"just", "words"}, {}};
  CHECK_FALSE(build_demonstration(bare, small_index(), 5, 3, 1).has_value());
}

TEST_CASE("build_demonstration is deterministic under seed") {
  auto a = build_demonstration(mike_paris(), small_index(), 2, 2, 42);
  auto b = build_demonstration(mike_paris(), small_index(), 2, 2, 42);
  REQUIRE(a.has_value());
  REQUIRE(b.has_value());
  CHECK(a->rendered == b->rendered);
}

namespace {

Vocabulary pretrain_vocab() {
  Sentence s{{"mike", "went", "to", "paris", "anna", "rome", "new", "york"}, {}};
  return Vocabulary::build({s}, {"is", "O", "PER", "LOC"});
}

}  // namespace

TEST_CASE("whole-entity masking covers every component token") {
  // unit "New York is LOC": masking the entity masks both tokens
  Sentence x{{"New", "York"}, {{0, 1, "LOC"}}};
  EntityIndex index;
  index.add("LOC", {"New", "York"});
  auto sample = build_demonstration(x, index, 0, 0, 1);
  REQUIRE(sample.has_value());
  auto vocab = pretrain_vocab();

  // two units: the entity and the label; mask both
  auto inst = mask_demonstration(*sample, vocab, 4, 7);
  // entity unit has 2 tokens, label unit 1 -> 3 masked positions
  CHECK(inst.masked_positions.size() == 3);
  for (size_t i = 0; i < inst.masked_positions.size(); ++i) {
    CHECK(inst.input_ids[inst.masked_positions[i]] == Vocabulary::kMask);
    CHECK(inst.target_ids[i] != Vocabulary::kMask);
  }
}

TEST_CASE("mask count respects the available-unit minimum") {
  auto sample = build_demonstration(mike_paris(), small_index(), 0, 0, 1);
  REQUIRE(sample.has_value());
  auto vocab = pretrain_vocab();
  // 2 LD pairs -> 4 units; ask for 10, get 4
  auto inst = mask_demonstration(*sample, vocab, 10, 3);
  CHECK(inst.masked_positions.size() == 4);  // all four single-token units

  auto inst3 = mask_demonstration(*sample, vocab, 3, 3);
  CHECK(inst3.masked_positions.size() == 3);
}

TEST_CASE("masking is deterministic and never touches the base sentence") {
  auto sample = build_demonstration(mike_paris(), small_index(), 3, 2, 5);
  REQUIRE(sample.has_value());
  auto vocab = pretrain_vocab();
  auto a = mask_demonstration(*sample, vocab, 4, 11);
  auto b = mask_demonstration(*sample, vocab, 4, 11);
  CHECK(a.input_ids == b.input_ids);
  CHECK(a.masked_positions == b.masked_positions);

  int first_sep = -1;
  for (size_t i = 0; i < sample->rendered.size(); ++i)
    if (sample->rendered[i] == "[SEP]") {
      first_sep = static_cast<int>(i);
      break;
    }
  for (uint64_t seed = 0; seed < 30; ++seed) {
    auto inst = mask_demonstration(*sample, vocab, 4, seed);
    for (int pos : inst.masked_positions) CHECK(pos > first_sep);
  }
}

TEST_CASE("truncate_instance drops tail positions") {
  MaskedInstance inst;
  inst.input_ids = {2, 7, 8, 9, 10, 3};
  inst.masked_positions = {1, 4};
  inst.target_ids = {70, 100};
  truncate_instance(inst, 4);
  CHECK(inst.input_ids.size() == 4);
  CHECK(inst.masked_positions == std::vector<int>{1});
  CHECK(inst.target_ids == std::vector<int>{70});
  CHECK(inst.dropped_positions == 1);
}

TEST_CASE("mlm_loss spec arithmetic") {
  Mat probs(1, 4);
  probs << 0.5, 0.2, 0.2, 0.1;
  CHECK(mlm_loss(probs, {0}) == doctest::Approx(0.693147).epsilon(1e-6));

  Mat perfect(2, 3);
  perfect << 1.0, 0.0, 0.0, 0.0, 1.0, 0.0;
  CHECK(mlm_loss(perfect, {0, 1}) == doctest::Approx(0.0));

  Mat two(2, 4);
  two << 0.5, 0.5, 0.0, 0.0, 0.25, 0.25, 0.25, 0.25;
  CHECK(mlm_loss(two, {0, 3}) == doctest::Approx(2.079442).epsilon(1e-6));

  CHECK_THROWS_AS(mlm_loss(Mat(0, 4), {}), DataError);
}

TEST_CASE("positive and hard-negative construction follows the substitution rules") {
  auto variants = build_contrastive_samples(mike_paris(), {"PER", "LOC", "ORG"}, 3);
  REQUIRE(variants.positives.size() == 2);  // K entities -> K positives
  CHECK(join(variants.positives[0]) == "PER went to Paris");
  CHECK(join(variants.positives[1]) == "Mike went to LOC");

  // hard negative: both entities replaced, never with their own label
  const auto& hn = variants.hard_negative;
  REQUIRE(hn.size() == 4);
  CHECK(hn[0] != "Mike");
  CHECK(hn[0] != "PER");
  CHECK(hn[3] != "Paris");
  CHECK(hn[3] != "LOC");
  std::set<std::string> allowed = {"PER", "LOC", "ORG"};
  CHECK(allowed.count(hn[0]) == 1);
  CHECK(allowed.count(hn[3]) == 1);

  CHECK_THROWS_AS(build_contrastive_samples(mike_paris(), {"PER"}, 1), DataError);
}

TEST_CASE("dominant class picks the most frequent label, earliest on ties") {
  Sentence x{{"a", "b", "c", "d"}, {{0, 0, "PER"}, {1, 1, "LOC"}, {2, 2, "LOC"}}};
  CHECK(dominant_class(x) == "LOC");
  CHECK(dominant_class(mike_paris()) == "PER");
}

TEST_CASE("scl_loss reproduces the hand-worked value") {
  // anchor (1,0), positive (1,0), hard negative (0,1), one in-batch
  // negative (0,1), tau = 0.5 -> -log(e^2 / (1 + 1)) = ln 2 - 2
  ContrastiveEvalBatch batch;
  ContrastiveEvalBatch::Item item;
  item.anchor = (Mat(1, 2) << 1, 0).finished();
  item.positives = {(Mat(1, 2) << 1, 0).finished()};
  item.hard_negative = (Mat(1, 2) << 0, 1).finished();
  item.tag = "A";
  batch.items.push_back(item);
  batch.negatives.push_back({(Mat(1, 2) << 0, 1).finished(), "B", -1});
  batch.tau = 0.5;

  CHECK(scl_loss_eval(batch) == doctest::Approx(std::log(2.0) - 2.0).epsilon(1e-9));
  CHECK(scl_loss_eval(batch) == doctest::Approx(-1.306853).epsilon(1e-6));
}

TEST_CASE("scl_loss is invariant under uniform scaling and negative permutation") {
  Rng rng(8);
  auto rand_row = [&](double s) {
    Mat m(1, 3);
    for (int c = 0; c < 3; ++c) m(0, c) = rng.normal() * s;
    return m;
  };
  ContrastiveEvalBatch batch;
  for (int i = 0; i < 3; ++i) {
    ContrastiveEvalBatch::Item item;
    item.anchor = rand_row(1.0);
    item.positives = {rand_row(1.0), rand_row(1.0)};
    item.hard_negative = rand_row(1.0);
    item.tag = "T" + std::to_string(i);
    batch.items.push_back(item);
  }
  for (int i = 0; i < 3; ++i)
    batch.negatives.push_back({batch.items[i].anchor, batch.items[i].tag, i});
  batch.negatives.push_back({rand_row(1.0), "X", -1});
  batch.tau = 0.5;

  double base = scl_loss_eval(batch);

  ContrastiveEvalBatch scaled = batch;
  for (auto& item : scaled.items) {
    item.anchor *= 3.0;
    for (auto& p : item.positives) p *= 3.0;
    item.hard_negative *= 3.0;
  }
  for (auto& n : scaled.negatives) n.rep *= 3.0;
  CHECK(scl_loss_eval(scaled) == doctest::Approx(base).epsilon(1e-9));

  ContrastiveEvalBatch permuted = batch;
  std::swap(permuted.negatives[0], permuted.negatives[3]);
  std::swap(permuted.negatives[1], permuted.negatives[2]);
  CHECK(scl_loss_eval(permuted) == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("scl_loss monotonicity in positive and hard-negative similarity") {
  auto make_batch = [](double pos_x, double hn_y) {
    ContrastiveEvalBatch batch;
    ContrastiveEvalBatch::Item item;
    item.anchor = (Mat(1, 2) << 1, 0).finished();
    Mat p(1, 2);
    p << pos_x, std::sqrt(std::max(0.0, 1.0 - pos_x * pos_x));
    item.positives = {p};
    Mat hn(1, 2);
    hn << hn_y, std::sqrt(std::max(0.0, 1.0 - hn_y * hn_y));
    item.hard_negative = hn;
    item.tag = "A";
    batch.items.push_back(item);
    batch.negatives.push_back({(Mat(1, 2) << 0, 1).finished(), "B", -1});
    batch.tau = 0.5;
    return batch;
  };
  // increasing cos(anchor, positive) strictly decreases the loss
  CHECK(scl_loss_eval(make_batch(0.9, 0.1)) < scl_loss_eval(make_batch(0.5, 0.1)));
  // increasing cos(anchor, hard negative) strictly increases the loss
  CHECK(scl_loss_eval(make_batch(0.5, 0.9)) > scl_loss_eval(make_batch(0.5, 0.1)));
}

TEST_CASE("scl_loss validates temperature and supports the standard variant") {
  ContrastiveEvalBatch batch;
  ContrastiveEvalBatch::Item item;
  item.anchor = (Mat(1, 2) << 1, 0).finished();
  item.positives = {(Mat(1, 2) << 1, 0).finished()};
  item.hard_negative = (Mat(1, 2) << 0, 1).finished();
  item.tag = "A";
  batch.items.push_back(item);
  batch.tau = 0.0;
  CHECK_THROWS_AS(scl_loss_eval(batch), ConfigError);

  batch.tau = 0.5;
  batch.include_positive_in_denominator = true;
  // denominator now e^2 + e^0 -> loss = log(e^2+1) - 2 > 0
  double expected = std::log(std::exp(2.0) + 1.0) - 2.0;
  CHECK(scl_loss_eval(batch) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("scl_loss gradient matches finite differences") {
  Rng rng(21);
  ParamStore store;
  Param& a0 = store.create("a0", 1, 3);
  Param& p0 = store.create("p0", 1, 3);
  Param& hn0 = store.create("hn0", 1, 3);
  Param& a1 = store.create("a1", 1, 3);
  Param& p1 = store.create("p1", 1, 3);
  Param& hn1 = store.create("hn1", 1, 3);
  for (Param* p : store.all())
    for (int c = 0; c < 3; ++c) p->value(0, c) = rng.normal();

  auto build = [&](ag::Tape& t) {
    ContrastiveGraphBatch batch;
    batch.tau = 0.5;
    ContrastiveGraphBatch::Item i0{t.param(a0), {t.param(p0)}, t.param(hn0), "A"};
    ContrastiveGraphBatch::Item i1{t.param(a1), {t.param(p1)}, t.param(hn1), "B"};
    batch.items = {i0, i1};
    batch.negatives.push_back({t.param(a0), "A", 0});
    batch.negatives.push_back({t.param(a1), "B", 1});
    return batch;
  };
  auto loss_fn = [&]() {
    ag::Tape t;
    auto batch = build(t);
    return t.val(scl_loss(t, batch))(0, 0);
  };
  {
    ag::Tape t;
    auto batch = build(t);
    t.backward(scl_loss(t, batch));
  }
  for (Param* p : store.all()) {
    CAPTURE(p->name);
    CHECK(testing::check_param_grad(*p, loss_fn) < 1e-3);
  }
}

TEST_CASE("joint pre-training loss arithmetic and bounds") {
  CHECK(joint_pretrain_loss(1.0, 2.0, 0.6) == doctest::Approx(1.4).epsilon(1e-12));
  CHECK(joint_pretrain_loss(1.5, 99.0, 1.0) == doctest::Approx(1.5));
  CHECK(joint_pretrain_loss(99.0, 1.5, 0.0) == doctest::Approx(1.5));
  CHECK_THROWS_AS(joint_pretrain_loss(1.0, 1.0, -0.1), ConfigError);
  CHECK_THROWS_AS(joint_pretrain_loss(1.0, 1.0, 1.1), ConfigError);
}
