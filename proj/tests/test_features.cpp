#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "dsl/features.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

using namespace dsl;

namespace {
EmbeddingTable tiny_table() {
  EmbeddingTable t;
  t.table = Mat::Zero(6, 2);
  t.table.row(4) << 1, 0;
  t.table.row(5) << 0, 1;
  return t;
}
}  // namespace

TEST_CASE("embed_utterance averages token rows") {
  auto t = tiny_table();
  Vec mean = embed_utterance({4, 5}, t);
  CHECK(mean(0) == doctest::Approx(0.5));
  CHECK(mean(1) == doctest::Approx(0.5));

  Vec single = embed_utterance({4}, t);
  CHECK(single(0) == 1.0);

  std::vector<int> forty(40, 5);
  Vec same = embed_utterance(forty, t);
  CHECK(same(0) == doctest::Approx(0.0));
  CHECK(same(1) == doctest::Approx(1.0));
}

TEST_CASE("embed_utterance rejects ids outside the table") {
  auto t = tiny_table();
  CHECK_THROWS_AS(embed_utterance({6}, t), Error);
  CHECK_THROWS_AS(embed_utterance({-1}, t), Error);
  CHECK_THROWS_AS(embed_utterance({}, t), Error);
}

TEST_CASE("embed_utterance is permutation invariant") {
  EmbeddingTable t = init_embeddings(20, 8, 3);
  std::vector<int> ids = {3, 7, 7, 11, 2, 19, 5};
  Vec base = embed_utterance(ids, t);
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(ids.begin(), ids.end(), rng);
    CHECK(embed_utterance(ids, t).isApprox(base, 1e-12));
  }
}

TEST_CASE("featurize_exchange concatenates user and system means") {
  auto t = tiny_table();
  Vec f = featurize_exchange({4}, {5}, t);
  REQUIRE(f.size() == 4);
  CHECK(f(0) == 1.0);
  CHECK(f(1) == 0.0);
  CHECK(f(2) == 0.0);
  CHECK(f(3) == 1.0);

  Vec swapped = featurize_exchange({5}, {4}, t);
  CHECK(swapped.head(2).isApprox(f.tail(2)));
  CHECK(swapped.tail(2).isApprox(f.head(2)));
}

TEST_CASE("zero table gives a zero feature of the right length") {
  EmbeddingTable t;
  t.table = Mat::Zero(4, 3);
  Vec f = featurize_exchange({1, 2}, {3}, t);
  CHECK(f.size() == 6);
  CHECK(f.norm() == 0.0);
}

TEST_CASE("initialized embeddings keep the pad row at zero") {
  EmbeddingTable t = init_embeddings(50, 16, 1234);
  CHECK(t.table.row(kPadId).norm() == 0.0);
  CHECK(t.table.row(kUnkId).norm() > 0.0);  // unk stays trainable signal
  CHECK((t.table.array().abs() <= 0.1).all());
}

TEST_CASE("pretrained import fills matching rows only") {
  Dialog d;
  Exchange ex;
  ex.user_tokens = {"alpha", "beta"};
  ex.system_tokens = {"gamma"};
  d.exchanges.push_back(ex);
  Vocab vocab = build_vocab({d}, 1);

  EmbeddingTable t = init_embeddings(vocab.size(), 3, 7);
  Mat before = t.table;
  {
    std::ofstream out("pretrained_test.txt");
    out << "alpha 1 2 3\n";
    out << "missing 9 9 9\n";
  }
  import_pretrained_embeddings(t, vocab, "pretrained_test.txt");
  std::remove("pretrained_test.txt");

  Vec alpha = t.table.row(vocab.id("alpha")).transpose();
  CHECK(alpha(0) == 1.0);
  CHECK(alpha(2) == 3.0);
  CHECK(t.table.row(vocab.id("beta")) == before.row(vocab.id("beta")));
  CHECK(t.table.row(kPadId).norm() == 0.0);
}

TEST_CASE("featurize_exchange maps unknown tokens through unk") {
  Dialog d;
  Exchange ex;
  ex.user_tokens = {"known"};
  ex.system_tokens = {"alsoknown"};
  d.exchanges.push_back(ex);
  Vocab vocab = build_vocab({d}, 1);
  EmbeddingTable t = init_embeddings(vocab.size(), 4, 2);

  Exchange with_unknown;
  with_unknown.user_tokens = {"neverseen"};
  with_unknown.system_tokens = {"known"};
  Vec f = featurize_exchange(with_unknown, vocab, t);
  CHECK(f.head(4).isApprox(t.table.row(kUnkId).transpose()));
}
