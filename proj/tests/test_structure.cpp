#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "dsl/structure.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace dsl;

namespace {

LatentAssignment assignment_from(const std::vector<std::vector<int>>& seqs,
                                 int n_states) {
  LatentAssignment a;
  a.n_states = n_states;
  int d = 0;
  for (const auto& seq : seqs) {
    LatentAssignment::DialogStates ds;
    ds.dialog_id = "d" + std::to_string(d++);
    ds.states = seq;
    for (int s : seq) ds.posteriors.push_back(one_hot(s, n_states));
    a.dialogs.push_back(std::move(ds));
  }
  return a;
}

GeneratorConfig chain_config(int n_dialogs, uint64_t seed) {
  GeneratorConfig cfg;
  cfg.states = {"a", "b", "c"};
  cfg.transitions = Mat::Zero(3, 3);
  cfg.transitions(0, 1) = 1;
  cfg.transitions(1, 2) = 1;
  cfg.transitions(2, 2) = 1;
  cfg.templates["a"] = {{"hello there"}, {"welcome in"}};
  cfg.templates["b"] = {{"weather for tomorrow"}, {"checking the forecast"}};
  cfg.templates["c"] = {{"thanks bye"}, {"goodbye now"}};
  cfg.num_dialogs = n_dialogs;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("frequency table from a single dialog") {
  auto a = assignment_from({{0, 1, 1, 2}}, 3);
  TransitionTable t = estimate_transition_table_frequency(a, 3);
  CHECK(t.probs(0, 1) == 1.0);
  CHECK(t.probs(0, 0) == 0.0);
  CHECK(t.probs(1, 1) == doctest::Approx(0.5));
  CHECK(t.probs(1, 2) == doctest::Approx(0.5));
  for (int j = 0; j < 3; ++j)
    CHECK(t.probs(2, j) == doctest::Approx(1.0 / 3));  // no successor
  CHECK(t.occupancy[0] == 1);
  CHECK(t.occupancy[1] == 2);
  CHECK(t.occupancy[2] == 0);
  t.validate();
}

TEST_CASE("length-one dialogs give all-uniform rows") {
  auto a = assignment_from({{0}, {1}, {2}, {1}}, 3);
  TransitionTable t = estimate_transition_table_frequency(a, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(t.probs(i, j) == doctest::Approx(1.0 / 3));
}

TEST_CASE("out-of-range state ids are rejected") {
  auto a = assignment_from({{0, 5}}, 3);
  CHECK_THROWS_AS(estimate_transition_table_frequency(a, 3), Error);
}

TEST_CASE("counting matches the generator on the synthetic corpus") {
  auto gen = generate_weather_corpus(default_weather_config(500, 31, 0.2));
  auto a = assignment_from(gen.state_seqs, gen.truth.n_states);
  TransitionTable t = estimate_transition_table_frequency(a, gen.truth.n_states);
  for (int i = 0; i < t.n_states; ++i) {
    if (t.occupancy[i] < 20) continue;
    const double tv =
        0.5 * (t.probs.row(i) - gen.truth.probs.row(i)).cwiseAbs().sum();
    CHECK(tv <= 0.05);
  }
  // occupancy counts transitions out of each state
  long pairs = 0;
  for (const auto& seq : gen.state_seqs) pairs += static_cast<long>(seq.size()) - 1;
  CHECK(static_cast<long>(t.occupancy.sum()) == pairs);
}

TEST_CASE("ddvrnn prior readout") {
  ModelConfig cfg;
  cfg.variant = Variant::ddvrnn;
  cfg.n_states = 4;
  cfg.embed_dim = 8;
  cfg.rnn_hidden = 8;
  cfg.z_feat_dim = 4;
  cfg.mlp_hidden = 6;
  cfg.dropout = 0;
  auto gen = generate_weather_corpus(chain_config(6, 2));
  VrnnModel model(cfg, build_vocab(gen.dialogs, 1));

  SUBCASE("zeroed prior head reads out uniform rows") {
    model.params().at("prior.w2").value.setZero();
    model.params().at("prior.b2").value.setZero();
    auto assignment = assign_states(model, gen.dialogs);
    TransitionTable t = read_transition_table_ddvrnn(model, assignment);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        CHECK(t.probs(i, j) == doctest::Approx(0.25));
  }

  SUBCASE("rows are distributions and the variant is enforced") {
    auto assignment = assign_states(model, gen.dialogs);
    TransitionTable t = read_transition_table_ddvrnn(model, assignment);
    for (int i = 0; i < 4; ++i)
      CHECK(t.probs.row(i).sum() == doctest::Approx(1.0));

    ModelConfig dcfg = cfg;
    dcfg.variant = Variant::dvrnn;
    VrnnModel dv(dcfg, model.vocab());
    CHECK_THROWS_AS(read_transition_table_ddvrnn(dv, assignment), Error);
  }
}

TEST_CASE("trained ddvrnn prior follows the deterministic chain") {
  auto gen = generate_weather_corpus(chain_config(80, 5));
  auto split = split_corpus(gen.dialogs, {}, 3);

  ModelConfig cfg;
  cfg.variant = Variant::ddvrnn;
  cfg.n_states = 3;
  cfg.embed_dim = 12;
  cfg.rnn_hidden = 12;
  cfg.z_feat_dim = 6;
  cfg.mlp_hidden = 12;
  cfg.dropout = 0.1;
  cfg.use_bpr = false;  // the per-sample KL trains the direct transitions
  cfg.epochs = 20;
  cfg.batch_size = 8;
  cfg.seed = 6;
  TrainResult r = train(split.train, split.valid, cfg);

  auto assignment = assign_states(*r.model, gen.dialogs);
  TransitionTable table = read_transition_table_ddvrnn(*r.model, assignment);

  // map generator states onto learned states via the confusion matrix
  Mat confusion = confusion_matrix(gen.state_seqs, assignment, 3, 3);
  std::vector<int> to_learned = align_states(confusion);
  const int a = to_learned[0], b = to_learned[1];
  CHECK(argmax(table.probs.row(a).transpose()) == b);
}

TEST_CASE("collapse_states merges columns and occupancy-weights rows") {
  TransitionTable t;
  t.n_states = 3;
  t.probs = Mat::Zero(3, 3);
  t.probs << 0.2, 0.5, 0.3,
             0.1, 0.6, 0.3,
             0.7, 0.2, 0.1;
  t.occupancy = Vec::Zero(3);
  t.occupancy << 5, 10, 30;

  SUBCASE("identity map keeps the table") {
    CollapseMap identity;
    identity.state_to_category = {0, 1, 2};
    TransitionTable c = collapse_states(t, identity);
    CHECK(c.probs.isApprox(t.probs));
    CHECK(c.occupancy.isApprox(t.occupancy));
  }

  SUBCASE("all states into one category gives [[1]]") {
    CollapseMap all;
    all.state_to_category = {0, 0, 0};
    TransitionTable c = collapse_states(t, all);
    REQUIRE(c.n_states == 1);
    CHECK(c.probs(0, 0) == doctest::Approx(1.0));
    CHECK(c.occupancy[0] == doctest::Approx(45));
  }

  SUBCASE("merging states 1 and 2 matches the stated formula") {
    CollapseMap map;
    map.state_to_category = {0, 1, 1};
    TransitionTable c = collapse_states(t, map);
    REQUIRE(c.n_states == 2);
    // row for the merged category: (10*r1 + 30*r2)/40, columns 1,2 summed
    Vec merged = (10.0 * t.probs.row(1) + 30.0 * t.probs.row(2)) / 40.0;
    CHECK(c.probs(1, 0) == doctest::Approx(merged[0]));
    CHECK(c.probs(1, 1) == doctest::Approx(merged[1] + merged[2]));
    CHECK(c.probs.row(0).sum() == doctest::Approx(1.0));
    CHECK(c.probs.row(1).sum() == doctest::Approx(1.0));
  }

  SUBCASE("maps must cover every state and every category") {
    CollapseMap short_map;
    short_map.state_to_category = {0, 1};
    CHECK_THROWS_AS(collapse_states(t, short_map), Error);
    CollapseMap gap;
    gap.state_to_category = {0, 2, 2};  // category 1 empty
    CHECK_THROWS_AS(collapse_states(t, gap), Error);
  }
}

TEST_CASE("collapse map json io") {
  CollapseMap map;
  map.state_to_category = {0, 1, 1, 2, 3};
  map.category_names = {"ask", "present", "info", "close"};
  map.save("collapse_test.json");
  CollapseMap loaded = CollapseMap::load("collapse_test.json");
  CHECK(loaded.state_to_category == map.state_to_category);
  CHECK(loaded.category_names == map.category_names);
  std::remove("collapse_test.json");
}

TEST_CASE("dot export respects the threshold exactly") {
  TransitionTable t;
  t.n_states = 2;
  t.probs = Mat::Zero(2, 2);
  t.probs << 0, 1, 1, 0;
  t.occupancy = Vec::Ones(2);

  auto count_edges = [](const std::string& dot) {
    size_t count = 0, at = 0;
    while ((at = dot.find("->", at)) != std::string::npos) {
      ++count;
      at += 2;
    }
    return count;
  };

  SUBCASE("both crossing edges survive a 0.2 threshold") {
    CHECK(count_edges(export_dot(t, {}, 0.2)) == 2);
  }

  SUBCASE("a uniform ten-state table has no edge above 0.2") {
    TransitionTable u;
    u.n_states = 10;
    u.probs = Mat::Constant(10, 10, 0.1);
    u.occupancy = Vec::Ones(10);
    CHECK(count_edges(export_dot(u, {}, 0.2)) == 0);
    CHECK(count_edges(export_dot(u, {}, 0.1)) == 100);  // >= is inclusive
  }

  SUBCASE("threshold zero emits the full N^2 edges") {
    CHECK(count_edges(export_dot(t, {}, 0.0)) == 4);
  }

  SUBCASE("output is stable and labeled") {
    const std::string once = export_dot(t, {"hello", "bye"}, 0.2);
    CHECK(once == export_dot(t, {"hello", "bye"}, 0.2));
    CHECK(once.find("label=\"hello\"") != std::string::npos);
    CHECK(once.find("occupancy=1") != std::string::npos);
    CHECK(once.find("subgraph") == std::string::npos);
    CHECK_THROWS_AS(export_dot(t, {"only_one"}, 0.2), Error);
  }
}

TEST_CASE("top exchanges per state") {
  auto gen = generate_weather_corpus(chain_config(4, 9));
  auto assignment = assignment_from(gen.state_seqs, 4);  // state 3 unused
  for (size_t d = 0; d < assignment.dialogs.size(); ++d)
    assignment.dialogs[d].dialog_id = gen.dialogs[d].dialog_id;
  // make posteriors informative: confidence decreasing along the dialog
  for (auto& d : assignment.dialogs)
    for (size_t t = 0; t < d.posteriors.size(); ++t) {
      Vec p = Vec::Constant(4, 0.1 / 3);
      p[d.states[t]] = 0.9;
      p[d.states[t]] -= 0.01 * static_cast<double>(t);
      p /= p.sum();
      d.posteriors[t] = p;
    }

  auto report = top_exchanges_per_state(assignment, gen.dialogs, 3);
  REQUIRE(report.size() == 4);
  CHECK(report[3].empty());                 // no member exchanges
  CHECK(report[0].size() == 3);             // truncated to k
  for (const auto& state_examples : report)
    for (size_t i = 1; i < state_examples.size(); ++i)
      CHECK(state_examples[i - 1].posterior >= state_examples[i].posterior);

  auto all = top_exchanges_per_state(assignment, gen.dialogs, 100);
  CHECK(all[0].size() == 4);  // k beyond the member count returns everyone
  CHECK(all[1][0].context_text.find("hello there") != std::string::npos);
}

TEST_CASE("hungarian assignment finds the minimum cost matching") {
  Mat cost(3, 3);
  cost << 4, 1, 3,
          2, 0, 5,
          3, 2, 2;
  auto match = min_cost_assignment(cost);
  // optimal: row0->col1 (1), row1->col0 (2), row2->col2 (2), total 5
  CHECK(match == std::vector<int>{1, 0, 2});

  Mat rect(2, 3);
  rect << 10, 2, 8,
          7, 6, 1;
  auto rmatch = min_cost_assignment(rect);
  CHECK(rmatch == std::vector<int>{1, 2});
}

TEST_CASE("align_states maps diagonal-dominant confusion to identity") {
  Mat confusion = Mat::Constant(3, 3, 2.0);
  confusion(0, 0) = 50;
  confusion(1, 1) = 40;
  confusion(2, 2) = 60;
  CHECK(align_states(confusion) == std::vector<int>{0, 1, 2});

  Mat swapped = Mat::Constant(2, 2, 1.0);
  swapped(0, 1) = 30;
  swapped(1, 0) = 20;
  CHECK(align_states(swapped) == std::vector<int>{1, 0});
}

TEST_CASE("transition csv round-trip") {
  TransitionTable t;
  t.n_states = 2;
  t.probs = Mat::Zero(2, 2);
  t.probs << 0.25, 0.75, 0.5, 0.5;
  t.occupancy = Vec::Zero(2);
  t.occupancy << 12, 7;
  t.labels = {"opening", "closing"};
  save_transition_csv(t, "table_test.csv");
  TransitionTable loaded = load_transition_csv("table_test.csv");
  CHECK(loaded.n_states == 2);
  CHECK(loaded.labels == t.labels);
  CHECK(loaded.probs.isApprox(t.probs, 1e-6));
  CHECK(loaded.occupancy.isApprox(t.occupancy));
  std::remove("table_test.csv");
}
