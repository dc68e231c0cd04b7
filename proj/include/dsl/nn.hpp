#pragma once

// Minimal reverse-mode autodiff over Eigen matrices, plus the layers and the
// optimizer used by the sequence models. Values are computed eagerly at node
// creation; gradients flow on Graph::backward in reverse creation order.

#include "dsl/common.hpp"

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace dsl::nn {

struct Param {
  std::string name;
  Mat value;
  Mat grad;    // accumulated until the next optimizer step
  Mat adam_m;
  Mat adam_v;
  bool trainable = true;
};

class ParamStore {
 public:
  Param& create(const std::string& name, int rows, int cols);
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool has(const std::string& name) const;
  const std::vector<std::unique_ptr<Param>>& items() const { return items_; }
  std::vector<std::unique_ptr<Param>>& items() { return items_; }

  void zero_grads();
  void scale_grads(double s);
  size_t parameter_count() const;

  // Deep copies of trainable values, used to keep the best checkpoint.
  std::map<std::string, Mat> snapshot_values() const;
  void restore_values(const std::map<std::string, Mat>& snap);

  void save(const std::string& path) const;
  void load(const std::string& path);  // shapes must match the existing store

 private:
  std::vector<std::unique_ptr<Param>> items_;
  std::map<std::string, Param*> by_name_;
};

double global_grad_norm(const ParamStore& store);
void clip_grad_norm(ParamStore& store, double max_norm);

struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step_count = 0;
  void step(ParamStore& store);
};

void fill_uniform(Mat& m, double lo, double hi, Rng& rng);

class Graph;

struct Node {
  Mat value;
  Mat grad;
  std::function<void(Node&)> backprop;  // adds this node's grad into parents
};

// Lightweight handle; nodes are owned by the Graph.
struct Var {
  Graph* g = nullptr;
  Node* n = nullptr;
  const Mat& val() const { return n->value; }
  double scalar() const { return n->value(0, 0); }
};

class Graph {
 public:
  explicit Graph(bool training = false, Rng* rng = nullptr)
      : training_(training), rng_(rng) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var make(Mat value, std::function<void(Node&)> backprop = nullptr);
  Var constant(Mat value) { return make(std::move(value)); }
  Var scalar(double v) { return make(Mat::Constant(1, 1, v)); }

  // One leaf per Param per graph; gradients collected by flush_param_grads.
  Var leaf(Param& p);

  void backward(Var root);       // root must be 1x1
  void flush_param_grads();      // Param.grad += leaf grad

  bool training() const { return training_; }
  Rng& rng();
  size_t size() const { return nodes_.size(); }

 private:
  std::deque<Node> nodes_;  // stable addresses, creation order = topo order
  std::vector<std::pair<Param*, Node*>> leaves_;
  std::map<const Param*, Node*> leaf_map_;
  bool training_ = false;
  Rng* rng_ = nullptr;
  bool backward_done_ = false;
};

// ---- ops (column-vector oriented unless noted) ----
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scale(double s, Var a);
Var matmul(Var a, Var b);
Var tanh_v(Var a);
Var sigmoid_v(Var a);
Var exp_v(Var a);
Var log_v(Var a, double floor = 0.0);
Var softmax_v(Var a);
Var log_softmax_v(Var a);
Var sum_v(Var a);                       // -> 1x1
Var pick(Var a, int index);             // vector entry -> 1x1
Var slice_rows(Var a, int start, int len);
Var concat(const std::vector<Var>& parts);  // vstack column vectors
Var average(const std::vector<Var>& xs);    // same-shape mean
Var add_all(const std::vector<Var>& xs);    // same-shape sum
Var straight_through_onehot(Var y);         // forward one-hot, backward identity
Var dropout(Var a, double rate);            // inverted dropout, train mode only
Var embedding_row(Var table, int id);                          // -> col vector
Var embedding_rows_mean(Var table, const std::vector<int>& ids);

// ---- layers ----

// Single-hidden-layer fully connected net: out = W2 * drop(tanh(W1*x + b1)) + b2.
struct Mlp {
  Param* w1 = nullptr;
  Param* b1 = nullptr;
  Param* w2 = nullptr;
  Param* b2 = nullptr;
};
Mlp make_mlp(ParamStore& store, const std::string& prefix, int in, int hidden,
             int out, Rng& rng);
Var apply_mlp(Graph& g, const Mlp& m, Var x, double dropout_rate);

struct LstmCell {
  Param* wx = nullptr;  // 4H x in, gate order i,f,g,o
  Param* wh = nullptr;  // 4H x H
  Param* b = nullptr;   // 4H x 1
  int hidden = 0;
};
LstmCell make_lstm(ParamStore& store, const std::string& prefix, int in,
                   int hidden, Rng& rng);
struct LstmVars {
  Var h;
  Var c;
};
LstmVars lstm_step(Graph& g, const LstmCell& cell, Var x, LstmVars prev);

}  // namespace dsl::nn
