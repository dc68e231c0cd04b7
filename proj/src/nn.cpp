#include "dsl/nn.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace dsl::nn {

Param& ParamStore::create(const std::string& name, int rows, int cols) {
  if (by_name_.count(name)) throw Error("duplicate parameter name: " + name);
  auto p = std::make_unique<Param>();
  p->name = name;
  p->value = Mat::Zero(rows, cols);
  p->grad = Mat::Zero(rows, cols);
  p->adam_m = Mat::Zero(rows, cols);
  p->adam_v = Mat::Zero(rows, cols);
  Param* raw = p.get();
  items_.push_back(std::move(p));
  by_name_[name] = raw;
  return *raw;
}

Param& ParamStore::at(const std::string& name) {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw Error("no such parameter: " + name);
  return *it->second;
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw Error("no such parameter: " + name);
  return *it->second;
}

bool ParamStore::has(const std::string& name) const {
  return by_name_.count(name) > 0;
}

void ParamStore::zero_grads() {
  for (auto& p : items_) p->grad.setZero();
}

void ParamStore::scale_grads(double s) {
  for (auto& p : items_) p->grad *= s;
}

size_t ParamStore::parameter_count() const {
  size_t n = 0;
  for (const auto& p : items_) n += static_cast<size_t>(p->value.size());
  return n;
}

std::map<std::string, Mat> ParamStore::snapshot_values() const {
  std::map<std::string, Mat> snap;
  for (const auto& p : items_) snap[p->name] = p->value;
  return snap;
}

void ParamStore::restore_values(const std::map<std::string, Mat>& snap) {
  for (auto& p : items_) {
    auto it = snap.find(p->name);
    if (it == snap.end()) throw Error("snapshot missing parameter: " + p->name);
    p->value = it->second;
  }
}

void ParamStore::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write parameter file: " + path);
  const char magic[4] = {'D', 'S', 'L', 'P'};
  out.write(magic, 4);
  uint64_t count = items_.size();
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (const auto& p : items_) {
    uint32_t len = static_cast<uint32_t>(p->name.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(p->name.data(), len);
    uint32_t rows = static_cast<uint32_t>(p->value.rows());
    uint32_t cols = static_cast<uint32_t>(p->value.cols());
    out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
    out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(sizeof(double)) * p->value.size());
  }
  if (!out) throw Error("failed writing parameter file: " + path);
}

void ParamStore::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read parameter file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string_view(magic, 4) != "DSLP")
    throw Error("bad parameter file header: " + path);
  uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  for (uint64_t i = 0; i < count; ++i) {
    uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string name(len, '\0');
    in.read(name.data(), len);
    uint32_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
    in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
    if (!in) throw Error("truncated parameter file: " + path);
    Param& p = at(name);
    if (p.value.rows() != rows || p.value.cols() != cols)
      throw Error("parameter shape mismatch for " + name);
    in.read(reinterpret_cast<char*>(p.value.data()),
            static_cast<std::streamsize>(sizeof(double)) * p.value.size());
    if (!in) throw Error("truncated parameter file: " + path);
  }
}

double global_grad_norm(const ParamStore& store) {
  double sq = 0.0;
  for (const auto& p : store.items()) sq += p->grad.squaredNorm();
  return std::sqrt(sq);
}

void clip_grad_norm(ParamStore& store, double max_norm) {
  const double norm = global_grad_norm(store);
  if (norm > max_norm && norm > 0.0) store.scale_grads(max_norm / norm);
}

void Adam::step(ParamStore& store) {
  ++step_count;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
  for (auto& p : store.items()) {
    if (!p->trainable) continue;
    p->adam_m = beta1 * p->adam_m + (1.0 - beta1) * p->grad;
    p->adam_v =
        beta2 * p->adam_v.array() + (1.0 - beta2) * p->grad.array().square();
    p->value.array() -= lr * (p->adam_m.array() / bc1) /
                        ((p->adam_v.array() / bc2).sqrt() + eps);
  }
}

void fill_uniform(Mat& m, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = dist(rng);
}

// ---- graph ----

Var Graph::make(Mat value, std::function<void(Node&)> backprop) {
  if (backward_done_) throw Error("graph reused after backward");
  nodes_.push_back(Node{std::move(value), Mat(), std::move(backprop)});
  return Var{this, &nodes_.back()};
}

Var Graph::leaf(Param& p) {
  auto it = leaf_map_.find(&p);
  if (it != leaf_map_.end()) return Var{this, it->second};
  Var v = make(p.value);
  leaf_map_[&p] = v.n;
  leaves_.emplace_back(&p, v.n);
  return v;
}

void Graph::backward(Var root) {
  if (backward_done_) throw Error("backward called twice on one graph");
  backward_done_ = true;
  if (root.n->value.size() != 1) throw Error("backward root must be 1x1");
  for (auto& node : nodes_) node.grad = Mat::Zero(node.value.rows(), node.value.cols());
  root.n->grad(0, 0) = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->backprop) it->backprop(*it);
  }
}

void Graph::flush_param_grads() {
  for (auto& [param, node] : leaves_) {
    if (node->grad.size() > 0) param->grad += node->grad;
  }
}

Rng& Graph::rng() {
  if (!rng_) throw Error("graph has no rng attached");
  return *rng_;
}

// ---- ops ----

namespace {
void check_same_graph(Var a, Var b) {
  if (a.g != b.g) throw Error("vars from different graphs");
}
}  // namespace

Var add(Var a, Var b) {
  check_same_graph(a, b);
  Node* pa = a.n;
  Node* pb = b.n;
  return a.g->make(a.val() + b.val(), [pa, pb](Node& n) {
    pa->grad += n.grad;
    pb->grad += n.grad;
  });
}

Var sub(Var a, Var b) {
  check_same_graph(a, b);
  Node* pa = a.n;
  Node* pb = b.n;
  return a.g->make(a.val() - b.val(), [pa, pb](Node& n) {
    pa->grad += n.grad;
    pb->grad -= n.grad;
  });
}

Var mul(Var a, Var b) {
  check_same_graph(a, b);
  Node* pa = a.n;
  Node* pb = b.n;
  return a.g->make(a.val().cwiseProduct(b.val()), [pa, pb](Node& n) {
    pa->grad += n.grad.cwiseProduct(pb->value);
    pb->grad += n.grad.cwiseProduct(pa->value);
  });
}

Var scale(double s, Var a) {
  Node* pa = a.n;
  return a.g->make(s * a.val(), [pa, s](Node& n) { pa->grad += s * n.grad; });
}

Var matmul(Var a, Var b) {
  check_same_graph(a, b);
  Node* pa = a.n;
  Node* pb = b.n;
  return a.g->make(a.val() * b.val(), [pa, pb](Node& n) {
    pa->grad.noalias() += n.grad * pb->value.transpose();
    pb->grad.noalias() += pa->value.transpose() * n.grad;
  });
}

Var tanh_v(Var a) {
  Node* pa = a.n;
  return a.g->make(a.val().array().tanh(), [pa](Node& n) {
    pa->grad.array() += n.grad.array() * (1.0 - n.value.array().square());
  });
}

Var sigmoid_v(Var a) {
  Node* pa = a.n;
  Mat s = (1.0 / (1.0 + (-a.val().array()).exp()));
  return a.g->make(std::move(s), [pa](Node& n) {
    pa->grad.array() +=
        n.grad.array() * n.value.array() * (1.0 - n.value.array());
  });
}

Var exp_v(Var a) {
  Node* pa = a.n;
  return a.g->make(a.val().array().exp(), [pa](Node& n) {
    pa->grad.array() += n.grad.array() * n.value.array();
  });
}

Var log_v(Var a, double floor) {
  Node* pa = a.n;
  Mat floored = a.val().array().max(floor);
  return a.g->make(floored.array().log(), [pa, floored](Node& n) {
    pa->grad.array() += n.grad.array() / floored.array();
  });
}

Var softmax_v(Var a) {
  Node* pa = a.n;
  if (a.val().cols() != 1) throw Error("softmax_v expects a column vector");
  Vec s = softmax(a.val().col(0));
  return a.g->make(s, [pa](Node& n) {
    const Vec& y = n.value.col(0);
    const Vec& gy = n.grad.col(0);
    const double dot = y.dot(gy);
    pa->grad.col(0).array() += y.array() * (gy.array() - dot);
  });
}

Var log_softmax_v(Var a) {
  Node* pa = a.n;
  if (a.val().cols() != 1) throw Error("log_softmax_v expects a column vector");
  Vec ls = log_softmax(a.val().col(0));
  return a.g->make(ls, [pa](Node& n) {
    const Vec y = n.value.col(0).array().exp();
    const Vec& gy = n.grad.col(0);
    const double total = gy.sum();
    pa->grad.col(0).array() += gy.array() - total * y.array();
  });
}

Var sum_v(Var a) {
  Node* pa = a.n;
  return a.g->make(Mat::Constant(1, 1, a.val().sum()), [pa](Node& n) {
    pa->grad.array() += n.grad(0, 0);
  });
}

Var pick(Var a, int index) {
  Node* pa = a.n;
  if (a.val().cols() != 1) throw Error("pick expects a column vector");
  if (index < 0 || index >= a.val().rows()) throw Error("pick index out of range");
  return a.g->make(Mat::Constant(1, 1, a.val()(index, 0)),
                   [pa, index](Node& n) { pa->grad(index, 0) += n.grad(0, 0); });
}

Var slice_rows(Var a, int start, int len) {
  Node* pa = a.n;
  if (start < 0 || start + len > a.val().rows()) throw Error("slice out of range");
  return a.g->make(a.val().middleRows(start, len), [pa, start, len](Node& n) {
    pa->grad.middleRows(start, len) += n.grad;
  });
}

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error("concat of nothing");
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.val().cols() != 1) throw Error("concat expects column vectors");
    rows += p.val().rows();
  }
  Mat out(rows, 1);
  Eigen::Index at = 0;
  std::vector<Node*> nodes;
  std::vector<Eigen::Index> offsets;
  for (const auto& p : parts) {
    out.middleRows(at, p.val().rows()) = p.val();
    nodes.push_back(p.n);
    offsets.push_back(at);
    at += p.val().rows();
  }
  return parts[0].g->make(std::move(out), [nodes, offsets](Node& n) {
    for (size_t i = 0; i < nodes.size(); ++i) {
      nodes[i]->grad += n.grad.middleRows(offsets[i], nodes[i]->value.rows());
    }
  });
}

Var average(const std::vector<Var>& xs) {
  if (xs.empty()) throw Error("average of nothing");
  Mat acc = xs[0].val();
  for (size_t i = 1; i < xs.size(); ++i) acc += xs[i].val();
  const double inv = 1.0 / static_cast<double>(xs.size());
  acc *= inv;
  std::vector<Node*> nodes;
  nodes.reserve(xs.size());
  for (const auto& x : xs) nodes.push_back(x.n);
  return xs[0].g->make(std::move(acc), [nodes, inv](Node& n) {
    for (Node* p : nodes) p->grad += inv * n.grad;
  });
}

Var add_all(const std::vector<Var>& xs) {
  if (xs.empty()) throw Error("add_all of nothing");
  Mat acc = xs[0].val();
  for (size_t i = 1; i < xs.size(); ++i) acc += xs[i].val();
  std::vector<Node*> nodes;
  nodes.reserve(xs.size());
  for (const auto& x : xs) nodes.push_back(x.n);
  return xs[0].g->make(std::move(acc), [nodes](Node& n) {
    for (Node* p : nodes) p->grad += n.grad;
  });
}

Var straight_through_onehot(Var y) {
  Node* py = y.n;
  if (y.val().cols() != 1) throw Error("straight_through expects a column vector");
  const int idx = argmax(y.val().col(0));
  return y.g->make(one_hot(idx, static_cast<int>(y.val().rows())),
                   [py](Node& n) { py->grad += n.grad; });
}

Var dropout(Var a, double rate) {
  if (!a.g->training() || rate <= 0.0) return a;
  if (rate >= 1.0) throw Error("dropout rate must be < 1");
  Node* pa = a.n;
  std::bernoulli_distribution keep(1.0 - rate);
  Mat mask(a.val().rows(), a.val().cols());
  Rng& rng = a.g->rng();
  const double inv_keep = 1.0 / (1.0 - rate);
  for (Eigen::Index c = 0; c < mask.cols(); ++c)
    for (Eigen::Index r = 0; r < mask.rows(); ++r)
      mask(r, c) = keep(rng) ? inv_keep : 0.0;
  return a.g->make(a.val().cwiseProduct(mask), [pa, mask](Node& n) {
    pa->grad += n.grad.cwiseProduct(mask);
  });
}

Var embedding_row(Var table, int id) {
  Node* pt = table.n;
  if (id < 0 || id >= table.val().rows()) throw Error("embedding id out of range");
  return table.g->make(table.val().row(id).transpose(), [pt, id](Node& n) {
    pt->grad.row(id) += n.grad.transpose();
  });
}

Var embedding_rows_mean(Var table, const std::vector<int>& ids) {
  Node* pt = table.n;
  if (ids.empty()) throw Error("embedding_rows_mean of empty id list");
  Mat acc = Mat::Zero(table.val().cols(), 1);
  for (int id : ids) {
    if (id < 0 || id >= table.val().rows())
      throw Error("embedding id out of range");
    acc += table.val().row(id).transpose();
  }
  const double inv = 1.0 / static_cast<double>(ids.size());
  acc *= inv;
  return table.g->make(std::move(acc), [pt, ids, inv](Node& n) {
    for (int id : ids) pt->grad.row(id) += inv * n.grad.transpose();
  });
}

// ---- layers ----

Mlp make_mlp(ParamStore& store, const std::string& prefix, int in, int hidden,
             int out, Rng& rng) {
  Mlp m;
  m.w1 = &store.create(prefix + ".w1", hidden, in);
  m.b1 = &store.create(prefix + ".b1", hidden, 1);
  m.w2 = &store.create(prefix + ".w2", out, hidden);
  m.b2 = &store.create(prefix + ".b2", out, 1);
  const double k1 = 1.0 / std::sqrt(static_cast<double>(in));
  const double k2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  fill_uniform(m.w1->value, -k1, k1, rng);
  fill_uniform(m.w2->value, -k2, k2, rng);
  return m;
}

Var apply_mlp(Graph& g, const Mlp& m, Var x, double dropout_rate) {
  Var h = tanh_v(add(matmul(g.leaf(*m.w1), x), g.leaf(*m.b1)));
  h = dropout(h, dropout_rate);
  return add(matmul(g.leaf(*m.w2), h), g.leaf(*m.b2));
}

LstmCell make_lstm(ParamStore& store, const std::string& prefix, int in,
                   int hidden, Rng& rng) {
  LstmCell cell;
  cell.hidden = hidden;
  cell.wx = &store.create(prefix + ".wx", 4 * hidden, in);
  cell.wh = &store.create(prefix + ".wh", 4 * hidden, hidden);
  cell.b = &store.create(prefix + ".b", 4 * hidden, 1);
  const double kx = 1.0 / std::sqrt(static_cast<double>(in));
  const double kh = 1.0 / std::sqrt(static_cast<double>(hidden));
  fill_uniform(cell.wx->value, -kx, kx, rng);
  fill_uniform(cell.wh->value, -kh, kh, rng);
  cell.b->value.middleRows(hidden, hidden).setConstant(1.0);  // forget gate bias
  return cell;
}

LstmVars lstm_step(Graph& g, const LstmCell& cell, Var x, LstmVars prev) {
  const int h = cell.hidden;
  Var gates = add(add(matmul(g.leaf(*cell.wx), x), matmul(g.leaf(*cell.wh), prev.h)),
                  g.leaf(*cell.b));
  Var i = sigmoid_v(slice_rows(gates, 0, h));
  Var f = sigmoid_v(slice_rows(gates, h, h));
  Var cand = tanh_v(slice_rows(gates, 2 * h, h));
  Var o = sigmoid_v(slice_rows(gates, 3 * h, h));
  Var c = add(mul(f, prev.c), mul(i, cand));
  Var hh = mul(o, tanh_v(c));
  return LstmVars{hh, c};
}

}  // namespace dsl::nn
