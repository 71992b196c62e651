#pragma once

#include <Eigen/Dense>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "evoquer/common.hpp"

namespace evoquer::neural {

using Mat = Eigen::MatrixXd;

struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
  bool trainable = true;

  int rows() const { return static_cast<int>(value.rows()); }
  int cols() const { return static_cast<int>(value.cols()); }
};

// Named parameter collection with stable insertion order (the order drives
// deterministic initialization and optimizer iteration).
class ParameterSet {
 public:
  Parameter& create(const std::string& name, int rows, int cols);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  void zero_grad();
  std::size_t size() const { return params_.size(); }
  std::size_t coordinate_count() const;

 private:
  std::deque<Parameter> params_;  // stable addresses
  std::map<std::string, Parameter*> by_name_;
};

// Uniform [-1/sqrt(fan), 1/sqrt(fan)] per matrix, fan = input dimension
// (cols for weight matrices, rows for column vectors). Order of creation
// fixes the draws.
void init_uniform(ParameterSet& params, Rng& rng);

// Reverse-mode tape over Eigen matrices. Nodes are appended in evaluation
// order, so reverse index order is a valid topological order for backward.
// One Graph instance is single-threaded by construction.
class Graph {
 public:
  struct Value {
    int i = -1;
    bool valid() const { return i >= 0; }
  };

  // ---- leaves ----
  Value param(Parameter& p);          // backward accumulates into p.grad
  Value input(Mat v);                 // differentiable leaf
  Value constant(Mat v);              // gradient is not tracked
  Value scalar_constant(double v);
  // row lookup into an embedding table (|V| x d), result d x 1;
  // backward touches only the looked-up row
  Value embed(Parameter& table, int row);

  // ---- ops ----
  Value matmul(Value a, Value b);
  Value add(Value a, Value b);                 // same shape
  Value sub(Value a, Value b);
  Value hadamard(Value a, Value b);
  Value affine(Value a, double scale, double shift);  // scale*A + shift
  Value scale(Value a, double k) { return affine(a, k, 0.0); }
  Value add_col_broadcast(Value m, Value col);  // M + col * ones(1, M.cols())
  Value sigmoid(Value a);
  Value tanh(Value a);
  Value softmax(Value a);                      // column vector, max-subtracted
  Value clamp(Value a, double lo, double hi);
  Value max_const(Value a, double floor);
  Value concat_rows(std::span<const Value> parts);
  Value concat_cols(std::span<const Value> parts);
  Value slice_rows(Value a, int first, int count);
  Value transpose(Value a);
  Value sum(Value a);                          // 1x1
  Value mean(Value a);                         // 1x1
  Value dot(Value a, Value b);                 // column vectors, 1x1
  // -log softmax(logits)[target], numerically stable, 1x1
  Value nll_pick(Value logits, int target);
  // mean over coordinates of the smooth-L1 distance to a constant target
  Value smooth_l1(Value pred, const Mat& target, double beta);

  void backward(Value root);  // root must be 1x1

  const Mat& value(Value v) const;
  // gradient of the last backward root w.r.t. this node (zeros if the node
  // was not on the path)
  Mat grad(Value v) const;
  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Mat val;
    Mat grad;  // empty until touched by backward
    bool needs_grad = true;
    std::function<void(Graph&, const Node&)> back;
  };

  int push(Mat val, bool needs_grad,
           std::function<void(Graph&, const Node&)> back);
  void accumulate(int target, const Mat& g);
  const Node& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
  Node& node(int i) { return nodes_[static_cast<std::size_t>(i)]; }

  std::deque<Node> nodes_;
};

using Value = Graph::Value;

bool all_finite(const Mat& m);

}  // namespace evoquer::neural
