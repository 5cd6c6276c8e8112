#pragma once

#include <deque>
#include <functional>
#include <string>
#include <vector>

namespace vpt::nn {

// A named trainable parameter. Lives outside any Graph; gradients accumulate
// across forward/backward passes until the optimizer consumes them.
struct Param {
  std::string name;
  int rows = 0, cols = 0;
  std::vector<double> v;
  std::vector<double> g;

  Param() = default;
  Param(std::string n, int r, int c)
      : name(std::move(n)), rows(r), cols(c),
        v(static_cast<std::size_t>(r) * c, 0.0),
        g(static_cast<std::size_t>(r) * c, 0.0) {}
  std::size_t size() const { return v.size(); }
  void zero_grad() { std::fill(g.begin(), g.end(), 0.0); }
};

// Every tape value is a row-major [rows x cols] matrix of doubles.
struct Node {
  int rows = 0, cols = 0;
  std::vector<double> v;
  std::vector<double> g;
  std::function<void()> backward;
  std::size_t size() const { return v.size(); }
  double scalar() const { return v[0]; }
};

// Dynamic tape: nodes are created in topological order; backward() walks the
// tape in reverse. One Graph per training step; clear() between steps.
class Graph {
 public:
  Node* input(int rows, int cols);
  Node* input(int rows, int cols, const double* data);
  Node* constant(double value);
  Node* leaf(Param& p);  // binds a parameter; grads flushed on backward()

  Node* matmul(Node* a, Node* b);              // [n,k]x[k,m]
  Node* linear(Node* x, Node* w, Node* b);     // x*w + broadcast row b [1,m]
  Node* add(Node* a, Node* b);                 // same shape
  Node* scale(Node* a, double c);
  Node* relu(Node* x);
  Node* tanh_(Node* x);
  Node* layer_norm(Node* x, Node* gain, Node* bias);  // per-row, gain/bias [1,d]
  Node* slice_cols(Node* x, int start, int len);
  Node* slice_rows(Node* x, int start, int len);
  Node* concat_cols(const std::vector<Node*>& xs);
  Node* mean_pool_groups(Node* x, int group);  // [n*group,d] -> [n,d]

  // Temporal mixing over the row (time) axis. taps holds k weight nodes of
  // shape [d,dout]; offsets are tap-relative time shifts (zero padded).
  Node* temporal_conv(Node* x, const std::vector<Node*>& taps,
                      const std::vector<int>& offsets, Node* bias);

  // Multi-head self attention over rows. qkv [d,3d], out [d,d].
  Node* attention(Node* x, Node* wqkv, Node* wout, int heads, bool causal);

  // Losses (all SUM-reduced scalars; scale() for means). label -1 masks a row.
  Node* softmax_xent(Node* logits, const std::vector<int>& labels);
  Node* logp_rows(Node* logits, const std::vector<int>& labels);  // [n,1]
  Node* mse(Node* pred, const std::vector<double>& targets);
  // KL(p || q) with p a fixed distribution given by p_logits; rows with
  // weight 0 are skipped.
  Node* kl_to_fixed(const std::vector<double>& p_logits, Node* q_logits,
                    const std::vector<double>& row_weights);
  Node* entropy(Node* logits);  // sum of per-row entropies
  // PPO clipped surrogate: -sum_i min(r_i A_i, clip(r_i) A_i), r = exp(lp-old).
  Node* ppo_surrogate(Node* logp, const std::vector<double>& old_logp,
                      const std::vector<double>& advantages, double clip);

  void backward(Node* loss);  // seeds d(loss)=1, flushes grads into Params
  void clear();
  std::size_t num_nodes() const { return tape_.size(); }

 private:
  Node* alloc(int rows, int cols);
  std::deque<Node> tape_;
  std::vector<std::pair<Param*, Node*>> bound_;
};

}  // namespace vpt::nn
