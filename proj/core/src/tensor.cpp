#include "vpt/nn/tensor.hpp"

#include <Eigen/Dense>

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace vpt::nn {

namespace {
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<Mat>;
using CMapM = Eigen::Map<const Mat>;

MapM mat(std::vector<double>& v, int r, int c) { return MapM(v.data(), r, c); }
CMapM mat(const std::vector<double>& v, int r, int c) {
  return CMapM(v.data(), r, c);
}
}  // namespace

Node* Graph::alloc(int rows, int cols) {
  tape_.emplace_back();
  Node* n = &tape_.back();
  n->rows = rows;
  n->cols = cols;
  n->v.assign(static_cast<std::size_t>(rows) * cols, 0.0);
  n->g.assign(static_cast<std::size_t>(rows) * cols, 0.0);
  return n;
}

Node* Graph::input(int rows, int cols) { return alloc(rows, cols); }

Node* Graph::input(int rows, int cols, const double* data) {
  Node* n = alloc(rows, cols);
  std::copy(data, data + n->size(), n->v.begin());
  return n;
}

Node* Graph::constant(double value) {
  Node* n = alloc(1, 1);
  n->v[0] = value;
  return n;
}

Node* Graph::leaf(Param& p) {
  Node* n = alloc(p.rows, p.cols);
  n->v = p.v;
  bound_.emplace_back(&p, n);
  return n;
}

Node* Graph::matmul(Node* a, Node* b) {
  if (a->cols != b->rows) throw std::invalid_argument("matmul shape mismatch");
  Node* y = alloc(a->rows, b->cols);
  mat(y->v, y->rows, y->cols) =
      mat(a->v, a->rows, a->cols) * mat(b->v, b->rows, b->cols);
  y->backward = [a, b, y] {
    mat(a->g, a->rows, a->cols) +=
        mat(y->g, y->rows, y->cols) * mat(b->v, b->rows, b->cols).transpose();
    mat(b->g, b->rows, b->cols) +=
        mat(a->v, a->rows, a->cols).transpose() * mat(y->g, y->rows, y->cols);
  };
  return y;
}

Node* Graph::linear(Node* x, Node* w, Node* b) {
  if (x->cols != w->rows || b->rows != 1 || b->cols != w->cols)
    throw std::invalid_argument("linear shape mismatch");
  Node* y = alloc(x->rows, w->cols);
  mat(y->v, y->rows, y->cols) =
      (mat(x->v, x->rows, x->cols) * mat(w->v, w->rows, w->cols)).rowwise() +
      Eigen::Map<const Eigen::RowVectorXd>(b->v.data(), b->cols);
  y->backward = [x, w, b, y] {
    mat(x->g, x->rows, x->cols) +=
        mat(y->g, y->rows, y->cols) * mat(w->v, w->rows, w->cols).transpose();
    mat(w->g, w->rows, w->cols) +=
        mat(x->v, x->rows, x->cols).transpose() * mat(y->g, y->rows, y->cols);
    Eigen::Map<Eigen::RowVectorXd>(b->g.data(), b->cols) +=
        mat(y->g, y->rows, y->cols).colwise().sum();
  };
  return y;
}

Node* Graph::add(Node* a, Node* b) {
  if (a->rows != b->rows || a->cols != b->cols)
    throw std::invalid_argument("add shape mismatch");
  Node* y = alloc(a->rows, a->cols);
  for (std::size_t i = 0; i < y->size(); ++i) y->v[i] = a->v[i] + b->v[i];
  y->backward = [a, b, y] {
    for (std::size_t i = 0; i < y->size(); ++i) {
      a->g[i] += y->g[i];
      b->g[i] += y->g[i];
    }
  };
  return y;
}

Node* Graph::scale(Node* a, double c) {
  Node* y = alloc(a->rows, a->cols);
  for (std::size_t i = 0; i < y->size(); ++i) y->v[i] = a->v[i] * c;
  y->backward = [a, y, c] {
    for (std::size_t i = 0; i < y->size(); ++i) a->g[i] += y->g[i] * c;
  };
  return y;
}

Node* Graph::relu(Node* x) {
  Node* y = alloc(x->rows, x->cols);
  for (std::size_t i = 0; i < y->size(); ++i) y->v[i] = x->v[i] > 0 ? x->v[i] : 0;
  y->backward = [x, y] {
    for (std::size_t i = 0; i < y->size(); ++i)
      if (x->v[i] > 0) x->g[i] += y->g[i];
  };
  return y;
}

Node* Graph::tanh_(Node* x) {
  Node* y = alloc(x->rows, x->cols);
  for (std::size_t i = 0; i < y->size(); ++i) y->v[i] = std::tanh(x->v[i]);
  y->backward = [x, y] {
    for (std::size_t i = 0; i < y->size(); ++i)
      x->g[i] += y->g[i] * (1.0 - y->v[i] * y->v[i]);
  };
  return y;
}

Node* Graph::layer_norm(Node* x, Node* gain, Node* bias) {
  const int n = x->rows, d = x->cols;
  if (gain->cols != d || bias->cols != d)
    throw std::invalid_argument("layer_norm shape mismatch");
  Node* y = alloc(n, d);
  auto* stats = alloc(n, 2);  // mean, inv-std per row (kept for backward)
  constexpr double kEps = 1e-5;
  for (int i = 0; i < n; ++i) {
    const double* xi = &x->v[static_cast<std::size_t>(i) * d];
    double mean = 0;
    for (int j = 0; j < d; ++j) mean += xi[j];
    mean /= d;
    double var = 0;
    for (int j = 0; j < d; ++j) var += (xi[j] - mean) * (xi[j] - mean);
    var /= d;
    const double inv = 1.0 / std::sqrt(var + kEps);
    stats->v[2 * i] = mean;
    stats->v[2 * i + 1] = inv;
    double* yi = &y->v[static_cast<std::size_t>(i) * d];
    for (int j = 0; j < d; ++j)
      yi[j] = (xi[j] - mean) * inv * gain->v[j] + bias->v[j];
  }
  y->backward = [x, gain, bias, y, stats, n, d] {
    for (int i = 0; i < n; ++i) {
      const double mean = stats->v[2 * i], inv = stats->v[2 * i + 1];
      const double* xi = &x->v[static_cast<std::size_t>(i) * d];
      const double* gyi = &y->g[static_cast<std::size_t>(i) * d];
      double sum_gh = 0, sum_ghx = 0;  // sums of g*gamma and g*gamma*xhat
      for (int j = 0; j < d; ++j) {
        const double xhat = (xi[j] - mean) * inv;
        const double gh = gyi[j] * gain->v[j];
        sum_gh += gh;
        sum_ghx += gh * xhat;
        gain->g[j] += gyi[j] * xhat;
        bias->g[j] += gyi[j];
      }
      double* gxi = &x->g[static_cast<std::size_t>(i) * d];
      for (int j = 0; j < d; ++j) {
        const double xhat = (xi[j] - mean) * inv;
        const double gh = gyi[j] * gain->v[j];
        gxi[j] += inv * (gh - sum_gh / d - xhat * sum_ghx / d);
      }
    }
  };
  return y;
}

Node* Graph::slice_cols(Node* x, int start, int len) {
  if (start < 0 || start + len > x->cols)
    throw std::invalid_argument("slice_cols out of range");
  Node* y = alloc(x->rows, len);
  for (int i = 0; i < x->rows; ++i)
    for (int j = 0; j < len; ++j)
      y->v[static_cast<std::size_t>(i) * len + j] =
          x->v[static_cast<std::size_t>(i) * x->cols + start + j];
  y->backward = [x, y, start, len] {
    for (int i = 0; i < x->rows; ++i)
      for (int j = 0; j < len; ++j)
        x->g[static_cast<std::size_t>(i) * x->cols + start + j] +=
            y->g[static_cast<std::size_t>(i) * len + j];
  };
  return y;
}

Node* Graph::slice_rows(Node* x, int start, int len) {
  if (start < 0 || start + len > x->rows)
    throw std::invalid_argument("slice_rows out of range");
  Node* y = alloc(len, x->cols);
  std::copy(x->v.begin() + static_cast<std::ptrdiff_t>(start) * x->cols,
            x->v.begin() + static_cast<std::ptrdiff_t>(start + len) * x->cols,
            y->v.begin());
  y->backward = [x, y, start] {
    for (std::size_t i = 0; i < y->size(); ++i)
      x->g[static_cast<std::size_t>(start) * x->cols + i] += y->g[i];
  };
  return y;
}

Node* Graph::concat_cols(const std::vector<Node*>& xs) {
  int cols = 0;
  for (Node* x : xs) cols += x->cols;
  Node* y = alloc(xs[0]->rows, cols);
  int off = 0;
  for (Node* x : xs) {
    for (int i = 0; i < x->rows; ++i)
      for (int j = 0; j < x->cols; ++j)
        y->v[static_cast<std::size_t>(i) * cols + off + j] =
            x->v[static_cast<std::size_t>(i) * x->cols + j];
    off += x->cols;
  }
  auto parts = xs;
  y->backward = [parts, y, cols] {
    int off2 = 0;
    for (Node* x : parts) {
      for (int i = 0; i < x->rows; ++i)
        for (int j = 0; j < x->cols; ++j)
          x->g[static_cast<std::size_t>(i) * x->cols + j] +=
              y->g[static_cast<std::size_t>(i) * cols + off2 + j];
      off2 += x->cols;
    }
  };
  return y;
}

Node* Graph::mean_pool_groups(Node* x, int group) {
  if (x->rows % group != 0)
    throw std::invalid_argument("mean_pool_groups: rows not divisible");
  const int n = x->rows / group, d = x->cols;
  Node* y = alloc(n, d);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < group; ++k)
      for (int j = 0; j < d; ++j)
        y->v[static_cast<std::size_t>(i) * d + j] +=
            x->v[(static_cast<std::size_t>(i) * group + k) * d + j] / group;
  y->backward = [x, y, n, d, group] {
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < group; ++k)
        for (int j = 0; j < d; ++j)
          x->g[(static_cast<std::size_t>(i) * group + k) * d + j] +=
              y->g[static_cast<std::size_t>(i) * d + j] / group;
  };
  return y;
}

Node* Graph::temporal_conv(Node* x, const std::vector<Node*>& taps,
                           const std::vector<int>& offsets, Node* bias) {
  if (taps.size() != offsets.size())
    throw std::invalid_argument("temporal_conv tap/offset mismatch");
  const int t = x->rows, dout = taps[0]->cols;
  Node* y = alloc(t, dout);
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < dout; ++j)
      y->v[static_cast<std::size_t>(i) * dout + j] = bias->v[j];
  for (std::size_t k = 0; k < taps.size(); ++k) {
    const int off = offsets[k];
    const int lo = std::max(0, -off), hi = std::min(t, t - off);
    if (lo >= hi) continue;
    mat(y->v, t, dout).middleRows(lo, hi - lo) +=
        mat(x->v, t, x->cols).middleRows(lo + off, hi - lo) *
        mat(taps[k]->v, taps[k]->rows, taps[k]->cols);
  }
  auto tps = taps;
  auto offs = offsets;
  y->backward = [x, tps, offs, bias, y, t, dout] {
    for (int i = 0; i < t; ++i)
      for (int j = 0; j < dout; ++j)
        bias->g[j] += y->g[static_cast<std::size_t>(i) * dout + j];
    for (std::size_t k = 0; k < tps.size(); ++k) {
      const int off = offs[k];
      const int lo = std::max(0, -off), hi = std::min(t, t - off);
      if (lo >= hi) continue;
      mat(x->g, t, x->cols).middleRows(lo + off, hi - lo) +=
          mat(y->g, t, dout).middleRows(lo, hi - lo) *
          mat(tps[k]->v, tps[k]->rows, tps[k]->cols).transpose();
      mat(tps[k]->g, tps[k]->rows, tps[k]->cols) +=
          mat(x->v, t, x->cols).middleRows(lo + off, hi - lo).transpose() *
          mat(y->g, t, dout).middleRows(lo, hi - lo);
    }
  };
  return y;
}

Node* Graph::attention(Node* x, Node* wqkv, Node* wout, int heads, bool causal) {
  const int t = x->rows, d = x->cols;
  if (wqkv->rows != d || wqkv->cols != 3 * d || d % heads != 0)
    throw std::invalid_argument("attention shape mismatch");
  const int dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  Node* qkv = matmul(x, wqkv);  // [t, 3d]
  // Per-head softmax attention, kept on the tape via primitive slices and a
  // fused softmax(QK^T)V node with hand-written backward.
  std::vector<Node*> head_outs;
  head_outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Node* q = slice_cols(qkv, h * dh, dh);
    Node* k = slice_cols(qkv, d + h * dh, dh);
    Node* v = slice_cols(qkv, 2 * d + h * dh, dh);
    Node* o = alloc(t, dh);
    auto* probs = alloc(t, t);
    {
      Mat scores = mat(q->v, t, dh) * mat(k->v, t, dh).transpose() * inv_sqrt;
      for (int i = 0; i < t; ++i) {
        const int jmax = causal ? i + 1 : t;
        double mx = -1e300;
        for (int j = 0; j < jmax; ++j) mx = std::max(mx, scores(i, j));
        double z = 0;
        for (int j = 0; j < jmax; ++j) {
          const double e = std::exp(scores(i, j) - mx);
          probs->v[static_cast<std::size_t>(i) * t + j] = e;
          z += e;
        }
        for (int j = 0; j < jmax; ++j)
          probs->v[static_cast<std::size_t>(i) * t + j] /= z;
      }
      mat(o->v, t, dh) = mat(probs->v, t, t) * mat(v->v, t, dh);
    }
    o->backward = [q, k, v, o, probs, t, dh, inv_sqrt] {
      // dV = P^T dO ; dP = dO V^T ; dS = P*(dP - rowsum(dP*P)) ; scaled.
      mat(v->g, t, dh) += mat(probs->v, t, t).transpose() * mat(o->g, t, dh);
      Mat dp = mat(o->g, t, dh) * mat(v->v, t, dh).transpose();
      Mat ds(t, t);
      for (int i = 0; i < t; ++i) {
        double dot = 0;
        for (int j = 0; j < t; ++j)
          dot += dp(i, j) * probs->v[static_cast<std::size_t>(i) * t + j];
        for (int j = 0; j < t; ++j) {
          const double p = probs->v[static_cast<std::size_t>(i) * t + j];
          ds(i, j) = p * (dp(i, j) - dot);
        }
      }
      mat(q->g, t, dh) += ds * mat(k->v, t, dh) * inv_sqrt;
      mat(k->g, t, dh) += ds.transpose() * mat(q->v, t, dh) * inv_sqrt;
    };
    head_outs.push_back(o);
  }
  Node* merged = concat_cols(head_outs);
  return matmul(merged, wout);
}

Node* Graph::softmax_xent(Node* logits, const std::vector<int>& labels) {
  const int n = logits->rows, c = logits->cols;
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("xent label count mismatch");
  for (int i = 0; i < n; ++i)
    if (labels[i] >= c) throw std::invalid_argument("xent label out of range");
  Node* loss = alloc(1, 1);
  auto* probs = alloc(n, c);
  double total = 0;
  for (int i = 0; i < n; ++i) {
    const double* zi = &logits->v[static_cast<std::size_t>(i) * c];
    double mx = zi[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, zi[j]);
    double z = 0;
    for (int j = 0; j < c; ++j) z += std::exp(zi[j] - mx);
    const double logz = std::log(z) + mx;
    for (int j = 0; j < c; ++j)
      probs->v[static_cast<std::size_t>(i) * c + j] = std::exp(zi[j] - logz);
    if (labels[i] >= 0) total += logz - zi[labels[i]];
  }
  loss->v[0] = total;
  auto lab = labels;
  loss->backward = [logits, loss, probs, lab, n, c] {
    const double gl = loss->g[0];
    for (int i = 0; i < n; ++i) {
      if (lab[i] < 0) continue;
      for (int j = 0; j < c; ++j)
        logits->g[static_cast<std::size_t>(i) * c + j] +=
            gl * (probs->v[static_cast<std::size_t>(i) * c + j] -
                  (j == lab[i] ? 1.0 : 0.0));
    }
  };
  return loss;
}

Node* Graph::logp_rows(Node* logits, const std::vector<int>& labels) {
  const int n = logits->rows, c = logits->cols;
  Node* y = alloc(n, 1);
  auto* probs = alloc(n, c);
  for (int i = 0; i < n; ++i) {
    const double* zi = &logits->v[static_cast<std::size_t>(i) * c];
    double mx = zi[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, zi[j]);
    double z = 0;
    for (int j = 0; j < c; ++j) z += std::exp(zi[j] - mx);
    const double logz = std::log(z) + mx;
    for (int j = 0; j < c; ++j)
      probs->v[static_cast<std::size_t>(i) * c + j] = std::exp(zi[j] - logz);
    y->v[i] = labels[i] >= 0 ? zi[labels[i]] - logz : 0.0;
  }
  auto lab = labels;
  y->backward = [logits, y, probs, lab, n, c] {
    for (int i = 0; i < n; ++i) {
      if (lab[i] < 0) continue;
      const double gi = y->g[i];
      if (gi == 0) continue;
      for (int j = 0; j < c; ++j)
        logits->g[static_cast<std::size_t>(i) * c + j] +=
            gi * ((j == lab[i] ? 1.0 : 0.0) -
                  probs->v[static_cast<std::size_t>(i) * c + j]);
    }
  };
  return y;
}

Node* Graph::mse(Node* pred, const std::vector<double>& targets) {
  const int n = pred->rows;
  if (pred->cols != 1 || static_cast<int>(targets.size()) != n)
    throw std::invalid_argument("mse shape mismatch");
  Node* loss = alloc(1, 1);
  double total = 0;
  for (int i = 0; i < n; ++i) {
    const double e = pred->v[i] - targets[i];
    total += e * e;
  }
  loss->v[0] = total;
  auto tg = targets;
  loss->backward = [pred, loss, tg, n] {
    for (int i = 0; i < n; ++i)
      pred->g[i] += loss->g[0] * 2.0 * (pred->v[i] - tg[i]);
  };
  return loss;
}

Node* Graph::kl_to_fixed(const std::vector<double>& p_logits, Node* q_logits,
                         const std::vector<double>& row_weights) {
  const int n = q_logits->rows, c = q_logits->cols;
  if (static_cast<int>(p_logits.size()) != n * c ||
      static_cast<int>(row_weights.size()) != n)
    throw std::invalid_argument("kl_to_fixed shape mismatch");
  Node* loss = alloc(1, 1);
  auto* scratch = alloc(n, 2 * c);  // p then q per row
  double total = 0;
  for (int i = 0; i < n; ++i) {
    if (row_weights[i] == 0) continue;
    double* pi = &scratch->v[static_cast<std::size_t>(i) * 2 * c];
    double* qi = pi + c;
    const double* zp = &p_logits[static_cast<std::size_t>(i) * c];
    const double* zq = &q_logits->v[static_cast<std::size_t>(i) * c];
    double mp = zp[0], mq = zq[0];
    for (int j = 1; j < c; ++j) {
      mp = std::max(mp, zp[j]);
      mq = std::max(mq, zq[j]);
    }
    double sp = 0, sq = 0;
    for (int j = 0; j < c; ++j) {
      sp += std::exp(zp[j] - mp);
      sq += std::exp(zq[j] - mq);
    }
    const double lzp = std::log(sp) + mp, lzq = std::log(sq) + mq;
    for (int j = 0; j < c; ++j) {
      pi[j] = std::exp(zp[j] - lzp);
      qi[j] = std::exp(zq[j] - lzq);
      total += row_weights[i] * pi[j] * ((zp[j] - lzp) - (zq[j] - lzq));
    }
  }
  loss->v[0] = total;
  auto w = row_weights;
  loss->backward = [q_logits, loss, scratch, w, n, c] {
    const double gl = loss->g[0];
    for (int i = 0; i < n; ++i) {
      if (w[i] == 0) continue;
      const double* pi = &scratch->v[static_cast<std::size_t>(i) * 2 * c];
      const double* qi = pi + c;
      for (int j = 0; j < c; ++j)
        q_logits->g[static_cast<std::size_t>(i) * c + j] +=
            gl * w[i] * (qi[j] - pi[j]);
    }
  };
  return loss;
}

Node* Graph::entropy(Node* logits) {
  const int n = logits->rows, c = logits->cols;
  Node* y = alloc(1, 1);
  auto* probs = alloc(n, c + 1);  // per-row probs + entropy
  double total = 0;
  for (int i = 0; i < n; ++i) {
    const double* zi = &logits->v[static_cast<std::size_t>(i) * c];
    double mx = zi[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, zi[j]);
    double z = 0;
    for (int j = 0; j < c; ++j) z += std::exp(zi[j] - mx);
    const double logz = std::log(z) + mx;
    double h = 0;
    for (int j = 0; j < c; ++j) {
      const double p = std::exp(zi[j] - logz);
      probs->v[static_cast<std::size_t>(i) * (c + 1) + j] = p;
      if (p > 0) h -= p * (zi[j] - logz);
    }
    probs->v[static_cast<std::size_t>(i) * (c + 1) + c] = h;
    total += h;
  }
  y->v[0] = total;
  y->backward = [logits, y, probs, n, c] {
    const double gl = y->g[0];
    for (int i = 0; i < n; ++i) {
      const double h = probs->v[static_cast<std::size_t>(i) * (c + 1) + c];
      for (int j = 0; j < c; ++j) {
        const double p = probs->v[static_cast<std::size_t>(i) * (c + 1) + j];
        const double logp = p > 0 ? std::log(p) : 0.0;
        logits->g[static_cast<std::size_t>(i) * c + j] += gl * (-p * (logp + h));
      }
    }
  };
  return y;
}

Node* Graph::ppo_surrogate(Node* logp, const std::vector<double>& old_logp,
                           const std::vector<double>& advantages, double clip) {
  const int n = logp->rows;
  if (static_cast<int>(old_logp.size()) != n ||
      static_cast<int>(advantages.size()) != n)
    throw std::invalid_argument("ppo_surrogate size mismatch");
  Node* loss = alloc(1, 1);
  auto* ratio = alloc(n, 1);
  double total = 0;
  for (int i = 0; i < n; ++i) {
    const double r = std::exp(logp->v[i] - old_logp[i]);
    ratio->v[i] = r;
    const double rc = std::clamp(r, 1.0 - clip, 1.0 + clip);
    total -= std::min(r * advantages[i], rc * advantages[i]);
  }
  loss->v[0] = total;
  auto adv = advantages;
  loss->backward = [logp, loss, ratio, adv, n, clip] {
    const double gl = loss->g[0];
    for (int i = 0; i < n; ++i) {
      const double r = ratio->v[i];
      const double rc = std::clamp(r, 1.0 - clip, 1.0 + clip);
      // min(rA, rc A): gradient flows only through the unclipped branch when
      // it attains the min; the clipped branch is flat in r.
      if (r * adv[i] <= rc * adv[i])
        logp->g[i] += gl * (-adv[i] * r);
    }
  };
  return loss;
}

void Graph::backward(Node* loss) {
  if (loss->size() != 1) throw std::invalid_argument("backward needs a scalar");
  loss->g[0] = 1.0;
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it)
    if (it->backward) it->backward();
  for (auto& [p, node] : bound_)
    for (std::size_t i = 0; i < p->g.size(); ++i) p->g[i] += node->g[i];
}

void Graph::clear() {
  tape_.clear();
  bound_.clear();
}

}  // namespace vpt::nn
