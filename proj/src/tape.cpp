#include "dde/tape.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <thread>
#include <unordered_map>

#include "dde/errors.hpp"

namespace dde {

// ---------------------------------------------------------------------------
// Tape construction

int Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::param(int offset, int len) {
  if (offset < 0 || len <= 0) throw ConfigError("param node: bad offset/len");
  Node n;
  n.op = Op::kParam;
  n.offset = offset;
  n.len = len;
  n.uniform = true;
  param_size_ = std::max(param_size_, offset + len);
  return push(std::move(n));
}

int Tape::data(int slot, int len) {
  if (slot < 0 || len <= 0) throw ConfigError("data node: bad slot/len");
  Node n;
  n.op = Op::kData;
  n.offset = slot;
  n.len = len;
  n.uniform = false;
  num_slots_ = std::max(num_slots_, slot + 1);
  return push(std::move(n));
}

int Tape::constant(Vec v) {
  if (v.empty()) throw ConfigError("const node: empty payload");
  Node n;
  n.op = Op::kConst;
  n.len = static_cast<int>(v.size());
  n.uniform = true;
  n.cval = std::move(v);
  return push(std::move(n));
}

int Tape::zeros(int len) { return constant(Vec(static_cast<std::size_t>(len), 0.0)); }

int Tape::binary(Op op, int a, int b) {
  const Node& na = nodes_.at(a);
  const Node& nb = nodes_.at(b);
  if (na.len != nb.len) throw ConfigError("elementwise op: length mismatch");
  Node n;
  n.op = op;
  n.a = a;
  n.b = b;
  n.len = na.len;
  n.uniform = na.uniform && nb.uniform;
  return push(std::move(n));
}

int Tape::add(int a, int b) { return binary(Op::kAdd, a, b); }
int Tape::mul(int a, int b) { return binary(Op::kMul, a, b); }
int Tape::sub(int a, int b) { return add(a, scale(b, -1.0)); }

int Tape::matvec(int w, int x, int rows, int cols) {
  const Node& nw = nodes_.at(w);
  const Node& nx = nodes_.at(x);
  if (nw.len != rows * cols) throw ConfigError("matvec: weight length mismatch");
  if (nx.len != cols) throw ConfigError("matvec: input length mismatch");
  Node n;
  n.op = Op::kMatVec;
  n.a = w;
  n.b = x;
  n.rows = rows;
  n.cols = cols;
  n.len = rows;
  n.uniform = nw.uniform && nx.uniform;
  return push(std::move(n));
}

static Node unary(const std::vector<Node>& nodes, Op op, int x) {
  Node n;
  n.op = op;
  n.a = x;
  n.len = nodes.at(x).len;
  n.uniform = nodes.at(x).uniform;
  return n;
}

int Tape::softplus(int x) { return push(unary(nodes_, Op::kSoftplus, x)); }
int Tape::sigmoid(int x) { return push(unary(nodes_, Op::kSigmoid, x)); }
int Tape::square(int x) { return push(unary(nodes_, Op::kSquare, x)); }

int Tape::sum(int x) {
  Node n = unary(nodes_, Op::kSum, x);
  n.len = 1;
  return push(std::move(n));
}

int Tape::scale(int x, double c) {
  Node n = unary(nodes_, Op::kScale, x);
  n.c = c;
  return push(std::move(n));
}

int Tape::concat(const std::vector<int>& parts) {
  if (parts.empty()) throw ConfigError("concat: no parts");
  Node n;
  n.op = Op::kConcat;
  n.parts = parts;
  n.uniform = true;
  for (int p : parts) {
    n.len += nodes_.at(p).len;
    n.uniform = n.uniform && nodes_.at(p).uniform;
  }
  return push(std::move(n));
}

// ---------------------------------------------------------------------------
// Forward-mode augmentation
//
// Walks the existing nodes once per input component and emits the tangent
// chain for each, using the closed-form softplus derivative. A missing entry
// in the tangent map means the tangent is identically zero.

int Tape::append_input_gradient(int out, int x_slot) {
  if (nodes_.at(out).len != 1)
    throw ConfigError("input_gradient: output is not scalar");
  int x_dim = -1;
  for (const Node& n : nodes_)
    if (n.op == Op::kData && n.offset == x_slot) x_dim = n.len;
  if (x_dim < 0) throw ConfigError("input_gradient: slot not present in graph");

  const int n_orig = size();
  std::unordered_map<int, int> sig_of;    // softplus/sigmoid parent -> sigmoid node
  std::unordered_map<int, int> sigder_of; // sigmoid node -> sigma*(1-sigma) node
  std::vector<int> grad_components;
  grad_components.reserve(static_cast<std::size_t>(x_dim));

  for (int k = 0; k < x_dim; ++k) {
    std::vector<int> tan(static_cast<std::size_t>(n_orig), -1);
    for (int i = 0; i < n_orig; ++i) {
      const Node& n = nodes_[i];
      switch (n.op) {
        case Op::kParam:
        case Op::kConst:
          break;
        case Op::kData:
          if (n.offset == x_slot) {
            Vec e(static_cast<std::size_t>(n.len), 0.0);
            e[static_cast<std::size_t>(k)] = 1.0;
            tan[i] = constant(std::move(e));
          }
          break;
        case Op::kAdd: {
          int ta = tan[n.a], tb = tan[n.b];
          if (ta >= 0 && tb >= 0) tan[i] = add(ta, tb);
          else if (ta >= 0) tan[i] = ta;
          else if (tb >= 0) tan[i] = tb;
          break;
        }
        case Op::kMul: {
          int ta = tan[n.a], tb = tan[n.b];
          int t1 = ta >= 0 ? mul(ta, n.b) : -1;
          int t2 = tb >= 0 ? mul(n.a, tb) : -1;
          if (t1 >= 0 && t2 >= 0) tan[i] = add(t1, t2);
          else tan[i] = t1 >= 0 ? t1 : t2;
          break;
        }
        case Op::kMatVec: {
          int tw = tan[n.a], tx = tan[n.b];
          int t1 = tw >= 0 ? matvec(tw, n.b, n.rows, n.cols) : -1;
          int t2 = tx >= 0 ? matvec(n.a, tx, n.rows, n.cols) : -1;
          if (t1 >= 0 && t2 >= 0) tan[i] = add(t1, t2);
          else tan[i] = t1 >= 0 ? t1 : t2;
          break;
        }
        case Op::kSoftplus: {
          if (tan[n.a] < 0) break;
          auto it = sig_of.find(n.a);
          int sg = it != sig_of.end() ? it->second : (sig_of[n.a] = sigmoid(n.a));
          tan[i] = mul(sg, tan[n.a]);
          break;
        }
        case Op::kSigmoid: {
          if (tan[n.a] < 0) break;
          auto it = sigder_of.find(i);
          int d;
          if (it != sigder_of.end()) {
            d = it->second;
          } else {
            Vec ones(static_cast<std::size_t>(n.len), 1.0);
            d = mul(i, add(constant(std::move(ones)), scale(i, -1.0)));
            sigder_of[i] = d;
          }
          tan[i] = mul(d, tan[n.a]);
          break;
        }
        case Op::kSquare:
          if (tan[n.a] >= 0) tan[i] = mul(scale(n.a, 2.0), tan[n.a]);
          break;
        case Op::kSum:
          if (tan[n.a] >= 0) tan[i] = sum(tan[n.a]);
          break;
        case Op::kScale:
          if (tan[n.a] >= 0) tan[i] = scale(tan[n.a], n.c);
          break;
        case Op::kConcat: {
          bool any = false;
          for (int p : n.parts) any = any || tan[p] >= 0;
          if (!any) break;
          std::vector<int> tparts;
          tparts.reserve(n.parts.size());
          for (int p : n.parts)
            tparts.push_back(tan[p] >= 0 ? tan[p] : zeros(nodes_[p].len));
          tan[i] = concat(tparts);
          break;
        }
      }
    }
    grad_components.push_back(tan[out] >= 0 ? tan[out] : zeros(1));
  }
  if (x_dim == 1) return grad_components[0];
  return concat(grad_components);
}

// ---------------------------------------------------------------------------
// TapeRunner

TapeRunner::TapeRunner(const Tape& tape, int max_rows) : tape_(&tape), cap_(max_rows) {
  const int n = tape.size();
  off_.resize(static_cast<std::size_t>(n));
  aux_off_.assign(static_cast<std::size_t>(n), static_cast<std::size_t>(-1));
  reach_.assign(static_cast<std::size_t>(n), 0);
  std::size_t total = 0, aux_total = 0;
  int max_w = 0;
  for (int i = 0; i < n; ++i) {
    const Node& nd = tape.node(i);
    off_[static_cast<std::size_t>(i)] = total;
    total += static_cast<std::size_t>(nd.len) * (nd.uniform ? 1u : static_cast<std::size_t>(cap_));
    if (nd.op == Op::kSoftplus) {
      aux_off_[static_cast<std::size_t>(i)] = aux_total;
      aux_total += static_cast<std::size_t>(nd.len) * (nd.uniform ? 1u : static_cast<std::size_t>(cap_));
    }
    if (nd.op == Op::kMatVec) max_w = std::max(max_w, nd.rows * nd.cols);
  }
  vals_.assign(total, 0.0);
  adj_.assign(total, 0.0);
  aux_.assign(aux_total, 0.0);
  scratch_.assign(static_cast<std::size_t>(max_w), 0.0);
}

bool TapeRunner::is_uniform(int node) const { return tape_->node(node).uniform; }

double TapeRunner::value_at(int node, int row, int i) const {
  const Node& nd = tape_->node(node);
  const double* p = vals_.data() + off_[static_cast<std::size_t>(node)];
  return nd.uniform ? p[i] : p[static_cast<std::size_t>(row) * nd.len + i];
}

namespace {

inline void stable_logistic(const double* u, double* sp, double* sg, int count) {
  // softplus(x) = max(x,0) + log1p(exp(-|x|)); sigma shares the same exp.
  for (int i = 0; i < count; ++i) {
    double x = u[i];
    double e = std::exp(-std::fabs(x));
    double l = std::log1p(e);
    if (sp) sp[i] = (x > 0.0 ? x : 0.0) + l;
    if (sg) sg[i] = x >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
  }
}

}  // namespace

void TapeRunner::forward(std::span<const double> params, std::span<const BatchView> slots,
                         int rows, int row_offset) {
  if (rows > cap_) throw ConfigError("forward: rows exceed runner capacity");
  if (static_cast<int>(params.size()) < tape_->param_size())
    throw ConfigError("forward: parameter vector too short");
  const int n = tape_->size();
  for (int i = 0; i < n; ++i) {
    const Node& nd = tape_->node(i);
    double* out = vals_.data() + off_[static_cast<std::size_t>(i)];
    const int L = nd.len;
    const int R = nd.uniform ? 1 : rows;
    switch (nd.op) {
      case Op::kParam:
        std::memcpy(out, params.data() + nd.offset, sizeof(double) * static_cast<std::size_t>(L));
        break;
      case Op::kConst:
        std::memcpy(out, nd.cval.data(), sizeof(double) * static_cast<std::size_t>(L));
        break;
      case Op::kData: {
        const BatchView& bv = slots[static_cast<std::size_t>(nd.offset)];
        if (bv.len != L) throw ConfigError("forward: slot width mismatch");
        if (row_offset + rows > bv.rows) throw ConfigError("forward: slot has too few rows");
        std::memcpy(out, bv.data + static_cast<std::size_t>(row_offset) * L,
                    sizeof(double) * static_cast<std::size_t>(rows) * L);
        break;
      }
      case Op::kAdd:
      case Op::kMul: {
        const Node& na = tape_->node(nd.a);
        const Node& nb = tape_->node(nd.b);
        const double* pa = vals_.data() + off_[static_cast<std::size_t>(nd.a)];
        const double* pb = vals_.data() + off_[static_cast<std::size_t>(nd.b)];
        const int sa = na.uniform ? 0 : L;
        const int sb = nb.uniform ? 0 : L;
        if (nd.op == Op::kAdd) {
          for (int r = 0; r < R; ++r) {
            const double* a = pa + static_cast<std::size_t>(r) * sa;
            const double* b = pb + static_cast<std::size_t>(r) * sb;
            double* y = out + static_cast<std::size_t>(r) * L;
            for (int j = 0; j < L; ++j) y[j] = a[j] + b[j];
          }
        } else {
          for (int r = 0; r < R; ++r) {
            const double* a = pa + static_cast<std::size_t>(r) * sa;
            const double* b = pb + static_cast<std::size_t>(r) * sb;
            double* y = out + static_cast<std::size_t>(r) * L;
            for (int j = 0; j < L; ++j) y[j] = a[j] * b[j];
          }
        }
        break;
      }
      case Op::kMatVec: {
        const Node& nw = tape_->node(nd.a);
        const Node& nx = tape_->node(nd.b);
        const double* W = vals_.data() + off_[static_cast<std::size_t>(nd.a)];
        const double* X = vals_.data() + off_[static_cast<std::size_t>(nd.b)];
        const int rows_w = nd.rows, cols_w = nd.cols;
        if (nw.uniform && !nx.uniform) {
          // W^T staged once, then streamed as axpy updates per input column.
          double* WT = scratch_.data();
          for (int r = 0; r < rows_w; ++r)
            for (int c = 0; c < cols_w; ++c)
              WT[static_cast<std::size_t>(c) * rows_w + r] = W[static_cast<std::size_t>(r) * cols_w + c];
          for (int r = 0; r < R; ++r) {
            const double* x = X + static_cast<std::size_t>(r) * cols_w;
            double* y = out + static_cast<std::size_t>(r) * rows_w;
            std::memset(y, 0, sizeof(double) * static_cast<std::size_t>(rows_w));
            for (int c = 0; c < cols_w; ++c) {
              const double xc = x[c];
              const double* wt = WT + static_cast<std::size_t>(c) * rows_w;
              for (int j = 0; j < rows_w; ++j) y[j] += xc * wt[j];
            }
          }
        } else {
          const int sw = nw.uniform ? 0 : rows_w * cols_w;
          const int sx = nx.uniform ? 0 : cols_w;
          for (int r = 0; r < R; ++r) {
            const double* w = W + static_cast<std::size_t>(r) * sw;
            const double* x = X + static_cast<std::size_t>(r) * sx;
            double* y = out + static_cast<std::size_t>(r) * rows_w;
            for (int j = 0; j < rows_w; ++j) {
              double acc = 0.0;
              const double* wr = w + static_cast<std::size_t>(j) * cols_w;
              for (int c = 0; c < cols_w; ++c) acc += wr[c] * x[c];
              y[j] = acc;
            }
          }
        }
        break;
      }
      case Op::kSoftplus: {
        const double* u = vals_.data() + off_[static_cast<std::size_t>(nd.a)];
        double* sg = aux_.data() + aux_off_[static_cast<std::size_t>(i)];
        stable_logistic(u, out, sg, R * L);
        break;
      }
      case Op::kSigmoid: {
        const double* u = vals_.data() + off_[static_cast<std::size_t>(nd.a)];
        stable_logistic(u, nullptr, out, R * L);
        break;
      }
      case Op::kSquare: {
        const double* u = vals_.data() + off_[static_cast<std::size_t>(nd.a)];
        for (int j = 0; j < R * L; ++j) out[j] = u[j] * u[j];
        break;
      }
      case Op::kSum: {
        const Node& na = tape_->node(nd.a);
        const double* u = vals_.data() + off_[static_cast<std::size_t>(nd.a)];
        for (int r = 0; r < R; ++r) {
          double acc = 0.0;
          const double* row = u + static_cast<std::size_t>(r) * na.len;
          for (int j = 0; j < na.len; ++j) acc += row[j];
          out[r] = acc;
        }
        break;
      }
      case Op::kScale: {
        const double* u = vals_.data() + off_[static_cast<std::size_t>(nd.a)];
        for (int j = 0; j < R * L; ++j) out[j] = nd.c * u[j];
        break;
      }
      case Op::kConcat: {
        for (int r = 0; r < R; ++r) {
          double* y = out + static_cast<std::size_t>(r) * L;
          for (int p : nd.parts) {
            const Node& np = tape_->node(p);
            const double* v = vals_.data() + off_[static_cast<std::size_t>(p)] +
                              (np.uniform ? 0 : static_cast<std::size_t>(r) * np.len);
            std::memcpy(y, v, sizeof(double) * static_cast<std::size_t>(np.len));
            y += np.len;
          }
        }
        break;
      }
    }
  }
  last_rows_ = rows;
}

int TapeRunner::find_nonfinite(int rows) const {
  for (int i = 0; i < tape_->size(); ++i) {
    const Node& nd = tape_->node(i);
    const double* v = vals_.data() + off_[static_cast<std::size_t>(i)];
    const int count = nd.len * (nd.uniform ? 1 : rows);
    for (int j = 0; j < count; ++j)
      if (!std::isfinite(v[j])) return i;
  }
  return -1;
}

void TapeRunner::backward(int out, std::span<const double> seeds, std::span<double> grad) {
  const int rows = last_rows_;
  const int n = tape_->size();
  const Node& nout = tape_->node(out);
  if (static_cast<int>(seeds.size()) != rows * nout.len)
    throw ConfigError("backward: seed size mismatch");

  // Restrict the sweep to ancestors of `out`.
  std::fill(reach_.begin(), reach_.end(), 0);
  reach_[static_cast<std::size_t>(out)] = 1;
  for (int i = out; i >= 0; --i) {
    if (!reach_[static_cast<std::size_t>(i)]) continue;
    const Node& nd = tape_->node(i);
    if (nd.a >= 0) reach_[static_cast<std::size_t>(nd.a)] = 1;
    if (nd.b >= 0) reach_[static_cast<std::size_t>(nd.b)] = 1;
    for (int p : nd.parts) reach_[static_cast<std::size_t>(p)] = 1;
  }
  for (int i = 0; i <= out; ++i) {
    if (!reach_[static_cast<std::size_t>(i)]) continue;
    const Node& nd = tape_->node(i);
    std::size_t count = static_cast<std::size_t>(nd.len) * (nd.uniform ? 1u : static_cast<std::size_t>(rows));
    std::memset(adj_.data() + off_[static_cast<std::size_t>(i)], 0, sizeof(double) * count);
  }

  {
    double* g = adj_.data() + off_[static_cast<std::size_t>(out)];
    if (nout.uniform) {
      // Sum seeds over rows: a uniform output sees the batch only once.
      for (int r = 0; r < rows; ++r)
        for (int j = 0; j < nout.len; ++j) g[j] += seeds[static_cast<std::size_t>(r) * nout.len + j];
    } else {
      std::memcpy(g, seeds.data(), sizeof(double) * seeds.size());
    }
  }

  for (int i = out; i >= 0; --i) {
    if (!reach_[static_cast<std::size_t>(i)]) continue;
    const Node& nd = tape_->node(i);
    const int L = nd.len;
    const int R = nd.uniform ? 1 : rows;
    const double* g = adj_.data() + off_[static_cast<std::size_t>(i)];
    // Accumulate into parent `p`; if the parent is uniform and this node is
    // per-sample, contributions sum over the batch.
    auto parent_adj = [&](int p) { return adj_.data() + off_[static_cast<std::size_t>(p)]; };
    auto parent_val = [&](int p) { return vals_.data() + off_[static_cast<std::size_t>(p)]; };
    auto parent_stride = [&](int p, int width) {
      return tape_->node(p).uniform ? 0 : width;
    };
    switch (nd.op) {
      case Op::kParam: {
        for (int j = 0; j < L; ++j) grad[static_cast<std::size_t>(nd.offset + j)] += g[j];
        break;
      }
      case Op::kConst:
      case Op::kData:
        break;
      case Op::kAdd: {
        for (int which = 0; which < 2; ++which) {
          int p = which == 0 ? nd.a : nd.b;
          double* pa = parent_adj(p);
          const int sp = parent_stride(p, L);
          for (int r = 0; r < R; ++r) {
            const double* gr = g + static_cast<std::size_t>(r) * L;
            double* pr = pa + static_cast<std::size_t>(r) * sp;
            for (int j = 0; j < L; ++j) pr[j] += gr[j];
          }
        }
        break;
      }
      case Op::kMul: {
        for (int which = 0; which < 2; ++which) {
          int p = which == 0 ? nd.a : nd.b;
          int o = which == 0 ? nd.b : nd.a;
          double* pa = parent_adj(p);
          const double* ov = parent_val(o);
          const int sp = parent_stride(p, L);
          const int so = parent_stride(o, L);
          for (int r = 0; r < R; ++r) {
            const double* gr = g + static_cast<std::size_t>(r) * L;
            const double* orow = ov + static_cast<std::size_t>(r) * so;
            double* pr = pa + static_cast<std::size_t>(r) * sp;
            for (int j = 0; j < L; ++j) pr[j] += gr[j] * orow[j];
          }
        }
        break;
      }
      case Op::kMatVec: {
        const int rows_w = nd.rows, cols_w = nd.cols;
        const double* W = parent_val(nd.a);
        const double* X = parent_val(nd.b);
        double* gW = parent_adj(nd.a);
        double* gX = parent_adj(nd.b);
        const int sw = parent_stride(nd.a, rows_w * cols_w);
        const int sx = parent_stride(nd.b, cols_w);
        for (int r = 0; r < R; ++r) {
          const double* gr = g + static_cast<std::size_t>(r) * rows_w;
          const double* w = W + static_cast<std::size_t>(r) * sw;
          const double* x = X + static_cast<std::size_t>(r) * sx;
          double* gw = gW + static_cast<std::size_t>(r) * sw;
          double* gx = gX + static_cast<std::size_t>(r) * sx;
          for (int j = 0; j < rows_w; ++j) {
            const double gj = gr[j];
            if (gj == 0.0) continue;
            const double* wr = w + static_cast<std::size_t>(j) * cols_w;
            double* gwr = gw + static_cast<std::size_t>(j) * cols_w;
            for (int c = 0; c < cols_w; ++c) {
              gwr[c] += gj * x[c];
              gx[c] += gj * wr[c];
            }
          }
        }
        break;
      }
      case Op::kSoftplus: {
        const double* sg = aux_.data() + aux_off_[static_cast<std::size_t>(i)];
        double* pa = parent_adj(nd.a);
        for (int j = 0; j < R * L; ++j) pa[j] += sg[j] * g[j];
        break;
      }
      case Op::kSigmoid: {
        const double* s = vals_.data() + off_[static_cast<std::size_t>(i)];
        double* pa = parent_adj(nd.a);
        for (int j = 0; j < R * L; ++j) pa[j] += s[j] * (1.0 - s[j]) * g[j];
        break;
      }
      case Op::kSquare: {
        const double* u = parent_val(nd.a);
        double* pa = parent_adj(nd.a);
        for (int j = 0; j < R * L; ++j) pa[j] += 2.0 * u[j] * g[j];
        break;
      }
      case Op::kSum: {
        const Node& na = tape_->node(nd.a);
        double* pa = parent_adj(nd.a);
        for (int r = 0; r < R; ++r) {
          const double gr = g[r];
          double* pr = pa + static_cast<std::size_t>(r) * na.len;
          for (int j = 0; j < na.len; ++j) pr[j] += gr;
        }
        break;
      }
      case Op::kScale: {
        double* pa = parent_adj(nd.a);
        for (int j = 0; j < R * L; ++j) pa[j] += nd.c * g[j];
        break;
      }
      case Op::kConcat: {
        for (int r = 0; r < R; ++r) {
          const double* gr = g + static_cast<std::size_t>(r) * L;
          for (int p : nd.parts) {
            const Node& np = tape_->node(p);
            double* pa = parent_adj(p) + (np.uniform ? 0 : static_cast<std::size_t>(r) * np.len);
            for (int j = 0; j < np.len; ++j) pa[j] += gr[j];
            gr += np.len;
          }
        }
        break;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Drivers

int shard_rows_for(int total_rows) {
  int s = (total_rows + 15) / 16;
  return std::clamp(s, 64, 1024);
}

static int batch_rows(const Tape& tape, std::span<const BatchView> slots) {
  if (static_cast<int>(slots.size()) < tape.num_slots())
    throw ConfigError("batch: missing data slots");
  int rows = -1;
  for (int s = 0; s < tape.num_slots(); ++s) {
    if (rows < 0) rows = slots[static_cast<std::size_t>(s)].rows;
    if (slots[static_cast<std::size_t>(s)].rows != rows)
      throw ConfigError("batch: slots disagree on row count");
  }
  if (rows <= 0) throw ConfigError("batch: empty");
  return rows;
}

Vec evaluate(const Tape& tape, int out, std::span<const double> params,
             std::span<const BatchView> slots) {
  const int rows = batch_rows(tape, slots);
  const int shard = shard_rows_for(rows);
  const Node& nout = tape.node(out);
  Vec result(static_cast<std::size_t>(rows) * nout.len);
  TapeRunner runner(tape, std::min(shard, rows));
  for (int r0 = 0; r0 < rows; r0 += shard) {
    const int r = std::min(shard, rows - r0);
    runner.forward(params, slots, r, r0);
    const double* v = runner.values(out);
    if (nout.uniform) {
      for (int i = 0; i < r; ++i)
        std::memcpy(result.data() + static_cast<std::size_t>(r0 + i) * nout.len, v,
                    sizeof(double) * static_cast<std::size_t>(nout.len));
    } else {
      std::memcpy(result.data() + static_cast<std::size_t>(r0) * nout.len, v,
                  sizeof(double) * static_cast<std::size_t>(r) * nout.len);
    }
  }
  return result;
}

Vec input_gradient(Tape& tape, int out, int x_slot, std::span<const double> params,
                   std::span<const double> x) {
  const int g = tape.append_input_gradient(out, x_slot);
  std::vector<BatchView> slots(static_cast<std::size_t>(tape.num_slots()));
  for (auto& s : slots) s = BatchView{x.data(), 1, static_cast<int>(x.size())};
  if (tape.num_slots() != 1)
    throw ConfigError("input_gradient: convenience driver expects a single slot");
  return evaluate(tape, g, params, slots);
}

namespace {

struct ShardResult {
  double loss_sum = 0.0;
  Vec grad;
};

template <typename SeedFn>
void run_shards(const Tape& tape, int out, std::span<const double> params,
                std::span<const BatchView> slots, int rows, int threads,
                SeedFn make_seeds, std::vector<ShardResult>& results) {
  const int shard = shard_rows_for(rows);
  const int nshards = (rows + shard - 1) / shard;
  results.assign(static_cast<std::size_t>(nshards), ShardResult{});
  const int nthreads = std::max(1, std::min(threads, nshards));
  std::atomic<int> next{0};
  const int out_len = tape.node(out).len;

  auto work = [&]() {
    TapeRunner runner(tape, std::min(shard, rows));
    Vec seeds;
    for (;;) {
      const int s = next.fetch_add(1);
      if (s >= nshards) break;
      const int r0 = s * shard;
      const int r = std::min(shard, rows - r0);
      runner.forward(params, slots, r, r0);
      ShardResult& res = results[static_cast<std::size_t>(s)];
      res.grad.assign(static_cast<std::size_t>(tape.param_size()), 0.0);
      seeds.assign(static_cast<std::size_t>(r) * out_len, 0.0);
      make_seeds(runner, r0, r, seeds, res.loss_sum);
      runner.backward(out, seeds, res.grad);
    }
  };

  if (nthreads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(nthreads));
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
}

}  // namespace

GradReport param_gradient_of_loss(const Tape& tape, int loss,
                                  std::span<const double> params,
                                  std::span<const BatchView> slots, int threads) {
  if (tape.node(loss).len != 1)
    throw ConfigError("param_gradient_of_loss: loss is not scalar");
  const int rows = batch_rows(tape, slots);
  const double inv = 1.0 / rows;
  std::vector<ShardResult> results;
  run_shards(tape, loss, params, slots, rows, threads,
             [&](TapeRunner& runner, int /*r0*/, int r, Vec& seeds, double& loss_sum) {
               const double* v = runner.values(loss);
               for (int i = 0; i < r; ++i) {
                 loss_sum += v[i];
                 seeds[static_cast<std::size_t>(i)] = inv;
               }
             },
             results);

  GradReport report;
  report.param_grads.assign(static_cast<std::size_t>(tape.param_size()), 0.0);
  double loss_sum = 0.0;
  for (const ShardResult& res : results) {
    loss_sum += res.loss_sum;
    for (std::size_t i = 0; i < report.param_grads.size(); ++i)
      report.param_grads[i] += res.grad[i];
  }
  report.value = loss_sum * inv;
  bool bad_grad = false;
  for (double gvalue : report.param_grads) bad_grad = bad_grad || !std::isfinite(gvalue);
  if (!std::isfinite(report.value) || bad_grad) {
    // Re-run shard by shard with per-node checking to name the culprit.
    const int shard = shard_rows_for(rows);
    TapeRunner probe(tape, std::min(shard, rows));
    int bad = -1;
    for (int r0 = 0; r0 < rows && bad < 0; r0 += shard) {
      const int r = std::min(shard, rows - r0);
      probe.forward(params, slots, r, r0);
      bad = probe.find_nonfinite(r);
    }
    throw NumericError(bad_grad ? "parameter gradient is not finite" : "loss is not finite", bad);
  }
  return report;
}

Vec vjp(const Tape& tape, int out, std::span<const double> params,
        std::span<const BatchView> slots, std::span<const double> seeds,
        int threads) {
  const int rows = batch_rows(tape, slots);
  const int out_len = tape.node(out).len;
  if (static_cast<int>(seeds.size()) != rows * out_len)
    throw ConfigError("vjp: seed size mismatch");
  std::vector<ShardResult> results;
  run_shards(tape, out, params, slots, rows, threads,
             [&](TapeRunner& /*runner*/, int r0, int r, Vec& shard_seeds, double&) {
               std::memcpy(shard_seeds.data(), seeds.data() + static_cast<std::size_t>(r0) * out_len,
                           sizeof(double) * static_cast<std::size_t>(r) * out_len);
             },
             results);
  Vec grad(static_cast<std::size_t>(tape.param_size()), 0.0);
  for (const ShardResult& res : results)
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += res.grad[i];
  return grad;
}

}  // namespace dde
