#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace dde {

using Vec = std::vector<double>;

// Recorded primitive operations. Values are small per-sample vectors; a node
// is "uniform" when its value does not depend on the sample row (parameters,
// constants, and anything computed only from those).
enum class Op : std::uint8_t {
  kParam,     // slice of the flat parameter vector
  kData,      // per-sample input slot
  kConst,     // fixed payload
  kAdd,       // elementwise a + b
  kMul,       // elementwise a * b
  kMatVec,    // y = W x, W row-major (rows x cols)
  kSoftplus,  // elementwise, overflow-safe
  kSigmoid,   // elementwise logistic
  kSquare,    // elementwise x^2
  kSum,       // reduce vector to length-1
  kScale,     // c * x
  kConcat,    // concatenate parents
};

struct Node {
  Op op;
  int a = -1;
  int b = -1;
  int len = 0;
  int rows = 0;
  int cols = 0;
  int offset = 0;  // param offset or data slot id
  double c = 0.0;
  bool uniform = false;
  std::vector<int> parts;
  Vec cval;
};

// A topologically ordered expression graph. Construction order guarantees
// parents precede children; re-evaluation with identical inputs is
// bit-identical.
class Tape {
 public:
  int param(int offset, int len);
  int data(int slot, int len);
  int constant(Vec v);
  int zeros(int len);
  int add(int a, int b);
  int sub(int a, int b);  // composes scale(-1) + add
  int mul(int a, int b);
  int matvec(int w, int x, int rows, int cols);
  int softplus(int x);
  int sigmoid(int x);
  int square(int x);
  int sum(int x);
  int scale(int x, double c);
  int concat(const std::vector<int>& parts);

  // Appends nodes computing d(out)/d(slot) via tangent propagation: one
  // forward-mode chain per input component, built from the same primitives.
  // Returns the id of a node holding the input gradient as a vector. Reverse
  // mode over the extended tape then differentiates any function of this
  // gradient with respect to the parameters.
  int append_input_gradient(int out, int x_slot);

  const Node& node(int i) const { return nodes_[i]; }
  int size() const { return static_cast<int>(nodes_.size()); }
  int num_slots() const { return num_slots_; }
  int param_size() const { return param_size_; }

 private:
  int push(Node n);
  int binary(Op op, int a, int b);

  std::vector<Node> nodes_;
  int num_slots_ = 0;
  int param_size_ = 0;
};

// Per-slot batch of row-major samples (rows x len for that slot).
struct BatchView {
  const double* data = nullptr;
  int rows = 0;
  int len = 0;
};

struct GradReport {
  double value = 0.0;
  Vec param_grads;
};

// Executes a tape over up to `max_rows` samples at a time, reusing its value
// and adjoint arenas across calls. Not thread-safe; use one runner per thread.
class TapeRunner {
 public:
  TapeRunner(const Tape& tape, int max_rows);

  void forward(std::span<const double> params, std::span<const BatchView> slots,
               int rows, int row_offset = 0);

  // Value buffer of a node: rows x len if per-sample, len if uniform.
  const double* values(int node) const { return vals_.data() + off_[node]; }
  double value_at(int node, int row, int i = 0) const;
  bool is_uniform(int node) const;

  // Accumulates d(sum_r seed_r . out_r)/d(params) into grad. `seeds` is
  // rows x len(out) row-major. Must follow a forward() with the same rows.
  void backward(int out, std::span<const double> seeds, std::span<double> grad);

  // First node with a non-finite value after forward(), or -1.
  int find_nonfinite(int rows) const;

  int max_rows() const { return cap_; }
  const Tape& tape() const { return *tape_; }

 private:
  const Tape* tape_;
  int cap_;
  int last_rows_ = 0;
  std::vector<std::size_t> off_;
  std::vector<std::size_t> aux_off_;
  std::vector<char> reach_;  // scratch: ancestors of the backward output
  Vec vals_;
  Vec aux_;
  Vec adj_;
  Vec scratch_;  // transposed weights for the matvec kernels
};

// Convenience single-call drivers -------------------------------------------

// Forward values of `out` over a batch; result is rows x len(out) row-major.
Vec evaluate(const Tape& tape, int out, std::span<const double> params,
             std::span<const BatchView> slots);

// Gradient of a scalar-output graph with respect to the data in `x_slot`,
// evaluated at a single point. Appends tangent nodes to the tape.
Vec input_gradient(Tape& tape, int out, int x_slot, std::span<const double> params,
                   std::span<const double> x);

// Mean of a scalar loss over the batch plus its exact parameter gradient.
// Work is split into fixed-size row shards; shard results merge in shard
// order, so the result is identical for any thread count.
GradReport param_gradient_of_loss(const Tape& tape, int loss,
                                  std::span<const double> params,
                                  std::span<const BatchView> slots, int threads);

// Vector-Jacobian product against per-row seeds (rows x len(out)): returns
// sum_r seeds_r . d(out_r)/d(params). Same sharding scheme as above.
Vec vjp(const Tape& tape, int out, std::span<const double> params,
        std::span<const BatchView> slots, std::span<const double> seeds,
        int threads);

int shard_rows_for(int total_rows);

}  // namespace dde
