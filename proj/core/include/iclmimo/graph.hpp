// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <deque>
#include <vector>

namespace iclmimo {

using TensorId = std::uint32_t;

// One node on the tape: a dense row-major real matrix plus its gradient.
struct TapeTensor {
  std::size_t rows = 0, cols = 0;
  std::vector<double> value;
  std::vector<double> grad;  // allocated when needs_grad
  bool needs_grad = false;
  std::size_t size() const { return rows * cols; }
};

// Define-by-run reverse-mode tape over 2D double tensors. Ops execute
// eagerly; backward() walks the recorded ops in reverse, accumulating into
// .grad. Gradients accumulate across reuse of a tensor, so parameters shared
// by several subgraphs (batch elements, weight tying) come out summed.
//
// A Graph instance is single-threaded; independent graphs are independent.
class Graph {
 public:
  // Leaf without gradient tracking.
  TensorId constant(std::size_t rows, std::size_t cols, const double* data);
  TensorId constant(std::size_t rows, std::size_t cols, const std::vector<double>& data);
  // Leaf with gradient tracking (model parameter or probed input).
  TensorId param(std::size_t rows, std::size_t cols, const double* data);
  TensorId param(std::size_t rows, std::size_t cols, const std::vector<double>& data);

  TensorId matmul(TensorId a, TensorId b);
  TensorId add(TensorId a, TensorId b);
  TensorId sub(TensorId a, TensorId b);
  TensorId mul(TensorId a, TensorId b);  // elementwise
  TensorId scale(TensorId a, double s);
  // bias is 1 x cols; added to every row.
  TensorId add_bias_row(TensorId a, TensorId bias);
  // tile is T x cols with a.rows a multiple of T; added blockwise. Used for
  // positional tables over a batch of equal-length sequences.
  TensorId add_tiled_rows(TensorId a, TensorId tile);
  TensorId concat_cols(TensorId a, TensorId b);
  TensorId concat_rows(TensorId a, TensorId b);
  // out row k = a row indices[k]; indices may repeat. Backward scatter-adds.
  TensorId gather_rows(TensorId a, std::vector<std::size_t> indices);
  // Same data, new shape (row-major reinterpretation).
  TensorId reshape(TensorId a, std::size_t rows, std::size_t cols);
  TensorId gelu(TensorId a);
  TensorId relu(TensorId a);
  TensorId sigmoid(TensorId a);
  // Per-row normalization with learned gain and bias (each 1 x cols).
  TensorId layer_norm(TensorId a, TensorId gain, TensorId bias);
  // Multi-head causal self-attention core. q, k, v are (B*T) x d with rows
  // grouped per sequence; position i attends to positions <= i only, so
  // outputs at a position never depend on later tokens.
  TensorId causal_attention(TensorId q, TensorId k, TensorId v, std::size_t seq_len,
                            std::size_t heads);
  // Scales the whole tensor so its squared Frobenius norm equals target
  // exactly (power-constraint projection).
  TensorId scale_to_power(TensorId a, double target_sq_norm);
  // (r x c) -> copies x (r*c); every output row is the row-major flattening.
  TensorId flatten_repeat(TensorId a, std::size_t copies);
  // 1x1 sum of squared entries.
  TensorId sum_sq(TensorId a);

  const TapeTensor& t(TensorId id) const { return nodes_[id]; }
  double scalar(TensorId id) const;

  // Reverse pass from a 1x1 loss node (seed gradient 1).
  void backward(TensorId loss);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  enum class OpType {
    Leaf, MatMul, Add, Sub, Mul, Scale, AddBiasRow, AddTiledRows, ConcatCols,
    ConcatRows, GatherRows, Reshape, Gelu, Relu, Sigmoid, LayerNorm,
    CausalAttention, ScaleToPower, FlattenRepeat, SumSq
  };
  struct OpRecord {
    OpType type;
    TensorId out = 0;
    TensorId in0 = 0, in1 = 0, in2 = 0;
    double attr = 0.0;                  // scale factor / target norm
    std::size_t n0 = 0, n1 = 0;         // seq_len+heads / copies / dims
    std::vector<std::size_t> indices;   // gather
    std::vector<double> saved;          // op-specific forward state
  };

  TensorId new_tensor(std::size_t rows, std::size_t cols, bool needs_grad);
  void backward_op(const OpRecord& op);

  // Deque so that references handed out inside op builders survive the
  // push_back in new_tensor; a vector would invalidate them on growth.
  std::deque<TapeTensor> nodes_;
  std::vector<OpRecord> ops_;
};

}  // namespace iclmimo
