// SPDX-License-Identifier: Apache-2.0
#include "iclmimo/graph.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "iclmimo/errors.hpp"

// Fortran BLAS entry point; works against any conforming BLAS (the build
// links OpenBLAS). Used only for the large real matmuls on the tape.
extern "C" void dgemm_(const char* transa, const char* transb, const int* m, const int* n,
                       const int* k, const double* alpha, const double* a, const int* lda,
                       const double* b, const int* ldb, const double* beta, double* c,
                       const int* ldc);

namespace iclmimo {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kInvSqrt2 = 0.70710678118654752440084436210485;
constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438;

// Row-major C (m x n) = alpha * op(A)(m x k) * op(B)(k x n) + beta * C.
// Leading dimensions are the physical column counts.
void gemm_rm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda,
             const double* b, int ldb, double beta, double* c, int ldc) {
  const char* tas = ta ? "T" : "N";
  const char* tbs = tb ? "T" : "N";
  dgemm_(tbs, tas, &n, &m, &k, &alpha, b, &ldb, a, &lda, &beta, c, &ldc);
}

}  // namespace

TensorId Graph::new_tensor(std::size_t rows, std::size_t cols, bool needs_grad) {
  if (rows == 0 || cols == 0) throw ShapeError("graph: zero-dimension tensor");
  TapeTensor t;
  t.rows = rows;
  t.cols = cols;
  t.value.assign(rows * cols, 0.0);
  t.needs_grad = needs_grad;
  if (needs_grad) t.grad.assign(rows * cols, 0.0);
  nodes_.push_back(std::move(t));
  return static_cast<TensorId>(nodes_.size() - 1);
}

TensorId Graph::constant(std::size_t rows, std::size_t cols, const double* data) {
  const TensorId id = new_tensor(rows, cols, false);
  std::memcpy(nodes_[id].value.data(), data, rows * cols * sizeof(double));
  return id;
}

TensorId Graph::constant(std::size_t rows, std::size_t cols, const std::vector<double>& data) {
  if (data.size() != rows * cols) throw ShapeError("graph constant: data length mismatch");
  return constant(rows, cols, data.data());
}

TensorId Graph::param(std::size_t rows, std::size_t cols, const double* data) {
  const TensorId id = new_tensor(rows, cols, true);
  std::memcpy(nodes_[id].value.data(), data, rows * cols * sizeof(double));
  return id;
}

TensorId Graph::param(std::size_t rows, std::size_t cols, const std::vector<double>& data) {
  if (data.size() != rows * cols) throw ShapeError("graph param: data length mismatch");
  return param(rows, cols, data.data());
}

double Graph::scalar(TensorId id) const {
  if (nodes_[id].size() != 1) throw ShapeError("graph scalar: tensor is not 1x1");
  return nodes_[id].value[0];
}

TensorId Graph::matmul(TensorId a, TensorId b) {
  const TapeTensor& ta = nodes_[a];
  const TapeTensor& tb = nodes_[b];
  if (ta.cols != tb.rows)
    throw ShapeError("graph matmul: " + std::to_string(ta.rows) + "x" + std::to_string(ta.cols) +
                     " * " + std::to_string(tb.rows) + "x" + std::to_string(tb.cols));
  const TensorId out = new_tensor(ta.rows, tb.cols, ta.needs_grad || tb.needs_grad);
  gemm_rm(false, false, static_cast<int>(ta.rows), static_cast<int>(tb.cols),
          static_cast<int>(ta.cols), 1.0, nodes_[a].value.data(), static_cast<int>(ta.cols),
          nodes_[b].value.data(), static_cast<int>(tb.cols), 0.0, nodes_[out].value.data(),
          static_cast<int>(tb.cols));
  ops_.push_back({OpType::MatMul, out, a, b, 0, 0.0, 0, 0, {}, {}});
  return out;
}

TensorId Graph::add(TensorId a, TensorId b) {
  const TapeTensor& ta = nodes_[a];
  const TapeTensor& tb = nodes_[b];
  if (ta.rows != tb.rows || ta.cols != tb.cols) throw ShapeError("graph add: shape mismatch");
  const TensorId out = new_tensor(ta.rows, ta.cols, ta.needs_grad || tb.needs_grad);
  for (std::size_t i = 0; i < nodes_[out].size(); ++i)
    nodes_[out].value[i] = nodes_[a].value[i] + nodes_[b].value[i];
  ops_.push_back({OpType::Add, out, a, b, 0, 0.0, 0, 0, {}, {}});
  return out;
}

TensorId Graph::sub(TensorId a, TensorId b) {
  const TapeTensor& ta = nodes_[a];
  const TapeTensor& tb = nodes_[b];
  if (ta.rows != tb.rows || ta.cols != tb.cols) throw ShapeError("graph sub: shape mismatch");
  const TensorId out = new_tensor(ta.rows, ta.cols, ta.needs_grad || tb.needs_grad);
  for (std::size_t i = 0; i < nodes_[out].size(); ++i)
    nodes_[out].value[i] = nodes_[a].value[i] - nodes_[b].value[i];
  ops_.push_back({OpType::Sub, out, a, b, 0, 0.0, 0, 0, {}, {}});
  return out;
}

TensorId Graph::mul(TensorId a, TensorId b) {
  const TapeTensor& ta = nodes_[a];
  const TapeTensor& tb = nodes_[b];
  if (ta.rows != tb.rows || ta.cols != tb.cols) throw ShapeError("graph mul: shape mismatch");
  const TensorId out = new_tensor(ta.rows, ta.cols, ta.needs_grad || tb.needs_grad);
  for (std::size_t i = 0; i < nodes_[out].size(); ++i)
    nodes_[out].value[i] = nodes_[a].value[i] * nodes_[b].value[i];
  ops_.push_back({OpType::Mul, out, a, b, 0, 0.0, 0, 0, {}, {}});
  return out;
}

TensorId Graph::scale(TensorId a, double s) {
  const TapeTensor& ta = nodes_[a];
  const TensorId out = new_tensor(ta.rows, ta.cols, ta.needs_grad);
  for (std::size_t i = 0; i < nodes_[out].size(); ++i)
    nodes_[out].value[i] = nodes_[a].value[i] * s;
  ops_.push_back({OpType::Scale, out, a, 0, 0, s, 0, 0, {}, {}});
  return out;
}

TensorId Graph::add_bias_row(TensorId a, TensorId bias) {
  const TapeTensor& ta = nodes_[a];
  const TapeTensor& tbias = nodes_[bias];
  if (tbias.rows != 1 || tbias.cols != ta.cols)
    throw ShapeError("graph add_bias_row: bias must be 1 x cols");
  const TensorId out = new_tensor(ta.rows, ta.cols, ta.needs_grad || tbias.needs_grad);
  for (std::size_t r = 0; r < ta.rows; ++r)
    for (std::size_t c = 0; c < ta.cols; ++c)
      nodes_[out].value[r * ta.cols + c] =
          nodes_[a].value[r * ta.cols + c] + nodes_[bias].value[c];
  ops_.push_back({OpType::AddBiasRow, out, a, bias, 0, 0.0, 0, 0, {}, {}});
  return out;
}

TensorId Graph::add_tiled_rows(TensorId a, TensorId tile) {
  const TapeTensor& ta = nodes_[a];
  const TapeTensor& tt = nodes_[tile];
  if (tt.cols != ta.cols || ta.rows % tt.rows != 0)
    throw ShapeError("graph add_tiled_rows: tile shape does not divide input");
  const TensorId out = new_tensor(ta.rows, ta.cols, ta.needs_grad || tt.needs_grad);
  const std::size_t trows = tt.rows;
  for (std::size_t r = 0; r < ta.rows; ++r) {
    const std::size_t tr = r % trows;
    for (std::size_t c = 0; c < ta.cols; ++c)
      nodes_[out].value[r * ta.cols + c] =
          nodes_[a].value[r * ta.cols + c] + nodes_[tile].value[tr * ta.cols + c];
  }
  ops_.push_back({OpType::AddTiledRows, out, a, tile, 0, 0.0, 0, 0, {}, {}});
  return out;
}

TensorId Graph::concat_cols(TensorId a, TensorId b) {
  const TapeTensor& ta = nodes_[a];
  const TapeTensor& tb = nodes_[b];
  if (ta.rows != tb.rows) throw ShapeError("graph concat_cols: row count mismatch");
  const std::size_t cols = ta.cols + tb.cols;
  const TensorId out = new_tensor(ta.rows, cols, ta.needs_grad || tb.needs_grad);
  for (std::size_t r = 0; r < ta.rows; ++r) {
    std::memcpy(&nodes_[out].value[r * cols], &nodes_[a].value[r * ta.cols],
                ta.cols * sizeof(double));
    std::memcpy(&nodes_[out].value[r * cols + ta.cols], &nodes_[b].value[r * tb.cols],
                tb.cols * sizeof(double));
  }
  ops_.push_back({OpType::ConcatCols, out, a, b, 0, 0.0, 0, 0, {}, {}});
  return out;
}

TensorId Graph::concat_rows(TensorId a, TensorId b) {
  const TapeTensor& ta = nodes_[a];
  const TapeTensor& tb = nodes_[b];
  if (ta.cols != tb.cols) throw ShapeError("graph concat_rows: column count mismatch");
  const TensorId out = new_tensor(ta.rows + tb.rows, ta.cols, ta.needs_grad || tb.needs_grad);
  std::memcpy(nodes_[out].value.data(), nodes_[a].value.data(), ta.size() * sizeof(double));
  std::memcpy(nodes_[out].value.data() + ta.size(), nodes_[b].value.data(),
              tb.size() * sizeof(double));
  ops_.push_back({OpType::ConcatRows, out, a, b, 0, 0.0, 0, 0, {}, {}});
  return out;
}

TensorId Graph::gather_rows(TensorId a, std::vector<std::size_t> indices) {
  const TapeTensor& ta = nodes_[a];
  for (std::size_t idx : indices)
    if (idx >= ta.rows) throw ShapeError("graph gather_rows: index out of range");
  const TensorId out = new_tensor(indices.size(), ta.cols, ta.needs_grad);
  for (std::size_t k = 0; k < indices.size(); ++k)
    std::memcpy(&nodes_[out].value[k * ta.cols], &nodes_[a].value[indices[k] * ta.cols],
                ta.cols * sizeof(double));
  ops_.push_back({OpType::GatherRows, out, a, 0, 0, 0.0, 0, 0, std::move(indices), {}});
  return out;
}

TensorId Graph::reshape(TensorId a, std::size_t rows, std::size_t cols) {
  const TapeTensor& ta = nodes_[a];
  if (rows * cols != ta.size()) throw ShapeError("graph reshape: element count mismatch");
  const TensorId out = new_tensor(rows, cols, ta.needs_grad);
  std::memcpy(nodes_[out].value.data(), nodes_[a].value.data(), ta.size() * sizeof(double));
  ops_.push_back({OpType::Reshape, out, a, 0, 0, 0.0, 0, 0, {}, {}});
  return out;
}

TensorId Graph::gelu(TensorId a) {
  const TapeTensor& ta = nodes_[a];
  const TensorId out = new_tensor(ta.rows, ta.cols, ta.needs_grad);
  for (std::size_t i = 0; i < ta.size(); ++i) {
    const double x = nodes_[a].value[i];
    nodes_[out].value[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  }
  ops_.push_back({OpType::Gelu, out, a, 0, 0, 0.0, 0, 0, {}, {}});
  return out;
}

TensorId Graph::relu(TensorId a) {
  const TapeTensor& ta = nodes_[a];
  const TensorId out = new_tensor(ta.rows, ta.cols, ta.needs_grad);
  for (std::size_t i = 0; i < ta.size(); ++i)
    nodes_[out].value[i] = nodes_[a].value[i] > 0.0 ? nodes_[a].value[i] : 0.0;
  ops_.push_back({OpType::Relu, out, a, 0, 0, 0.0, 0, 0, {}, {}});
  return out;
}

TensorId Graph::sigmoid(TensorId a) {
  const TapeTensor& ta = nodes_[a];
  const TensorId out = new_tensor(ta.rows, ta.cols, ta.needs_grad);
  for (std::size_t i = 0; i < ta.size(); ++i)
    nodes_[out].value[i] = 1.0 / (1.0 + std::exp(-nodes_[a].value[i]));
  ops_.push_back({OpType::Sigmoid, out, a, 0, 0, 0.0, 0, 0, {}, {}});
  return out;
}

TensorId Graph::layer_norm(TensorId a, TensorId gain, TensorId bias) {
  const TapeTensor& ta = nodes_[a];
  const TapeTensor& tg = nodes_[gain];
  const TapeTensor& tb = nodes_[bias];
  if (tg.rows != 1 || tg.cols != ta.cols || tb.rows != 1 || tb.cols != ta.cols)
    throw ShapeError("graph layer_norm: gain/bias must be 1 x cols");
  const TensorId out =
      new_tensor(ta.rows, ta.cols, ta.needs_grad || tg.needs_grad || tb.needs_grad);
  OpRecord rec{OpType::LayerNorm, out, a, gain, bias, 0.0, 0, 0, {}, {}};
  rec.saved.resize(ta.size() + ta.rows);  // xhat, then inv_std per row
  const std::size_t n = ta.cols;
  for (std::size_t r = 0; r < ta.rows; ++r) {
    const double* x = &nodes_[a].value[r * n];
    double mean = 0.0;
    for (std::size_t c = 0; c < n; ++c) mean += x[c];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (x[c] - mean) * (x[c] - mean);
    var /= static_cast<double>(n);
    const double inv_std = 1.0 / std::sqrt(var + kLnEps);
    rec.saved[ta.size() + r] = inv_std;
    for (std::size_t c = 0; c < n; ++c) {
      const double xhat = (x[c] - mean) * inv_std;
      rec.saved[r * n + c] = xhat;
      nodes_[out].value[r * n + c] = nodes_[gain].value[c] * xhat + nodes_[bias].value[c];
    }
  }
  ops_.push_back(std::move(rec));
  return out;
}

TensorId Graph::causal_attention(TensorId q, TensorId k, TensorId v, std::size_t seq_len,
                                 std::size_t heads) {
  const TapeTensor& tq = nodes_[q];
  const TapeTensor& tk = nodes_[k];
  const TapeTensor& tv = nodes_[v];
  if (tq.rows != tk.rows || tq.rows != tv.rows || tq.cols != tk.cols || tq.cols != tv.cols)
    throw ShapeError("graph causal_attention: q/k/v shapes disagree");
  if (seq_len == 0 || tq.rows % seq_len != 0)
    throw ShapeError("graph causal_attention: rows not a multiple of seq_len");
  if (heads == 0 || tq.cols % heads != 0)
    throw ShapeError("graph causal_attention: cols not divisible by heads");

  const std::size_t batch = tq.rows / seq_len;
  const std::size_t d = tq.cols;
  const std::size_t dh = d / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  const TensorId out =
      new_tensor(tq.rows, tq.cols, tq.needs_grad || tk.needs_grad || tv.needs_grad);
  OpRecord rec{OpType::CausalAttention, out, q, k, v, 0.0, seq_len, heads, {}, {}};
  rec.saved.assign(batch * heads * seq_len * seq_len, 0.0);  // softmax weights

  std::vector<double> scores(seq_len);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      double* wbase = &rec.saved[(b * heads + h) * seq_len * seq_len];
      for (std::size_t i = 0; i < seq_len; ++i) {
        const double* qi = &nodes_[q].value[(b * seq_len + i) * d + h * dh];
        double smax = -1e300;
        for (std::size_t j = 0; j <= i; ++j) {
          const double* kj = &nodes_[k].value[(b * seq_len + j) * d + h * dh];
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
          s *= inv_sqrt_dh;
          scores[j] = s;
          if (s > smax) smax = s;
        }
        double sum = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          const double w = std::exp(scores[j] - smax);
          wbase[i * seq_len + j] = w;
          sum += w;
        }
        const double inv_sum = 1.0 / sum;
        double* oi = &nodes_[out].value[(b * seq_len + i) * d + h * dh];
        for (std::size_t j = 0; j <= i; ++j) {
          const double w = wbase[i * seq_len + j] * inv_sum;
          wbase[i * seq_len + j] = w;
          const double* vj = &nodes_[v].value[(b * seq_len + j) * d + h * dh];
          for (std::size_t c = 0; c < dh; ++c) oi[c] += w * vj[c];
        }
      }
    }
  }
  ops_.push_back(std::move(rec));
  return out;
}

TensorId Graph::scale_to_power(TensorId a, double target_sq_norm) {
  const TapeTensor& ta = nodes_[a];
  double sq = 0.0;
  for (std::size_t i = 0; i < ta.size(); ++i) sq += ta.value[i] * ta.value[i];
  if (sq == 0.0) throw DegenerateInputError("graph scale_to_power: zero input");
  const double r = std::sqrt(sq);
  const double c = std::sqrt(target_sq_norm);
  const TensorId out = new_tensor(ta.rows, ta.cols, ta.needs_grad);
  const double f = c / r;
  for (std::size_t i = 0; i < ta.size(); ++i) nodes_[out].value[i] = f * nodes_[a].value[i];
  OpRecord rec{OpType::ScaleToPower, out, a, 0, 0, target_sq_norm, 0, 0, {}, {}};
  rec.saved = {r};
  ops_.push_back(std::move(rec));
  return out;
}

TensorId Graph::flatten_repeat(TensorId a, std::size_t copies) {
  const TapeTensor& ta = nodes_[a];
  if (copies == 0) throw ShapeError("graph flatten_repeat: zero copies");
  const TensorId out = new_tensor(copies, ta.size(), ta.needs_grad);
  for (std::size_t r = 0; r < copies; ++r)
    std::memcpy(&nodes_[out].value[r * ta.size()], nodes_[a].value.data(),
                ta.size() * sizeof(double));
  ops_.push_back({OpType::FlattenRepeat, out, a, 0, 0, 0.0, copies, 0, {}, {}});
  return out;
}

TensorId Graph::sum_sq(TensorId a) {
  const TapeTensor& ta = nodes_[a];
  const TensorId out = new_tensor(1, 1, ta.needs_grad);
  double s = 0.0;
  for (std::size_t i = 0; i < ta.size(); ++i) s += ta.value[i] * ta.value[i];
  nodes_[out].value[0] = s;
  ops_.push_back({OpType::SumSq, out, a, 0, 0, 0.0, 0, 0, {}, {}});
  return out;
}

void Graph::backward(TensorId loss) {
  TapeTensor& lt = nodes_[loss];
  if (lt.size() != 1) throw ShapeError("graph backward: loss must be 1x1");
  if (!lt.needs_grad)
    throw ShapeError("graph backward: loss does not depend on any tracked parameter");
  lt.grad[0] = 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    if (!nodes_[it->out].needs_grad) continue;
    backward_op(*it);
  }
}

void Graph::backward_op(const OpRecord& op) {
  TapeTensor& to = nodes_[op.out];
  const double* g = to.grad.data();

  auto acc = [&](TensorId id) -> double* {
    return nodes_[id].needs_grad ? nodes_[id].grad.data() : nullptr;
  };

  switch (op.type) {
    case OpType::Leaf:
      break;
    case OpType::MatMul: {
      const TapeTensor& a = nodes_[op.in0];
      const TapeTensor& b = nodes_[op.in1];
      if (double* ga = acc(op.in0))
        gemm_rm(false, true, static_cast<int>(a.rows), static_cast<int>(a.cols),
                static_cast<int>(b.cols), 1.0, g, static_cast<int>(b.cols), b.value.data(),
                static_cast<int>(b.cols), 1.0, ga, static_cast<int>(a.cols));
      if (double* gb = acc(op.in1))
        gemm_rm(true, false, static_cast<int>(b.rows), static_cast<int>(b.cols),
                static_cast<int>(a.rows), 1.0, a.value.data(), static_cast<int>(a.cols), g,
                static_cast<int>(b.cols), 1.0, gb, static_cast<int>(b.cols));
      break;
    }
    case OpType::Add: {
      if (double* ga = acc(op.in0))
        for (std::size_t i = 0; i < to.size(); ++i) ga[i] += g[i];
      if (double* gb = acc(op.in1))
        for (std::size_t i = 0; i < to.size(); ++i) gb[i] += g[i];
      break;
    }
    case OpType::Sub: {
      if (double* ga = acc(op.in0))
        for (std::size_t i = 0; i < to.size(); ++i) ga[i] += g[i];
      if (double* gb = acc(op.in1))
        for (std::size_t i = 0; i < to.size(); ++i) gb[i] -= g[i];
      break;
    }
    case OpType::Mul: {
      const TapeTensor& a = nodes_[op.in0];
      const TapeTensor& b = nodes_[op.in1];
      if (double* ga = acc(op.in0))
        for (std::size_t i = 0; i < to.size(); ++i) ga[i] += g[i] * b.value[i];
      if (double* gb = acc(op.in1))
        for (std::size_t i = 0; i < to.size(); ++i) gb[i] += g[i] * a.value[i];
      break;
    }
    case OpType::Scale: {
      if (double* ga = acc(op.in0))
        for (std::size_t i = 0; i < to.size(); ++i) ga[i] += g[i] * op.attr;
      break;
    }
    case OpType::AddBiasRow: {
      const TapeTensor& a = nodes_[op.in0];
      if (double* ga = acc(op.in0))
        for (std::size_t i = 0; i < to.size(); ++i) ga[i] += g[i];
      if (double* gb = acc(op.in1))
        for (std::size_t r = 0; r < a.rows; ++r)
          for (std::size_t c = 0; c < a.cols; ++c) gb[c] += g[r * a.cols + c];
      break;
    }
    case OpType::AddTiledRows: {
      const TapeTensor& a = nodes_[op.in0];
      const TapeTensor& tile = nodes_[op.in1];
      if (double* ga = acc(op.in0))
        for (std::size_t i = 0; i < to.size(); ++i) ga[i] += g[i];
      if (double* gt = acc(op.in1))
        for (std::size_t r = 0; r < a.rows; ++r) {
          const std::size_t tr = r % tile.rows;
          for (std::size_t c = 0; c < a.cols; ++c) gt[tr * a.cols + c] += g[r * a.cols + c];
        }
      break;
    }
    case OpType::ConcatCols: {
      const TapeTensor& a = nodes_[op.in0];
      const TapeTensor& b = nodes_[op.in1];
      const std::size_t cols = to.cols;
      if (double* ga = acc(op.in0))
        for (std::size_t r = 0; r < a.rows; ++r)
          for (std::size_t c = 0; c < a.cols; ++c) ga[r * a.cols + c] += g[r * cols + c];
      if (double* gb = acc(op.in1))
        for (std::size_t r = 0; r < b.rows; ++r)
          for (std::size_t c = 0; c < b.cols; ++c)
            gb[r * b.cols + c] += g[r * cols + a.cols + c];
      break;
    }
    case OpType::ConcatRows: {
      const TapeTensor& a = nodes_[op.in0];
      const TapeTensor& b = nodes_[op.in1];
      if (double* ga = acc(op.in0))
        for (std::size_t i = 0; i < a.size(); ++i) ga[i] += g[i];
      if (double* gb = acc(op.in1))
        for (std::size_t i = 0; i < b.size(); ++i) gb[i] += g[a.size() + i];
      break;
    }
    case OpType::GatherRows: {
      const TapeTensor& a = nodes_[op.in0];
      if (double* ga = acc(op.in0))
        for (std::size_t k = 0; k < op.indices.size(); ++k)
          for (std::size_t c = 0; c < a.cols; ++c)
            ga[op.indices[k] * a.cols + c] += g[k * a.cols + c];
      break;
    }
    case OpType::Reshape: {
      if (double* ga = acc(op.in0))
        for (std::size_t i = 0; i < to.size(); ++i) ga[i] += g[i];
      break;
    }
    case OpType::Gelu: {
      const TapeTensor& a = nodes_[op.in0];
      if (double* ga = acc(op.in0))
        for (std::size_t i = 0; i < to.size(); ++i) {
          const double x = a.value[i];
          const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
          const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
          ga[i] += g[i] * (cdf + x * pdf);
        }
      break;
    }
    case OpType::Relu: {
      const TapeTensor& a = nodes_[op.in0];
      if (double* ga = acc(op.in0))
        for (std::size_t i = 0; i < to.size(); ++i)
          if (a.value[i] > 0.0) ga[i] += g[i];
      break;
    }
    case OpType::Sigmoid: {
      if (double* ga = acc(op.in0))
        for (std::size_t i = 0; i < to.size(); ++i) {
          const double y = to.value[i];
          ga[i] += g[i] * y * (1.0 - y);
        }
      break;
    }
    case OpType::LayerNorm: {
      const TapeTensor& a = nodes_[op.in0];
      const TapeTensor& gain = nodes_[op.in1];
      const std::size_t n = a.cols;
      double* ga = acc(op.in0);
      double* gg = acc(op.in1);
      double* gb = acc(op.in2);
      for (std::size_t r = 0; r < a.rows; ++r) {
        const double* xhat = &op.saved[r * n];
        const double inv_std = op.saved[a.size() + r];
        const double* gr = &g[r * n];
        if (gg)
          for (std::size_t c = 0; c < n; ++c) gg[c] += gr[c] * xhat[c];
        if (gb)
          for (std::size_t c = 0; c < n; ++c) gb[c] += gr[c];
        if (ga) {
          double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
          for (std::size_t c = 0; c < n; ++c) {
            const double dxhat = gr[c] * gain.value[c];
            mean_dxhat += dxhat;
            mean_dxhat_xhat += dxhat * xhat[c];
          }
          mean_dxhat /= static_cast<double>(n);
          mean_dxhat_xhat /= static_cast<double>(n);
          for (std::size_t c = 0; c < n; ++c) {
            const double dxhat = gr[c] * gain.value[c];
            ga[r * n + c] += inv_std * (dxhat - mean_dxhat - xhat[c] * mean_dxhat_xhat);
          }
        }
      }
      break;
    }
    case OpType::CausalAttention: {
      const TapeTensor& q = nodes_[op.in0];
      const std::size_t seq_len = op.n0, heads = op.n1;
      const std::size_t batch = q.rows / seq_len;
      const std::size_t d = q.cols;
      const std::size_t dh = d / heads;
      const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
      double* gq = acc(op.in0);
      double* gk = acc(op.in1);
      double* gv = acc(op.in2);
      const double* qv = nodes_[op.in0].value.data();
      const double* kv = nodes_[op.in1].value.data();
      const double* vv = nodes_[op.in2].value.data();
      std::vector<double> dw(seq_len), ds(seq_len);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
          const double* wbase = &op.saved[(b * heads + h) * seq_len * seq_len];
          for (std::size_t i = 0; i < seq_len; ++i) {
            const double* go = &g[(b * seq_len + i) * d + h * dh];
            double wdot = 0.0;
            for (std::size_t j = 0; j <= i; ++j) {
              const double* vj = &vv[(b * seq_len + j) * d + h * dh];
              double s = 0.0;
              for (std::size_t c = 0; c < dh; ++c) s += go[c] * vj[c];
              dw[j] = s;
              wdot += wbase[i * seq_len + j] * s;
            }
            for (std::size_t j = 0; j <= i; ++j)
              ds[j] = wbase[i * seq_len + j] * (dw[j] - wdot);
            if (gv)
              for (std::size_t j = 0; j <= i; ++j) {
                double* gvj = &gv[(b * seq_len + j) * d + h * dh];
                const double w = wbase[i * seq_len + j];
                for (std::size_t c = 0; c < dh; ++c) gvj[c] += w * go[c];
              }
            if (gq) {
              double* gqi = &gq[(b * seq_len + i) * d + h * dh];
              for (std::size_t j = 0; j <= i; ++j) {
                const double* kj = &kv[(b * seq_len + j) * d + h * dh];
                const double dsj = ds[j] * inv_sqrt_dh;
                for (std::size_t c = 0; c < dh; ++c) gqi[c] += dsj * kj[c];
              }
            }
            if (gk) {
              const double* qi = &qv[(b * seq_len + i) * d + h * dh];
              for (std::size_t j = 0; j <= i; ++j) {
                double* gkj = &gk[(b * seq_len + j) * d + h * dh];
                const double dsj = ds[j] * inv_sqrt_dh;
                for (std::size_t c = 0; c < dh; ++c) gkj[c] += dsj * qi[c];
              }
            }
          }
        }
      }
      break;
    }
    case OpType::ScaleToPower: {
      const TapeTensor& a = nodes_[op.in0];
      if (double* ga = acc(op.in0)) {
        const double r = op.saved[0];
        const double c = std::sqrt(op.attr);
        double xg = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) xg += a.value[i] * g[i];
        const double f1 = c / r;
        const double f2 = c / (r * r * r) * xg;
        for (std::size_t i = 0; i < a.size(); ++i) ga[i] += f1 * g[i] - f2 * a.value[i];
      }
      break;
    }
    case OpType::FlattenRepeat: {
      const TapeTensor& a = nodes_[op.in0];
      if (double* ga = acc(op.in0))
        for (std::size_t r = 0; r < op.n0; ++r)
          for (std::size_t i = 0; i < a.size(); ++i) ga[i] += g[r * a.size() + i];
      break;
    }
    case OpType::SumSq: {
      const TapeTensor& a = nodes_[op.in0];
      if (double* ga = acc(op.in0)) {
        const double g0 = g[0];
        for (std::size_t i = 0; i < a.size(); ++i) ga[i] += 2.0 * a.value[i] * g0;
      }
      break;
    }
  }
}

}  // namespace iclmimo
