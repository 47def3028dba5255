// Copyright 2026 The eend-dat Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Differentiable operations on Tensor. Each op computes its value eagerly
// and, when recording, attaches a closure that maps the output gradient to
// its inputs.

#pragma once

#include "eend/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace eend {

namespace detail {

inline void check_shape(bool ok, const char* op, const Tensor& a, const Tensor& b) {
  if (!ok) {
    std::ostringstream os;
    os << op << ": shape mismatch " << a.rows() << "x" << a.cols() << " vs " << b.rows() << "x"
       << b.cols();
    throw std::invalid_argument(os.str());
  }
}

inline void push(const std::shared_ptr<Node>& in, const Matrix& g) {
  if (in->requires_grad) in->accumulate(g);
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Matrix sigmoid(const Matrix& x) { return x.unaryExpr([](double v) { return sigmoid(v); }); }

// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::check_shape(a.cols() == b.rows(), "matmul", a, b);
  Matrix out = a.value() * b.value();
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const auto& A = self.inputs[0];
    const auto& B = self.inputs[1];
    if (A->requires_grad) A->accumulate(self.grad * B->value.transpose());
    if (B->requires_grad) B->accumulate(A->value.transpose() * self.grad);
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_shape(a.rows() == b.rows() && a.cols() == b.cols(), "add", a, b);
  return make_result(a.value() + b.value(), {a, b}, [](Node& self) {
    detail::push(self.inputs[0], self.grad);
    detail::push(self.inputs[1], self.grad);
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_shape(a.rows() == b.rows() && a.cols() == b.cols(), "sub", a, b);
  return make_result(a.value() - b.value(), {a, b}, [](Node& self) {
    detail::push(self.inputs[0], self.grad);
    detail::push(self.inputs[1], -self.grad);
  });
}

/// Adds a 1xC row to every row of an RxC matrix.
inline Tensor add_row(const Tensor& a, const Tensor& row) {
  detail::check_shape(row.rows() == 1 && row.cols() == a.cols(), "add_row", a, row);
  Matrix out = a.value().rowwise() + row.value().row(0);
  return make_result(std::move(out), {a, row}, [](Node& self) {
    detail::push(self.inputs[0], self.grad);
    if (self.inputs[1]->requires_grad) self.inputs[1]->accumulate(self.grad.colwise().sum());
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_shape(a.rows() == b.rows() && a.cols() == b.cols(), "mul", a, b);
  Matrix out = a.value().cwiseProduct(b.value());
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const auto& A = self.inputs[0];
    const auto& B = self.inputs[1];
    if (A->requires_grad) A->accumulate(self.grad.cwiseProduct(B->value));
    if (B->requires_grad) B->accumulate(self.grad.cwiseProduct(A->value));
  });
}

inline Tensor scale(const Tensor& a, double s) {
  return make_result(a.value() * s, {a}, [s](Node& self) { detail::push(self.inputs[0], self.grad * s); });
}

inline Tensor sigmoid(const Tensor& a) {
  Matrix out = detail::sigmoid(a.value());
  return make_result(std::move(out), {a}, [](Node& self) {
    const Matrix& y = self.value;
    detail::push(self.inputs[0], self.grad.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
  });
}

inline Tensor tanh(const Tensor& a) {
  Matrix out = a.value().array().tanh().matrix();
  return make_result(std::move(out), {a}, [](Node& self) {
    const Matrix& y = self.value;
    detail::push(self.inputs[0], self.grad.cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

/// x * sigmoid(x).
inline Tensor swish(const Tensor& a) {
  Matrix s = detail::sigmoid(a.value());
  Matrix out = a.value().cwiseProduct(s);
  return make_result(std::move(out), {a}, [s = std::move(s)](Node& self) {
    const Matrix& x = self.inputs[0]->value;
    Matrix d = (s.array() + x.array() * s.array() * (1.0 - s.array())).matrix();
    detail::push(self.inputs[0], self.grad.cwiseProduct(d));
  });
}

inline Tensor transpose(const Tensor& a) {
  Matrix out = a.value().transpose();
  return make_result(std::move(out), {a},
                     [](Node& self) { detail::push(self.inputs[0], self.grad.transpose()); });
}

/// Row-wise layer normalization with learned gain and bias (both 1xC).
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5) {
  detail::check_shape(gain.cols() == x.cols() && gain.rows() == 1, "layer_norm", x, gain);
  detail::check_shape(bias.cols() == x.cols() && bias.rows() == 1, "layer_norm", x, bias);
  const auto n = x.rows();
  const auto c = x.cols();
  Matrix xhat(n, c);
  Vector inv_std(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mean = x.value().row(r).mean();
    const double var = (x.value().row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.value().row(r).array() - mean) * inv_std(r);
  }
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  return make_result(std::move(out), {x, gain, bias},
                     [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                       const Matrix& g = self.grad;
                       const auto& X = self.inputs[0];
                       const auto& G = self.inputs[1];
                       const auto& B = self.inputs[2];
                       if (X->requires_grad) {
                         Matrix gx = (g.array().rowwise() * G->value.row(0).array()).matrix();
                         Matrix dx(gx.rows(), gx.cols());
                         for (Eigen::Index r = 0; r < gx.rows(); ++r) {
                           const double m1 = gx.row(r).mean();
                           const double m2 = gx.row(r).cwiseProduct(xhat.row(r)).mean();
                           dx.row(r) = inv_std(r) * (gx.row(r).array() - m1 - xhat.row(r).array() * m2);
                         }
                         X->accumulate(dx);
                       }
                       if (G->requires_grad) G->accumulate(g.cwiseProduct(xhat).colwise().sum());
                       if (B->requires_grad) B->accumulate(g.colwise().sum());
                     });
}

inline Tensor softmax_rows(const Tensor& a) {
  Matrix out(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double m = a.value().row(r).maxCoeff();
    auto e = (a.value().row(r).array() - m).exp();
    out.row(r) = e / e.sum();
  }
  return make_result(std::move(out), {a}, [](Node& self) {
    const Matrix& y = self.value;
    Vector dots = self.grad.cwiseProduct(y).rowwise().sum();
    Matrix d = (y.array() * (self.grad.colwise() - dots).array()).matrix();
    detail::push(self.inputs[0], d);
  });
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  Eigen::Index rows = 0;
  const auto cols = parts.front().cols();
  for (const auto& p : parts) {
    detail::check_shape(p.cols() == cols, "concat_rows", parts.front(), p);
    rows += p.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return make_result(std::move(out), parts, [](Node& self) {
    Eigen::Index off = 0;
    for (auto& in : self.inputs) {
      const auto r = in->value.rows();
      if (in->requires_grad) in->accumulate(self.grad.middleRows(off, r));
      off += r;
    }
  });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  Eigen::Index cols = 0;
  const auto rows = parts.front().rows();
  for (const auto& p : parts) {
    detail::check_shape(p.rows() == rows, "concat_cols", parts.front(), p);
    cols += p.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return make_result(std::move(out), parts, [](Node& self) {
    Eigen::Index off = 0;
    for (auto& in : self.inputs) {
      const auto c = in->value.cols();
      if (in->requires_grad) in->accumulate(self.grad.middleCols(off, c));
      off += c;
    }
  });
}

inline Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw std::invalid_argument("slice_rows: range out of bounds");
  }
  Matrix out = a.value().middleRows(start, count);
  return make_result(std::move(out), {a}, [start, count](Node& self) {
    const auto& in = self.inputs[0];
    if (!in->requires_grad) return;
    Matrix g = Matrix::Zero(in->value.rows(), in->value.cols());
    g.middleRows(start, count) = self.grad;
    in->accumulate(g);
  });
}

inline Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw std::invalid_argument("slice_cols: range out of bounds");
  }
  Matrix out = a.value().middleCols(start, count);
  return make_result(std::move(out), {a}, [start, count](Node& self) {
    const auto& in = self.inputs[0];
    if (!in->requires_grad) return;
    Matrix g = Matrix::Zero(in->value.rows(), in->value.cols());
    g.middleCols(start, count) = self.grad;
    in->accumulate(g);
  });
}

/// Reinterprets the row-major storage with a new shape.
inline Tensor reshape(const Tensor& a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.rows() * a.cols()) throw std::invalid_argument("reshape: size mismatch");
  Matrix out = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  return make_result(std::move(out), {a}, [](Node& self) {
    const auto& in = self.inputs[0];
    detail::push(in, Eigen::Map<const Matrix>(self.grad.data(), in->value.rows(), in->value.cols()));
  });
}

/// out.row(i) = a.row(order[i]).
inline Tensor permute_rows(const Tensor& a, const std::vector<Eigen::Index>& order) {
  if (static_cast<Eigen::Index>(order.size()) != a.rows()) {
    throw std::invalid_argument("permute_rows: order length mismatch");
  }
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < order.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = a.value().row(order[i]);
  return make_result(std::move(out), {a}, [order](Node& self) {
    const auto& in = self.inputs[0];
    if (!in->requires_grad) return;
    Matrix g = Matrix::Zero(in->value.rows(), in->value.cols());
    for (std::size_t i = 0; i < order.size(); ++i) g.row(order[i]) += self.grad.row(static_cast<Eigen::Index>(i));
    in->accumulate(g);
  });
}

/// Same values, no gradient path back to the input.
inline Tensor detach(const Tensor& a) { return Tensor::constant(a.value()); }

inline Tensor sum(const Tensor& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return make_result(std::move(out), {a}, [](Node& self) {
    const auto& in = self.inputs[0];
    detail::push(in, Matrix::Constant(in->value.rows(), in->value.cols(), self.grad(0, 0)));
  });
}

/// Gated linear unit over columns: [A | B] -> A * sigmoid(B).
inline Tensor glu(const Tensor& a) {
  if (a.cols() % 2 != 0) throw std::invalid_argument("glu: odd column count");
  const auto h = a.cols() / 2;
  Matrix gate = detail::sigmoid(a.value().rightCols(h));
  Matrix out = a.value().leftCols(h).cwiseProduct(gate);
  return make_result(std::move(out), {a}, [gate = std::move(gate), h](Node& self) {
    const auto& in = self.inputs[0];
    if (!in->requires_grad) return;
    Matrix g(in->value.rows(), 2 * h);
    const auto lin = in->value.leftCols(h);
    g.leftCols(h) = self.grad.cwiseProduct(gate);
    g.rightCols(h) =
        (self.grad.array() * lin.array() * gate.array() * (1.0 - gate.array())).matrix();
    in->accumulate(g);
  });
}

/// Per-channel 1-D convolution over rows (time) with zero "same" padding.
/// kernel is KxC with K odd, bias is 1xC.
inline Tensor depthwise_conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  detail::check_shape(kernel.cols() == x.cols() && kernel.rows() % 2 == 1, "depthwise_conv1d", x, kernel);
  detail::check_shape(bias.rows() == 1 && bias.cols() == x.cols(), "depthwise_conv1d", x, bias);
  const auto n = x.rows();
  const auto k = kernel.rows();
  const auto half = k / 2;
  Matrix out = Matrix::Zero(n, x.cols());
  out.rowwise() += bias.value().row(0);
  for (Eigen::Index t = 0; t < n; ++t) {
    for (Eigen::Index j = 0; j < k; ++j) {
      const auto src = t + j - half;
      if (src < 0 || src >= n) continue;
      out.row(t) += x.value().row(src).cwiseProduct(kernel.value().row(j));
    }
  }
  return make_result(std::move(out), {x, kernel, bias}, [n, k, half](Node& self) {
    const auto& X = self.inputs[0];
    const auto& K = self.inputs[1];
    const auto& B = self.inputs[2];
    const Matrix& g = self.grad;
    Matrix gx;
    Matrix gk;
    if (X->requires_grad) gx = Matrix::Zero(X->value.rows(), X->value.cols());
    if (K->requires_grad) gk = Matrix::Zero(K->value.rows(), K->value.cols());
    for (Eigen::Index t = 0; t < n; ++t) {
      for (Eigen::Index j = 0; j < k; ++j) {
        const auto src = t + j - half;
        if (src < 0 || src >= n) continue;
        if (X->requires_grad) gx.row(src) += g.row(t).cwiseProduct(K->value.row(j));
        if (K->requires_grad) gk.row(j) += g.row(t).cwiseProduct(X->value.row(src));
      }
    }
    if (X->requires_grad) X->accumulate(gx);
    if (K->requires_grad) K->accumulate(gk);
    if (B->requires_grad) B->accumulate(g.colwise().sum());
  });
}

/// Sum over all entries of binary cross-entropy between sigmoid(logits) and
/// targets in [0,1], computed in log space.
inline Tensor bce_with_logits_sum(const Tensor& logits, const Matrix& targets) {
  if (targets.rows() != logits.rows() || targets.cols() != logits.cols()) {
    throw std::invalid_argument("bce_with_logits_sum: shape mismatch");
  }
  double total = 0.0;
  const Matrix& x = logits.value();
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    total += detail::softplus(v) - v * targets.data()[i];
  }
  Matrix out(1, 1);
  out(0, 0) = total;
  return make_result(std::move(out), {logits}, [targets](Node& self) {
    const auto& in = self.inputs[0];
    Matrix g = (detail::sigmoid(in->value) - targets) * self.grad(0, 0);
    detail::push(in, g);
  });
}

/// -log softmax(logits)[target] for a single 1xK row.
inline Tensor softmax_cross_entropy(const Tensor& logits, Eigen::Index target) {
  if (logits.rows() != 1 || target < 0 || target >= logits.cols()) {
    throw std::invalid_argument("softmax_cross_entropy: bad logits shape or target");
  }
  const auto& z = logits.value();
  const double m = z.maxCoeff();
  const double lse = m + std::log((z.array() - m).exp().sum());
  Matrix out(1, 1);
  out(0, 0) = lse - z(0, target);
  return make_result(std::move(out), {logits}, [lse, target](Node& self) {
    const auto& in = self.inputs[0];
    Matrix g = (in->value.array() - lse).exp().matrix();
    g(0, target) -= 1.0;
    detail::push(in, g * self.grad(0, 0));
  });
}

/// Output of a fused single-layer LSTM over a sequence.
struct LstmOutput {
  Tensor hidden;  // T x H, hidden state after each step
  Tensor cell;    // 1 x H, cell state after the last step
};

/// Single-layer LSTM with gate order (input, forget, candidate, output).
/// input_weight is I x 4H, recurrent_weight is H x 4H, bias is 1 x 4H.
inline LstmOutput lstm(const Tensor& x, const Tensor& h0, const Tensor& c0, const Tensor& input_weight,
                       const Tensor& recurrent_weight, const Tensor& bias) {
  const auto steps = x.rows();
  const auto hsz = recurrent_weight.rows();
  detail::check_shape(input_weight.rows() == x.cols() && input_weight.cols() == 4 * hsz, "lstm", x,
                      input_weight);
  detail::check_shape(recurrent_weight.cols() == 4 * hsz, "lstm", recurrent_weight, bias);
  detail::check_shape(bias.rows() == 1 && bias.cols() == 4 * hsz, "lstm", recurrent_weight, bias);
  detail::check_shape(h0.rows() == 1 && h0.cols() == hsz, "lstm", h0, recurrent_weight);
  detail::check_shape(c0.rows() == 1 && c0.cols() == hsz, "lstm", c0, recurrent_weight);
  if (steps < 1) throw std::invalid_argument("lstm: empty sequence");

  // Gate activations are cached per step for the reverse pass.
  Matrix pre = x.value() * input_weight.value();
  pre.rowwise() += bias.value().row(0);
  Matrix gates(steps, 4 * hsz);
  Matrix cells(steps, hsz);
  Matrix hidden(steps, hsz);
  Eigen::RowVectorXd h = h0.value().row(0);
  Eigen::RowVectorXd c = c0.value().row(0);
  for (Eigen::Index t = 0; t < steps; ++t) {
    Eigen::RowVectorXd a = pre.row(t) + h * recurrent_weight.value();
    for (Eigen::Index j = 0; j < hsz; ++j) {
      gates(t, j) = detail::sigmoid(a(j));
      gates(t, hsz + j) = detail::sigmoid(a(hsz + j));
      gates(t, 2 * hsz + j) = std::tanh(a(2 * hsz + j));
      gates(t, 3 * hsz + j) = detail::sigmoid(a(3 * hsz + j));
    }
    c = gates.row(t).segment(hsz, hsz).cwiseProduct(c) +
        gates.row(t).segment(0, hsz).cwiseProduct(gates.row(t).segment(2 * hsz, hsz));
    h = gates.row(t).segment(3 * hsz, hsz).cwiseProduct(c.array().tanh().matrix());
    cells.row(t) = c;
    hidden.row(t) = h;
  }

  Matrix packed(steps + 1, hsz);
  packed.topRows(steps) = hidden;
  packed.row(steps) = c;
  Tensor combined = make_result(
      std::move(packed), {x, h0, c0, input_weight, recurrent_weight, bias},
      [gates = std::move(gates), cells = std::move(cells), steps, hsz](Node& self) {
        const auto& X = self.inputs[0];
        const auto& H0 = self.inputs[1];
        const auto& C0 = self.inputs[2];
        const auto& Wi = self.inputs[3];
        const auto& Wh = self.inputs[4];
        const auto& Bi = self.inputs[5];
        const Matrix& hidden_all = self.value;

        Matrix dpre(steps, 4 * hsz);
        Eigen::RowVectorXd dh_next = Eigen::RowVectorXd::Zero(hsz);
        Eigen::RowVectorXd dc_next = self.grad.row(steps);
        for (Eigen::Index t = steps - 1; t >= 0; --t) {
          Eigen::RowVectorXd dh = self.grad.row(t) + dh_next;
          const auto i = gates.row(t).segment(0, hsz).array();
          const auto f = gates.row(t).segment(hsz, hsz).array();
          const auto g = gates.row(t).segment(2 * hsz, hsz).array();
          const auto o = gates.row(t).segment(3 * hsz, hsz).array();
          const Eigen::RowVectorXd tcv = cells.row(t).array().tanh().matrix();
          const auto tc = tcv.array();
          Eigen::RowVectorXd c_prev = t > 0 ? Eigen::RowVectorXd(cells.row(t - 1)) : Eigen::RowVectorXd(C0->value.row(0));
          Eigen::RowVectorXd dc = dc_next.array() + dh.array() * o * (1.0 - tc.square());
          dpre.row(t).segment(0, hsz) = (dc.array() * g * i * (1.0 - i)).matrix();
          dpre.row(t).segment(hsz, hsz) = (dc.array() * c_prev.array() * f * (1.0 - f)).matrix();
          dpre.row(t).segment(2 * hsz, hsz) = (dc.array() * i * (1.0 - g.square())).matrix();
          dpre.row(t).segment(3 * hsz, hsz) = (dh.array() * tc * o * (1.0 - o)).matrix();
          dh_next = dpre.row(t) * Wh->value.transpose();
          dc_next = (dc.array() * f).matrix();
        }
        if (X->requires_grad) X->accumulate(dpre * Wi->value.transpose());
        if (Wi->requires_grad) Wi->accumulate(X->value.transpose() * dpre);
        if (Bi->requires_grad) Bi->accumulate(dpre.colwise().sum());
        if (Wh->requires_grad) {
          Matrix h_prev(steps, hsz);
          h_prev.row(0) = H0->value.row(0);
          if (steps > 1) h_prev.bottomRows(steps - 1) = hidden_all.topRows(steps - 1);
          Wh->accumulate(h_prev.transpose() * dpre);
        }
        if (H0->requires_grad) H0->accumulate(dh_next);
        if (C0->requires_grad) C0->accumulate(dc_next);
      });
  return {slice_rows(combined, 0, steps), slice_rows(combined, steps, 1)};
}

}  // namespace eend
