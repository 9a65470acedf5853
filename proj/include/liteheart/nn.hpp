#pragma once

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "liteheart/rng.hpp"
#include "liteheart/tensor.hpp"

namespace liteheart::nn {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <class T>
MatMap<T> as_matrix(Tensor<T>& t, Index rows, Index cols) {
  return MatMap<T>(t.data(), rows, cols);
}
template <class T>
ConstMatMap<T> as_matrix(const Tensor<T>& t, Index rows, Index cols) {
  return ConstMatMap<T>(t.data(), rows, cols);
}

template <class T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  void init_shape(std::vector<Index> shape) {
    value = Tensor<T>(shape);
    grad = Tensor<T>(std::move(shape));
  }
};

template <class T>
using ParamRefs = std::vector<Param<T>*>;

template <class T>
Index param_count(const ParamRefs<T>& params) {
  Index n = 0;
  for (const Param<T>* p : params) n += p->value.numel();
  return n;
}

template <class T>
void zero_grads(const ParamRefs<T>& params) {
  for (Param<T>* p : params) p->grad.zero();
}

/// LIFO store of tensors saved by forward passes for the matching backward.
template <class T>
struct Cache {
  std::vector<Tensor<T>> stack;
  void push(Tensor<T> t) { stack.push_back(std::move(t)); }
  Tensor<T> pop() {
    if (stack.empty()) throw std::logic_error("Cache::pop on empty cache");
    Tensor<T> t = std::move(stack.back());
    stack.pop_back();
    return t;
  }
  void clear() { stack.clear(); }
};

// ---------------------------------------------------------------------------
// Initializers

template <class T>
void he_normal(Tensor<T>& w, Index fan_in, RandomEngine& rng) {
  const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (Index i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(rng.normal(0.0, std_dev));
}

template <class T>
void xavier_uniform(Tensor<T>& w, Index fan_in, Index fan_out, RandomEngine& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (Index i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(rng.uniform(-limit, limit));
}

// ---------------------------------------------------------------------------
// Linear: y = x W^T + b, x [R, in], W [out, in]

template <class T>
struct Linear {
  Param<T> weight, bias;
  Index in_dim = 0, out_dim = 0;

  void init(Index in, Index out, const std::string& name, RandomEngine& rng, bool he = false) {
    in_dim = in;
    out_dim = out;
    weight.name = name + ".weight";
    bias.name = name + ".bias";
    weight.init_shape({out, in});
    bias.init_shape({out});
    if (he)
      he_normal(weight.value, in, rng);
    else
      xavier_uniform(weight.value, in, out, rng);
  }

  void collect(ParamRefs<T>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }

  Tensor<T> forward(const Tensor<T>& x, Cache<T>* cache) const {
    const Index rows = x.numel() / in_dim;
    Tensor<T> y({rows, out_dim});
    as_matrix(y, rows, out_dim).noalias() =
        as_matrix(x, rows, in_dim) * as_matrix(weight.value, out_dim, in_dim).transpose();
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < out_dim; ++c) y.at(r, c) += bias.value[c];
    if (cache) cache->push(x);
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, Cache<T>& cache) {
    const Tensor<T> x = cache.pop();
    const Index rows = x.numel() / in_dim;
    as_matrix(weight.grad, out_dim, in_dim).noalias() +=
        as_matrix(dy, rows, out_dim).transpose() * as_matrix(x, rows, in_dim);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < out_dim; ++c) bias.grad[c] += dy.at(r, c);
    Tensor<T> dx(x.shape());
    as_matrix(dx, rows, in_dim).noalias() =
        as_matrix(dy, rows, out_dim) * as_matrix(weight.value, out_dim, in_dim);
    return dx;
  }

  Index flops(Index rows) const { return 2 * in_dim * out_dim * rows; }
};

// ---------------------------------------------------------------------------
// Conv1d: x [N, Cin, L] -> y [N, Cout, Lout], weight [Cout, Cin*k]

template <class T>
struct Conv1d {
  Param<T> weight, bias;
  Index in_ch = 0, out_ch = 0, kernel = 0, stride = 1, pad = 0;

  void init(Index cin, Index cout, Index k, Index s, Index p, const std::string& name,
            RandomEngine& rng) {
    in_ch = cin;
    out_ch = cout;
    kernel = k;
    stride = s;
    pad = p;
    weight.name = name + ".weight";
    bias.name = name + ".bias";
    weight.init_shape({cout, cin * k});
    bias.init_shape({cout});
    he_normal(weight.value, cin * k, rng);
  }

  void collect(ParamRefs<T>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }

  Index out_len(Index L) const { return (L + 2 * pad - kernel) / stride + 1; }

  void im2col(const Tensor<T>& x, Tensor<T>& col) const {
    const Index N = x.dim(0), L = x.dim(2), Lout = out_len(L);
    col.zero();
    const Index cols = N * Lout;
    for (Index ci = 0; ci < in_ch; ++ci) {
      for (Index kk = 0; kk < kernel; ++kk) {
        T* dst = col.data() + (ci * kernel + kk) * cols;
        for (Index n = 0; n < N; ++n) {
          const T* src = x.data() + (n * in_ch + ci) * L;
          for (Index t = 0; t < Lout; ++t) {
            const Index pos = t * stride + kk - pad;
            dst[n * Lout + t] = (pos >= 0 && pos < L) ? src[pos] : T(0);
          }
        }
      }
    }
  }

  Tensor<T> forward(const Tensor<T>& x, Cache<T>* cache) const {
    if (x.ndim() != 3 || x.dim(1) != in_ch)
      throw std::invalid_argument("Conv1d: expected [N, " + std::to_string(in_ch) + ", L], got " +
                                  shape_str(x.shape()));
    const Index N = x.dim(0), L = x.dim(2), Lout = out_len(L);
    Tensor<T> col({in_ch * kernel, N * Lout});
    im2col(x, col);
    Tensor<T> ymat({out_ch, N * Lout});
    as_matrix(ymat, out_ch, N * Lout).noalias() =
        as_matrix(weight.value, out_ch, in_ch * kernel) * as_matrix(col, in_ch * kernel, N * Lout);
    Tensor<T> y({N, out_ch, Lout});
    for (Index co = 0; co < out_ch; ++co) {
      const T b = bias.value[co];
      const T* src = ymat.data() + co * N * Lout;
      for (Index n = 0; n < N; ++n) {
        T* dst = y.data() + (n * out_ch + co) * Lout;
        for (Index t = 0; t < Lout; ++t) dst[t] = src[n * Lout + t] + b;
      }
    }
    if (cache) cache->push(x);
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, Cache<T>& cache) {
    const Tensor<T> x = cache.pop();
    const Index N = x.dim(0), L = x.dim(2), Lout = out_len(L);
    Tensor<T> col({in_ch * kernel, N * Lout});
    im2col(x, col);

    Tensor<T> dymat({out_ch, N * Lout});
    for (Index co = 0; co < out_ch; ++co) {
      T* dst = dymat.data() + co * N * Lout;
      T gb = T(0);
      for (Index n = 0; n < N; ++n) {
        const T* src = dy.data() + (n * out_ch + co) * Lout;
        for (Index t = 0; t < Lout; ++t) {
          dst[n * Lout + t] = src[t];
          gb += src[t];
        }
      }
      bias.grad[co] += gb;
    }

    as_matrix(weight.grad, out_ch, in_ch * kernel).noalias() +=
        as_matrix(dymat, out_ch, N * Lout) * as_matrix(col, in_ch * kernel, N * Lout).transpose();

    Tensor<T> dcol({in_ch * kernel, N * Lout});
    as_matrix(dcol, in_ch * kernel, N * Lout).noalias() =
        as_matrix(weight.value, out_ch, in_ch * kernel).transpose() *
        as_matrix(dymat, out_ch, N * Lout);

    Tensor<T> dx(x.shape());
    for (Index ci = 0; ci < in_ch; ++ci) {
      for (Index kk = 0; kk < kernel; ++kk) {
        const T* src = dcol.data() + (ci * kernel + kk) * N * Lout;
        for (Index n = 0; n < N; ++n) {
          T* dst = dx.data() + (n * in_ch + ci) * L;
          for (Index t = 0; t < Lout; ++t) {
            const Index pos = t * stride + kk - pad;
            if (pos >= 0 && pos < L) dst[pos] += src[n * Lout + t];
          }
        }
      }
    }
    return dx;
  }

  Index flops(Index N, Index L) const { return 2 * kernel * in_ch * out_ch * out_len(L) * N; }
};

// ---------------------------------------------------------------------------
// ReLU

template <class T>
struct ReLU {
  Tensor<T> forward(const Tensor<T>& x, Cache<T>* cache) const {
    Tensor<T> y(x.shape());
    for (Index i = 0; i < x.numel(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
    if (cache) cache->push(x);
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy, Cache<T>& cache) const {
    const Tensor<T> x = cache.pop();
    Tensor<T> dx(x.shape());
    for (Index i = 0; i < x.numel(); ++i) dx[i] = x[i] > T(0) ? dy[i] : T(0);
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Layer norm over the channel axis of [N, C, L] (per n, t position).

template <class T>
struct ChannelLayerNorm {
  Param<T> gamma, beta;
  Index channels = 0;
  static constexpr double kEps = 1e-5;

  void init(Index c, const std::string& name) {
    channels = c;
    gamma.name = name + ".gamma";
    beta.name = name + ".beta";
    gamma.init_shape({c});
    beta.init_shape({c});
    gamma.value.fill(T(1));
  }

  void collect(ParamRefs<T>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }

  Tensor<T> forward(const Tensor<T>& x, Cache<T>* cache) const {
    const Index N = x.dim(0), C = x.dim(1), L = x.dim(2);
    Tensor<T> y(x.shape());
    Tensor<T> xhat(x.shape());
    Tensor<T> istd({N, L});
    for (Index n = 0; n < N; ++n) {
      for (Index t = 0; t < L; ++t) {
        double mean = 0.0;
        for (Index c = 0; c < C; ++c) mean += x.at(n, c, t);
        mean /= static_cast<double>(C);
        double var = 0.0;
        for (Index c = 0; c < C; ++c) {
          const double d = x.at(n, c, t) - mean;
          var += d * d;
        }
        var /= static_cast<double>(C);
        const double inv = 1.0 / std::sqrt(var + kEps);
        istd.at(n, t) = static_cast<T>(inv);
        for (Index c = 0; c < C; ++c) {
          const T xh = static_cast<T>((x.at(n, c, t) - mean) * inv);
          xhat.at(n, c, t) = xh;
          y.at(n, c, t) = gamma.value[c] * xh + beta.value[c];
        }
      }
    }
    if (cache) {
      cache->push(std::move(xhat));
      cache->push(std::move(istd));
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, Cache<T>& cache) {
    const Tensor<T> istd = cache.pop();
    const Tensor<T> xhat = cache.pop();
    const Index N = dy.dim(0), C = dy.dim(1), L = dy.dim(2);
    Tensor<T> dx(dy.shape());
    for (Index n = 0; n < N; ++n) {
      for (Index t = 0; t < L; ++t) {
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (Index c = 0; c < C; ++c) {
          const double dxh = static_cast<double>(dy.at(n, c, t)) * gamma.value[c];
          sum_dxhat += dxh;
          sum_dxhat_xhat += dxh * xhat.at(n, c, t);
          gamma.grad[c] += dy.at(n, c, t) * xhat.at(n, c, t);
          beta.grad[c] += dy.at(n, c, t);
        }
        const double mean_dxhat = sum_dxhat / static_cast<double>(C);
        const double mean_dxhat_xhat = sum_dxhat_xhat / static_cast<double>(C);
        for (Index c = 0; c < C; ++c) {
          const double dxh = static_cast<double>(dy.at(n, c, t)) * gamma.value[c];
          dx.at(n, c, t) = static_cast<T>(istd.at(n, t) *
                                          (dxh - mean_dxhat - xhat.at(n, c, t) * mean_dxhat_xhat));
        }
      }
    }
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Layer norm over the last axis of [R, F].

template <class T>
struct LayerNorm {
  Param<T> gamma, beta;
  Index dim = 0;
  static constexpr double kEps = 1e-5;

  void init(Index f, const std::string& name) {
    dim = f;
    gamma.name = name + ".gamma";
    beta.name = name + ".beta";
    gamma.init_shape({f});
    beta.init_shape({f});
    gamma.value.fill(T(1));
  }

  void collect(ParamRefs<T>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }

  Tensor<T> forward(const Tensor<T>& x, Cache<T>* cache) const {
    const Index R = x.numel() / dim;
    Tensor<T> y(x.shape());
    Tensor<T> xhat(x.shape());
    Tensor<T> istd({R});
    for (Index r = 0; r < R; ++r) {
      const T* xr = x.data() + r * dim;
      double mean = 0.0;
      for (Index f = 0; f < dim; ++f) mean += xr[f];
      mean /= static_cast<double>(dim);
      double var = 0.0;
      for (Index f = 0; f < dim; ++f) {
        const double d = xr[f] - mean;
        var += d * d;
      }
      var /= static_cast<double>(dim);
      const double inv = 1.0 / std::sqrt(var + kEps);
      istd[r] = static_cast<T>(inv);
      for (Index f = 0; f < dim; ++f) {
        const T xh = static_cast<T>((xr[f] - mean) * inv);
        xhat[r * dim + f] = xh;
        y[r * dim + f] = gamma.value[f] * xh + beta.value[f];
      }
    }
    if (cache) {
      cache->push(std::move(xhat));
      cache->push(std::move(istd));
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, Cache<T>& cache) {
    const Tensor<T> istd = cache.pop();
    const Tensor<T> xhat = cache.pop();
    const Index R = dy.numel() / dim;
    Tensor<T> dx(dy.shape());
    for (Index r = 0; r < R; ++r) {
      double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
      for (Index f = 0; f < dim; ++f) {
        const double dxh = static_cast<double>(dy[r * dim + f]) * gamma.value[f];
        sum_dxhat += dxh;
        sum_dxhat_xhat += dxh * xhat[r * dim + f];
        gamma.grad[f] += dy[r * dim + f] * xhat[r * dim + f];
        beta.grad[f] += dy[r * dim + f];
      }
      const double mean_dxhat = sum_dxhat / static_cast<double>(dim);
      const double mean_dxhat_xhat = sum_dxhat_xhat / static_cast<double>(dim);
      for (Index f = 0; f < dim; ++f) {
        const double dxh = static_cast<double>(dy[r * dim + f]) * gamma.value[f];
        dx[r * dim + f] =
            static_cast<T>(istd[r] * (dxh - mean_dxhat - xhat[r * dim + f] * mean_dxhat_xhat));
      }
    }
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Multi-head self-attention over [N, Ttok, F] tokens.

template <class T>
struct MultiHeadSelfAttention {
  Linear<T> qkv, proj;
  Index feat = 0, heads = 0;

  void init(Index f, Index h, const std::string& name, RandomEngine& rng) {
    if (f % h != 0) throw std::invalid_argument("MHSA: feature dim not divisible by heads");
    feat = f;
    heads = h;
    qkv.init(f, 3 * f, name + ".qkv", rng);
    proj.init(f, f, name + ".proj", rng);
  }

  void collect(ParamRefs<T>& out) {
    qkv.collect(out);
    proj.collect(out);
  }

  // x flattened [N*Ttok, F]; n_tokens keeps the [N, Ttok] factorization.
  Tensor<T> forward(const Tensor<T>& x, Index n_tokens, Cache<T>* cache) const {
    const Index rows = x.numel() / feat;
    const Index N = rows / n_tokens;
    const Index dh = feat / heads;
    Tensor<T> qkv_out = qkv.forward(x, cache);
    Tensor<T> attn({N, heads, n_tokens, n_tokens});
    Tensor<T> mixed({rows, feat});
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    for (Index n = 0; n < N; ++n) {
      for (Index h = 0; h < heads; ++h) {
        using StrideT = Eigen::Stride<Eigen::Dynamic, 1>;
        const Eigen::Map<const RowMat<T>, 0, StrideT> Q(
            qkv_out.data() + n * n_tokens * 3 * feat + h * dh, n_tokens, dh, StrideT(3 * feat, 1));
        const Eigen::Map<const RowMat<T>, 0, StrideT> K(
            qkv_out.data() + n * n_tokens * 3 * feat + feat + h * dh, n_tokens, dh,
            StrideT(3 * feat, 1));
        const Eigen::Map<const RowMat<T>, 0, StrideT> V(
            qkv_out.data() + n * n_tokens * 3 * feat + 2 * feat + h * dh, n_tokens, dh,
            StrideT(3 * feat, 1));

        RowMat<T> S = Q * K.transpose() * static_cast<T>(scale);
        for (Index i = 0; i < n_tokens; ++i) {
          T mx = S(i, 0);
          for (Index j = 1; j < n_tokens; ++j) mx = std::max(mx, S(i, j));
          double sum = 0.0;
          for (Index j = 0; j < n_tokens; ++j) {
            const double e = std::exp(static_cast<double>(S(i, j) - mx));
            S(i, j) = static_cast<T>(e);
            sum += e;
          }
          for (Index j = 0; j < n_tokens; ++j) {
            S(i, j) = static_cast<T>(S(i, j) / sum);
            attn[((n * heads + h) * n_tokens + i) * n_tokens + j] = S(i, j);
          }
        }
        Eigen::Map<RowMat<T>, 0, StrideT> O(mixed.data() + n * n_tokens * feat + h * dh, n_tokens,
                                            dh, StrideT(feat, 1));
        O.noalias() = S * V;
      }
    }
    Tensor<T> y = proj.forward(mixed, cache);
    if (cache) {
      cache->push(std::move(qkv_out));
      cache->push(std::move(attn));
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, Index n_tokens, Cache<T>& cache) {
    const Tensor<T> attn = cache.pop();
    const Tensor<T> qkv_out = cache.pop();
    Tensor<T> dmixed = proj.backward(dy, cache);

    const Index rows = dy.numel() / feat;
    const Index N = rows / n_tokens;
    const Index dh = feat / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor<T> dqkv({rows, 3 * feat});

    for (Index n = 0; n < N; ++n) {
      for (Index h = 0; h < heads; ++h) {
        using StrideT = Eigen::Stride<Eigen::Dynamic, 1>;
        const Eigen::Map<const RowMat<T>, 0, StrideT> Q(
            qkv_out.data() + n * n_tokens * 3 * feat + h * dh, n_tokens, dh, StrideT(3 * feat, 1));
        const Eigen::Map<const RowMat<T>, 0, StrideT> K(
            qkv_out.data() + n * n_tokens * 3 * feat + feat + h * dh, n_tokens, dh,
            StrideT(3 * feat, 1));
        const Eigen::Map<const RowMat<T>, 0, StrideT> V(
            qkv_out.data() + n * n_tokens * 3 * feat + 2 * feat + h * dh, n_tokens, dh,
            StrideT(3 * feat, 1));
        const Eigen::Map<const RowMat<T>> A(
            attn.data() + (n * heads + h) * n_tokens * n_tokens, n_tokens, n_tokens);
        const Eigen::Map<const RowMat<T>, 0, StrideT> dO(
            dmixed.data() + n * n_tokens * feat + h * dh, n_tokens, dh, StrideT(feat, 1));

        RowMat<T> dA = dO * V.transpose();
        RowMat<T> dV = A.transpose() * dO;
        RowMat<T> dS(n_tokens, n_tokens);
        for (Index i = 0; i < n_tokens; ++i) {
          double dot = 0.0;
          for (Index j = 0; j < n_tokens; ++j) dot += static_cast<double>(A(i, j)) * dA(i, j);
          for (Index j = 0; j < n_tokens; ++j)
            dS(i, j) = static_cast<T>(A(i, j) * (dA(i, j) - static_cast<T>(dot)));
        }
        dS *= static_cast<T>(scale);
        RowMat<T> dQ = dS * K;
        RowMat<T> dK = dS.transpose() * Q;

        Eigen::Map<RowMat<T>, 0, StrideT> dQm(dqkv.data() + n * n_tokens * 3 * feat + h * dh,
                                              n_tokens, dh, StrideT(3 * feat, 1));
        Eigen::Map<RowMat<T>, 0, StrideT> dKm(dqkv.data() + n * n_tokens * 3 * feat + feat + h * dh,
                                              n_tokens, dh, StrideT(3 * feat, 1));
        Eigen::Map<RowMat<T>, 0, StrideT> dVm(
            dqkv.data() + n * n_tokens * 3 * feat + 2 * feat + h * dh, n_tokens, dh,
            StrideT(3 * feat, 1));
        dQm = dQ;
        dKm = dK;
        dVm = dV;
      }
    }
    return qkv.backward(dqkv, cache);
  }

  Index flops(Index N, Index n_tokens) const {
    const Index qkv_f = 2 * feat * 3 * feat * n_tokens * N;
    const Index scores = 2 * n_tokens * n_tokens * feat * N;  // Q K^T over all heads
    const Index mix = 2 * n_tokens * n_tokens * feat * N;     // A V
    const Index proj_f = 2 * feat * feat * n_tokens * N;
    return qkv_f + scores + mix + proj_f;
  }
};

// ---------------------------------------------------------------------------
// Shape utilities

/// [N, C, L] -> [N, L, C]
template <class T>
Tensor<T> transpose_cl(const Tensor<T>& x) {
  const Index N = x.dim(0), C = x.dim(1), L = x.dim(2);
  Tensor<T> y({N, L, C});
  for (Index n = 0; n < N; ++n)
    for (Index c = 0; c < C; ++c)
      for (Index t = 0; t < L; ++t) y.at(n, t, c) = x.at(n, c, t);
  return y;
}

/// Nearest-neighbor x2 upsample over the last axis of [N, C, L].
template <class T>
Tensor<T> upsample2(const Tensor<T>& x) {
  const Index N = x.dim(0), C = x.dim(1), L = x.dim(2);
  Tensor<T> y({N, C, 2 * L});
  for (Index i = 0; i < N * C; ++i) {
    const T* src = x.data() + i * L;
    T* dst = y.data() + i * 2 * L;
    for (Index t = 0; t < L; ++t) {
      dst[2 * t] = src[t];
      dst[2 * t + 1] = src[t];
    }
  }
  return y;
}

template <class T>
Tensor<T> upsample2_backward(const Tensor<T>& dy) {
  const Index N = dy.dim(0), C = dy.dim(1), L2 = dy.dim(2);
  Tensor<T> dx({N, C, L2 / 2});
  for (Index i = 0; i < N * C; ++i) {
    const T* src = dy.data() + i * L2;
    T* dst = dx.data() + i * (L2 / 2);
    for (Index t = 0; t < L2 / 2; ++t) dst[t] = src[2 * t] + src[2 * t + 1];
  }
  return dx;
}

template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  const Index N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), L = a.dim(2);
  if (b.dim(0) != N || b.dim(2) != L) throw std::invalid_argument("concat_channels: shape mismatch");
  Tensor<T> y({N, Ca + Cb, L});
  for (Index n = 0; n < N; ++n) {
    std::copy(a.data() + n * Ca * L, a.data() + (n + 1) * Ca * L, y.data() + n * (Ca + Cb) * L);
    std::copy(b.data() + n * Cb * L, b.data() + (n + 1) * Cb * L,
              y.data() + n * (Ca + Cb) * L + Ca * L);
  }
  return y;
}

template <class T>
void split_channels(const Tensor<T>& dy, Tensor<T>& da, Tensor<T>& db) {
  const Index N = dy.dim(0), Ca = da.dim(1), Cb = db.dim(1), L = dy.dim(2);
  for (Index n = 0; n < N; ++n) {
    std::copy(dy.data() + n * (Ca + Cb) * L, dy.data() + n * (Ca + Cb) * L + Ca * L,
              da.data() + n * Ca * L);
    std::copy(dy.data() + n * (Ca + Cb) * L + Ca * L, dy.data() + (n + 1) * (Ca + Cb) * L,
              db.data() + n * Cb * L);
  }
}

/// Fixed sinusoidal positional encoding added to [N, Ttok, F] tokens.
template <class T>
void add_positional_encoding(Tensor<T>& x) {
  const Index N = x.dim(0), Ttok = x.dim(1), F = x.dim(2);
  for (Index t = 0; t < Ttok; ++t) {
    for (Index f = 0; f < F; ++f) {
      const double rate = std::exp(-std::log(10000.0) * static_cast<double>(2 * (f / 2)) /
                                   static_cast<double>(F));
      const double angle = static_cast<double>(t) * rate;
      const double pe = (f % 2 == 0) ? std::sin(angle) : std::cos(angle);
      for (Index n = 0; n < N; ++n) x.at(n, t, f) += static_cast<T>(pe);
    }
  }
}

// ---------------------------------------------------------------------------
// AdamW with decoupled weight decay and global-norm gradient clipping.

template <class T>
struct AdamW {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double clip_norm = 1.0;  // 0 disables clipping

  std::vector<Tensor<double>> m_, v_;
  long step_ = 0;

  void init(const ParamRefs<T>& params) {
    m_.clear();
    v_.clear();
    for (const Param<T>* p : params) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
    step_ = 0;
  }

  double grad_norm(const ParamRefs<T>& params) const {
    double sq = 0.0;
    for (const Param<T>* p : params)
      for (Index i = 0; i < p->grad.numel(); ++i) {
        const double g = p->grad[i];
        sq += g * g;
      }
    return std::sqrt(sq);
  }

  void update(const ParamRefs<T>& params) {
    if (m_.size() != params.size()) init(params);
    double scale = 1.0;
    if (clip_norm > 0.0) {
      const double norm = grad_norm(params);
      if (norm > clip_norm) scale = clip_norm / norm;
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      Param<T>* p = params[pi];
      Tensor<double>& m = m_[pi];
      Tensor<double>& v = v_[pi];
      for (Index i = 0; i < p->value.numel(); ++i) {
        const double g = static_cast<double>(p->grad[i]) * scale;
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        const double w = static_cast<double>(p->value[i]);
        p->value[i] = static_cast<T>(w - lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * w));
      }
    }
  }
};

}  // namespace liteheart::nn
