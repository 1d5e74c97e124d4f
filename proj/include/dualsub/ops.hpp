#pragma once

// Forward/backward primitives on 2-D tensors. Every op validates shapes,
// rejects non-finite results, and (when a tape is supplied) records its
// backward closure. No broadcasting beyond per-row bias addition.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "dualsub/tensor.hpp"

namespace dualsub {

namespace detail {

template <typename Real>
inline void require_2d(const Tensor<Real>& t, const char* op) {
  if (t.shape.size() != 2) throw DataError(std::string(op) + ": expected 2-D tensor");
}

template <typename Real>
inline Tensor<Real> make_out(std::vector<int> shape, Tape<Real>* tape) {
  Tensor<Real> out = Tensor<Real>::zeros(std::move(shape));
  if (tape) out.ensure_grad();
  return out;
}

}  // namespace detail

// C = A * B, (m x k)(k x n)
template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b, Tape<Real>* tape) {
  detail::require_2d(a, "matmul");
  detail::require_2d(b, "matmul");
  const int m = a.shape[0], k = a.shape[1], n = b.shape[1];
  if (b.shape[0] != k) throw DataError("matmul: inner dimensions disagree");
  Tensor<Real> out = detail::make_out<Real>({m, n}, tape);
  const Real* pa = a.ptr();
  const Real* pb = b.ptr();
  Real* pc = out.ptr();
  for (int i = 0; i < m; ++i) {
    for (int kk = 0; kk < k; ++kk) {
      const Real av = pa[size_t(i) * k + kk];
      const Real* brow = pb + size_t(kk) * n;
      Real* crow = pc + size_t(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  check_finite(out, "matmul");
  if (tape) {
    tape->record([a, b, out, m, k, n]() {
      const Real* g = out.gptr();
      if (a.tracked()) {
        Real* ga = a.gptr();
        const Real* pb2 = b.ptr();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) {
            const Real gv = g[size_t(i) * n + j];
            for (int kk = 0; kk < k; ++kk)
              ga[size_t(i) * k + kk] += gv * pb2[size_t(kk) * n + j];
          }
      }
      if (b.tracked()) {
        Real* gb = b.gptr();
        const Real* pa2 = a.ptr();
        for (int i = 0; i < m; ++i)
          for (int kk = 0; kk < k; ++kk) {
            const Real av = pa2[size_t(i) * k + kk];
            const Real* grow = g + size_t(i) * n;
            Real* gbrow = gb + size_t(kk) * n;
            for (int j = 0; j < n; ++j) gbrow[j] += av * grow[j];
          }
      }
    });
  }
  return out;
}

// C = A * B^T, (m x k)(n x k) -> (m x n). Linear layers store weights
// (out x in), so this is the workhorse.
template <typename Real>
Tensor<Real> matmul_nt(const Tensor<Real>& a, const Tensor<Real>& b, Tape<Real>* tape) {
  detail::require_2d(a, "matmul_nt");
  detail::require_2d(b, "matmul_nt");
  const int m = a.shape[0], k = a.shape[1], n = b.shape[0];
  if (b.shape[1] != k) throw DataError("matmul_nt: inner dimensions disagree");
  Tensor<Real> out = detail::make_out<Real>({m, n}, tape);
  const Real* pa = a.ptr();
  const Real* pb = b.ptr();
  Real* pc = out.ptr();
  for (int i = 0; i < m; ++i) {
    const Real* arow = pa + size_t(i) * k;
    Real* crow = pc + size_t(i) * n;
    for (int j = 0; j < n; ++j) {
      const Real* brow = pb + size_t(j) * k;
      Real acc = 0;
      for (int kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      crow[j] = acc;
    }
  }
  check_finite(out, "matmul_nt");
  if (tape) {
    tape->record([a, b, out, m, k, n]() {
      const Real* g = out.gptr();
      if (a.tracked()) {
        Real* ga = a.gptr();
        const Real* pb2 = b.ptr();
        for (int i = 0; i < m; ++i) {
          Real* garow = ga + size_t(i) * k;
          const Real* grow = g + size_t(i) * n;
          for (int j = 0; j < n; ++j) {
            const Real gv = grow[j];
            const Real* brow = pb2 + size_t(j) * k;
            for (int kk = 0; kk < k; ++kk) garow[kk] += gv * brow[kk];
          }
        }
      }
      if (b.tracked()) {
        Real* gb = b.gptr();
        const Real* pa2 = a.ptr();
        for (int i = 0; i < m; ++i) {
          const Real* arow = pa2 + size_t(i) * k;
          const Real* grow = g + size_t(i) * n;
          for (int j = 0; j < n; ++j) {
            const Real gv = grow[j];
            Real* gbrow = gb + size_t(j) * k;
            for (int kk = 0; kk < k; ++kk) gbrow[kk] += gv * arow[kk];
          }
        }
      }
    });
  }
  return out;
}

// Elementwise sum; also the residual connection.
template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b, Tape<Real>* tape) {
  if (a.shape != b.shape) throw DataError("add: shape mismatch");
  Tensor<Real> out = detail::make_out<Real>(a.shape, tape);
  const size_t n = out.numel();
  for (size_t i = 0; i < n; ++i) out.ptr()[i] = a.ptr()[i] + b.ptr()[i];
  check_finite(out, "add");
  if (tape) {
    tape->record([a, b, out, n]() {
      const Real* g = out.gptr();
      if (a.tracked()) {
        Real* ga = a.gptr();
        for (size_t i = 0; i < n; ++i) ga[i] += g[i];
      }
      if (b.tracked()) {
        Real* gb = b.gptr();
        for (size_t i = 0; i < n; ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> residual_add(const Tensor<Real>& a, const Tensor<Real>& b, Tape<Real>* tape) {
  return add(a, b, tape);
}

// x (m x n) + bias (n), the one permitted broadcast.
template <typename Real>
Tensor<Real> add_row_bias(const Tensor<Real>& x, const Tensor<Real>& bias, Tape<Real>* tape) {
  detail::require_2d(x, "add_row_bias");
  if (bias.shape.size() != 1 || bias.shape[0] != x.shape[1])
    throw DataError("add_row_bias: bias size mismatch");
  const int m = x.shape[0], n = x.shape[1];
  Tensor<Real> out = detail::make_out<Real>({m, n}, tape);
  const Real* px = x.ptr();
  const Real* pb = bias.ptr();
  Real* po = out.ptr();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) po[size_t(i) * n + j] = px[size_t(i) * n + j] + pb[j];
  check_finite(out, "add_row_bias");
  if (tape) {
    tape->record([x, bias, out, m, n]() {
      const Real* g = out.gptr();
      if (x.tracked()) {
        Real* gx = x.gptr();
        for (size_t i = 0; i < size_t(m) * n; ++i) gx[i] += g[i];
      }
      if (bias.tracked()) {
        Real* gb = bias.gptr();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) gb[j] += g[size_t(i) * n + j];
      }
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& x, Real c, Tape<Real>* tape) {
  Tensor<Real> out = detail::make_out<Real>(x.shape, tape);
  const size_t n = out.numel();
  for (size_t i = 0; i < n; ++i) out.ptr()[i] = x.ptr()[i] * c;
  check_finite(out, "scale");
  if (tape) {
    tape->record([x, out, c, n]() {
      if (!x.tracked()) return;
      const Real* g = out.gptr();
      Real* gx = x.gptr();
      for (size_t i = 0; i < n; ++i) gx[i] += g[i] * c;
    });
  }
  return out;
}

// Rows of `emb` gathered by token id.
template <typename Real>
Tensor<Real> embedding_lookup(const Tensor<Real>& emb, const std::vector<int>& ids,
                              Tape<Real>* tape) {
  detail::require_2d(emb, "embedding_lookup");
  const int v = emb.shape[0], d = emb.shape[1];
  const int t = int(ids.size());
  for (int id : ids)
    if (id < 0 || id >= v) throw DataError("embedding_lookup: out-of-vocabulary id");
  Tensor<Real> out = detail::make_out<Real>({t, d}, tape);
  const Real* pe = emb.ptr();
  Real* po = out.ptr();
  for (int i = 0; i < t; ++i)
    std::copy(pe + size_t(ids[i]) * d, pe + size_t(ids[i]) * d + d, po + size_t(i) * d);
  check_finite(out, "embedding_lookup");
  if (tape) {
    tape->record([emb, out, ids, d, t]() {
      if (!emb.tracked()) return;
      const Real* g = out.gptr();
      Real* ge = emb.gptr();
      for (int i = 0; i < t; ++i) {
        Real* grow = ge + size_t(ids[i]) * d;
        const Real* orow = g + size_t(i) * d;
        for (int j = 0; j < d; ++j) grow[j] += orow[j];
      }
    });
  }
  return out;
}

inline constexpr double kLayerNormEps = 1e-5;

// Per-row layer norm with affine gain/bias.
template <typename Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gain,
                        const Tensor<Real>& bias, Tape<Real>* tape) {
  detail::require_2d(x, "layer_norm");
  const int m = x.shape[0], n = x.shape[1];
  if (gain.shape.size() != 1 || gain.shape[0] != n || bias.shape != gain.shape)
    throw DataError("layer_norm: gain/bias size mismatch");
  Tensor<Real> out = detail::make_out<Real>({m, n}, tape);
  // xhat and inv-std are kept for the backward pass.
  auto xhat = std::make_shared<std::vector<Real>>(size_t(m) * n);
  auto istd = std::make_shared<std::vector<Real>>(m);
  const Real* px = x.ptr();
  const Real* pg = gain.ptr();
  const Real* pb = bias.ptr();
  Real* po = out.ptr();
  for (int i = 0; i < m; ++i) {
    const Real* row = px + size_t(i) * n;
    Real mean = 0;
    for (int j = 0; j < n; ++j) mean += row[j];
    mean /= Real(n);
    Real var = 0;
    for (int j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= Real(n);
    const Real is = Real(1) / std::sqrt(var + Real(kLayerNormEps));
    (*istd)[i] = is;
    for (int j = 0; j < n; ++j) {
      const Real xh = (row[j] - mean) * is;
      (*xhat)[size_t(i) * n + j] = xh;
      po[size_t(i) * n + j] = pg[j] * xh + pb[j];
    }
  }
  check_finite(out, "layer_norm");
  if (tape) {
    tape->record([x, gain, bias, out, xhat, istd, m, n]() {
      const Real* g = out.gptr();
      const Real* pg2 = gain.ptr();
      if (gain.tracked()) {
        Real* gg = gain.gptr();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j)
            gg[j] += g[size_t(i) * n + j] * (*xhat)[size_t(i) * n + j];
      }
      if (bias.tracked()) {
        Real* gb = bias.gptr();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) gb[j] += g[size_t(i) * n + j];
      }
      if (x.tracked()) {
        Real* gx = x.gptr();
        for (int i = 0; i < m; ++i) {
          const Real* grow = g + size_t(i) * n;
          const Real* xh = xhat->data() + size_t(i) * n;
          Real mean_dxhat = 0, mean_dxhat_xhat = 0;
          for (int j = 0; j < n; ++j) {
            const Real dxh = grow[j] * pg2[j];
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xh[j];
          }
          mean_dxhat /= Real(n);
          mean_dxhat_xhat /= Real(n);
          const Real is = (*istd)[i];
          for (int j = 0; j < n; ++j) {
            const Real dxh = grow[j] * pg2[j];
            gx[size_t(i) * n + j] += is * (dxh - mean_dxhat - xh[j] * mean_dxhat_xhat);
          }
        }
      }
    });
  }
  return out;
}

// Row softmax over the unmasked positions; masked positions get weight 0.
// A row with no allowed key is a contract violation.
template <typename Real>
Tensor<Real> masked_softmax_rows(const Tensor<Real>& x, const BoolMat& mask, Tape<Real>* tape) {
  detail::require_2d(x, "softmax");
  const int m = x.shape[0], n = x.shape[1];
  if (mask.rows != m || mask.cols != n) throw DataError("softmax: mask shape mismatch");
  Tensor<Real> out = detail::make_out<Real>({m, n}, tape);
  const Real* px = x.ptr();
  Real* po = out.ptr();
  for (int i = 0; i < m; ++i) {
    const Real* row = px + size_t(i) * n;
    Real mx = -std::numeric_limits<Real>::infinity();
    for (int j = 0; j < n; ++j)
      if (mask(i, j) && row[j] > mx) mx = row[j];
    if (mx == -std::numeric_limits<Real>::infinity())
      throw NumericError("degenerate attention row");
    Real denom = 0;
    for (int j = 0; j < n; ++j)
      if (mask(i, j)) denom += std::exp(row[j] - mx);
    for (int j = 0; j < n; ++j)
      po[size_t(i) * n + j] = mask(i, j) ? std::exp(row[j] - mx) / denom : Real(0);
  }
  check_finite(out, "softmax");
  if (tape) {
    tape->record([x, out, m, n]() {
      if (!x.tracked()) return;
      const Real* g = out.gptr();
      const Real* a = out.ptr();
      Real* gx = x.gptr();
      for (int i = 0; i < m; ++i) {
        const Real* arow = a + size_t(i) * n;
        const Real* grow = g + size_t(i) * n;
        Real dot = 0;
        for (int j = 0; j < n; ++j) dot += grow[j] * arow[j];
        for (int j = 0; j < n; ++j)
          gx[size_t(i) * n + j] += arow[j] * (grow[j] - dot);
      }
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> softmax_rows(const Tensor<Real>& x, Tape<Real>* tape) {
  return masked_softmax_rows(x, BoolMat::all(x.shape[0], x.shape[1]), tape);
}

template <typename Real>
Tensor<Real> log_softmax_rows(const Tensor<Real>& x, Tape<Real>* tape) {
  detail::require_2d(x, "log_softmax");
  const int m = x.shape[0], n = x.shape[1];
  Tensor<Real> out = detail::make_out<Real>({m, n}, tape);
  const Real* px = x.ptr();
  Real* po = out.ptr();
  for (int i = 0; i < m; ++i) {
    const Real* row = px + size_t(i) * n;
    Real mx = row[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    Real denom = 0;
    for (int j = 0; j < n; ++j) denom += std::exp(row[j] - mx);
    const Real lse = mx + std::log(denom);
    for (int j = 0; j < n; ++j) po[size_t(i) * n + j] = row[j] - lse;
  }
  check_finite(out, "log_softmax");
  if (tape) {
    tape->record([x, out, m, n]() {
      if (!x.tracked()) return;
      const Real* g = out.gptr();
      const Real* y = out.ptr();
      Real* gx = x.gptr();
      for (int i = 0; i < m; ++i) {
        const Real* grow = g + size_t(i) * n;
        const Real* yrow = y + size_t(i) * n;
        Real gsum = 0;
        for (int j = 0; j < n; ++j) gsum += grow[j];
        for (int j = 0; j < n; ++j)
          gx[size_t(i) * n + j] += grow[j] - std::exp(yrow[j]) * gsum;
      }
    });
  }
  return out;
}

template <typename Real>
struct CrossEntropyResult {
  Tensor<Real> loss;  // scalar: summed NLL over counted positions
  int tokens = 0;     // positions that contributed
};

// Sum of negative log-probabilities of the reference tokens. Positions with
// ref == pad_id, and logits rows beyond the reference length, contribute
// nothing. Optional label smoothing mixes in the uniform distribution.
template <typename Real>
CrossEntropyResult<Real> cross_entropy(const Tensor<Real>& logits, const std::vector<int>& refs,
                                       int pad_id, Real label_smoothing, Tape<Real>* tape) {
  detail::require_2d(logits, "cross_entropy");
  const int t = logits.shape[0], v = logits.shape[1];
  if (int(refs.size()) > t) throw DataError("cross_entropy: reference longer than logits");
  if (!refs.empty() && refs[0] == pad_id)
    throw DataError("cross_entropy: reference starts with PAD");
  for (int id : refs)
    if (id < 0 || id >= v) throw DataError("cross_entropy: reference id out of range");

  // Stable log-softmax per counted row, plus softmax cached for backward.
  auto probs = std::make_shared<std::vector<Real>>(size_t(t) * v, Real(0));
  auto counted = std::make_shared<std::vector<uint8_t>>(t, 0);
  const Real* pl = logits.ptr();
  Real total = 0;
  int tokens = 0;
  for (int i = 0; i < int(refs.size()); ++i) {
    if (refs[i] == pad_id) continue;
    const Real* row = pl + size_t(i) * v;
    Real mx = row[0];
    for (int j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    Real denom = 0;
    for (int j = 0; j < v; ++j) denom += std::exp(row[j] - mx);
    const Real lse = mx + std::log(denom);
    Real row_nll = -(row[refs[i]] - lse);
    if (label_smoothing > Real(0)) {
      Real sum_logp = 0;
      for (int j = 0; j < v; ++j) sum_logp += row[j] - lse;
      row_nll = (Real(1) - label_smoothing) * row_nll +
                label_smoothing / Real(v) * (-sum_logp);
    }
    for (int j = 0; j < v; ++j)
      (*probs)[size_t(i) * v + j] = std::exp(row[j] - lse);
    (*counted)[i] = 1;
    total += row_nll;
    ++tokens;
  }

  CrossEntropyResult<Real> res;
  res.loss = detail::make_out<Real>({1}, tape);
  res.loss.vals()[0] = total;
  res.tokens = tokens;
  check_finite(res.loss, "cross_entropy");
  if (tape) {
    Tensor<Real> loss = res.loss;
    Real ls = label_smoothing;
    tape->record([logits, loss, refs, probs, counted, t, v, ls]() {
      if (!logits.tracked()) return;
      const Real seed = loss.gradv()[0];
      Real* gl = logits.gptr();
      for (int i = 0; i < t && i < int(refs.size()); ++i) {
        if (!(*counted)[i]) continue;
        const Real* prow = probs->data() + size_t(i) * v;
        Real* grow = gl + size_t(i) * v;
        for (int j = 0; j < v; ++j) {
          Real target = (j == refs[i]) ? (Real(1) - ls) : Real(0);
          target += ls / Real(v);
          grow[j] += seed * (prow[j] - target);
        }
      }
    });
  }
  return res;
}

// Inverted dropout; a training-only primitive.
template <typename Real>
Tensor<Real> dropout(const Tensor<Real>& x, double p, Rng& rng, Tape<Real>* tape) {
  if (p < 0 || p >= 1) throw UsageError("dropout: p must be in [0, 1)");
  if (p == 0) return x;
  Tensor<Real> out = detail::make_out<Real>(x.shape, tape);
  const size_t n = out.numel();
  auto keep = std::make_shared<std::vector<uint8_t>>(n);
  const Real inv = Real(1.0 / (1.0 - p));
  for (size_t i = 0; i < n; ++i) {
    const bool k = rng.uniform() >= p;
    (*keep)[i] = k;
    out.ptr()[i] = k ? x.ptr()[i] * inv : Real(0);
  }
  check_finite(out, "dropout");
  if (tape) {
    tape->record([x, out, keep, n, inv]() {
      if (!x.tracked()) return;
      const Real* g = out.gptr();
      Real* gx = x.gptr();
      for (size_t i = 0; i < n; ++i)
        if ((*keep)[i]) gx[i] += g[i] * inv;
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> slice_cols(const Tensor<Real>& x, int c0, int c1, Tape<Real>* tape) {
  detail::require_2d(x, "slice_cols");
  const int m = x.shape[0], n = x.shape[1];
  if (c0 < 0 || c1 > n || c0 >= c1) throw DataError("slice_cols: bad column range");
  const int w = c1 - c0;
  Tensor<Real> out = detail::make_out<Real>({m, w}, tape);
  const Real* px = x.ptr();
  Real* po = out.ptr();
  for (int i = 0; i < m; ++i)
    std::copy(px + size_t(i) * n + c0, px + size_t(i) * n + c1, po + size_t(i) * w);
  if (tape) {
    tape->record([x, out, c0, m, n, w]() {
      if (!x.tracked()) return;
      const Real* g = out.gptr();
      Real* gx = x.gptr();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < w; ++j) gx[size_t(i) * n + c0 + j] += g[size_t(i) * w + j];
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> concat_cols(const std::vector<Tensor<Real>>& parts, Tape<Real>* tape) {
  if (parts.empty()) throw DataError("concat_cols: no parts");
  const int m = parts[0].shape[0];
  int total = 0;
  for (const auto& p : parts) {
    detail::require_2d(p, "concat_cols");
    if (p.shape[0] != m) throw DataError("concat_cols: row count mismatch");
    total += p.shape[1];
  }
  Tensor<Real> out = detail::make_out<Real>({m, total}, tape);
  Real* po = out.ptr();
  int off = 0;
  for (const auto& p : parts) {
    const int w = p.shape[1];
    const Real* pp = p.ptr();
    for (int i = 0; i < m; ++i)
      std::copy(pp + size_t(i) * w, pp + size_t(i) * w + w, po + size_t(i) * total + off);
    off += w;
  }
  if (tape) {
    tape->record([parts, out, m, total]() {
      const Real* g = out.gptr();
      int off2 = 0;
      for (const auto& p : parts) {
        const int w = p.shape[1];
        if (p.tracked()) {
          Real* gp = p.gptr();
          for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j)
              gp[size_t(i) * w + j] += g[size_t(i) * total + off2 + j];
        }
        off2 += w;
      }
    });
  }
  return out;
}

template <typename Real>
Tensor<Real> sum_all(const Tensor<Real>& x, Tape<Real>* tape) {
  Tensor<Real> out = detail::make_out<Real>({1}, tape);
  Real acc = 0;
  for (Real v : x.vals()) acc += v;
  out.vals()[0] = acc;
  check_finite(out, "sum_all");
  if (tape) {
    tape->record([x, out]() {
      if (!x.tracked()) return;
      const Real g = out.gradv()[0];
      for (Real& gv : x.gradv()) gv += g;
    });
  }
  return out;
}

// Scaled dot-product attention: softmax(Q K^T / sqrt(d) + mask) V.
// Composite of the primitives above, so it differentiates for free.
template <typename Real>
Tensor<Real> attention(const Tensor<Real>& q, const Tensor<Real>& k, const Tensor<Real>& v,
                       const BoolMat& mask, Tape<Real>* tape) {
  detail::require_2d(q, "attention");
  detail::require_2d(k, "attention");
  detail::require_2d(v, "attention");
  const int d = q.shape[1];
  if (d <= 0 || k.shape[1] != d) throw DataError("attention: query/key width mismatch");
  if (k.shape[0] != v.shape[0]) throw DataError("attention: key/value row mismatch");
  if (mask.rows != q.shape[0] || mask.cols != k.shape[0])
    throw DataError("attention: mask shape mismatch");
  Tensor<Real> scores = matmul_nt(q, k, tape);
  scores = scale(scores, Real(1.0 / std::sqrt(double(d))), tape);
  Tensor<Real> weights = masked_softmax_rows(scores, mask, tape);
  return matmul(weights, v, tape);
}

}  // namespace dualsub
