#pragma once

// Dense row-major tensors plus the reverse-mode tape.
//
// The scalar type is a template parameter: double is the test/verification
// mode, float the training mode. The choice is made once per run (see
// runconfig.hpp), never per tensor.
//
// A Tensor is a value-semantics handle onto shared storage: copies alias the
// same values and the same (lazily allocated) gradient buffer. Backward
// closures capture handles by value.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dualsub/common.hpp"

namespace dualsub {

template <typename Real>
struct TensorStorage {
  std::vector<Real> values;
  std::vector<Real> grad;  // empty means "not tracked"
};

template <typename Real>
struct Tensor {
  std::vector<int> shape;
  std::shared_ptr<TensorStorage<Real>> store;

  Tensor() = default;

  static Tensor zeros(std::vector<int> shp) {
    Tensor t;
    t.shape = std::move(shp);
    t.store = std::make_shared<TensorStorage<Real>>();
    t.store->values.assign(numel_of(t.shape), Real(0));
    return t;
  }

  static Tensor from(std::vector<int> shp, std::vector<Real> values) {
    if (numel_of(shp) != values.size())
      throw DataError("tensor: shape does not match value count");
    Tensor t;
    t.shape = std::move(shp);
    t.store = std::make_shared<TensorStorage<Real>>();
    t.store->values = std::move(values);
    return t;
  }

  static Tensor scalar(Real v) { return from({1}, {v}); }

  static size_t numel_of(const std::vector<int>& shp) {
    size_t n = 1;
    for (int d : shp) {
      if (d < 0) throw DataError("tensor: negative dimension");
      n *= size_t(d);
    }
    return n;
  }

  size_t numel() const { return store ? store->values.size() : 0; }
  bool defined() const { return bool(store); }

  int rows() const { return shape.size() == 2 ? shape[0] : (shape.size() == 1 ? 1 : 0); }
  int cols() const { return shape.size() == 2 ? shape[1] : (shape.size() == 1 ? shape[0] : 0); }

  // Accessors are const: a Tensor is a handle, and storage is shared
  // across copies (backward closures mutate grads through captured copies).
  std::vector<Real>& vals() const { return store->values; }
  std::vector<Real>& gradv() const { return store->grad; }
  Real* ptr() const { return store->values.data(); }
  Real* gptr() const { return store->grad.data(); }

  Real& at(int r, int c) const { return store->values[size_t(r) * shape[1] + c]; }

  Real value() const {
    if (numel() != 1) throw DataError("tensor: value() on non-scalar");
    return store->values[0];
  }

  bool tracked() const { return store && !store->grad.empty(); }

  void ensure_grad() const {
    if (store->grad.empty()) store->grad.assign(store->values.size(), Real(0));
  }

  void zero_grad() const {
    std::fill(store->grad.begin(), store->grad.end(), Real(0));
  }

  // Deep copy of values; grad buffer not carried over.
  Tensor clone() const {
    Tensor t;
    t.shape = shape;
    t.store = std::make_shared<TensorStorage<Real>>();
    t.store->values = store->values;
    return t;
  }

  bool same_storage(const Tensor& other) const { return store == other.store; }
};

template <typename Real>
inline void check_finite(const Tensor<Real>& t, const char* op) {
  for (Real v : t.vals()) {
    if (!std::isfinite(double(v)))
      throw NumericError(std::string("non-finite value after ") + op);
  }
}

// Records one closure per primitive application, in application order.
// That order is topological by construction, so the backward pass is a
// single reverse sweep visiting every node exactly once.
template <typename Real>
class Tape {
 public:
  void record(std::function<void()> back) { nodes_.push_back(std::move(back)); }

  void backward() {
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

  size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  std::vector<std::function<void()>> nodes_;
};

// Attention masks: allow(i, j) == 1 means query i may attend key j.
struct BoolMat {
  int rows = 0;
  int cols = 0;
  std::vector<uint8_t> allow;

  uint8_t operator()(int i, int j) const { return allow[size_t(i) * cols + j]; }

  static BoolMat all(int r, int c) {
    BoolMat m;
    m.rows = r;
    m.cols = c;
    m.allow.assign(size_t(r) * c, 1);
    return m;
  }

  // query i -> keys j <= i
  static BoolMat causal(int n) { return diag_causal(n, n); }

  // Rectangular diagonal-causal mask: query i -> keys j <= min(i, clamp).
  // clamp < 0 means no clamp. Used both for decoder self-attention and for
  // the decoder-decoder mutual attention (where the clamp implements the
  // forced-prefix cutoff).
  static BoolMat diag_causal(int r, int c, int clamp = -1) {
    BoolMat m;
    m.rows = r;
    m.cols = c;
    m.allow.assign(size_t(r) * c, 0);
    for (int i = 0; i < r; ++i) {
      int hi = clamp >= 0 ? std::min(i, clamp) : i;
      hi = std::min(hi, c - 1);
      for (int j = 0; j <= hi; ++j) m.allow[size_t(i) * c + j] = 1;
    }
    return m;
  }
};

}  // namespace dualsub
