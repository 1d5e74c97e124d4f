#include <catch2/catch_amalgamated.hpp>

#include "dualsub/gradcheck.hpp"

using namespace dualsub;

using T = Tensor<double>;

TEST_CASE("gradient of w^2 at w=3 matches the analytic value") {
  T w = T::from({1, 1}, {3.0});
  auto f = [&](Tape<double>* tape) { return matmul(w, w, tape); };
  double err = gradient_check({w}, f, {.eps = 1e-5, .samples_per_tensor = 1});
  CHECK(err < 1e-8);
  CHECK(w.gradv()[0] == Catch::Approx(6.0).epsilon(1e-10));
}

TEST_CASE("constant function has zero gradients and zero error") {
  T w = T::from({2, 2}, {1.0, 2.0, 3.0, 4.0});
  auto f = [&](Tape<double>* tape) {
    T c = T::scalar(5.0);
    if (tape) c.ensure_grad();
    return c;
  };
  double err = gradient_check({w}, f, {});
  CHECK(err == 0.0);
}

TEST_CASE("one-layer attention + cross entropy passes the finite-difference check") {
  Rng rng(21);
  const int t_len = 4, d = 6, v_dim = 5;
  T wq = T::zeros({d, d}), wk = T::zeros({d, d}), wv = T::zeros({d, d});
  T emb = T::zeros({v_dim, d});
  for (auto* m : {&wq, &wk, &wv, &emb})
    for (auto& x : m->vals()) x = rng.uniform(-0.5, 0.5);
  T x_in = T::zeros({t_len, d});
  for (auto& x : x_in.vals()) x = rng.uniform(-1, 1);
  std::vector<int> refs = {1, 4, 0, 2};

  auto f = [&](Tape<double>* tape) {
    T q = matmul_nt(x_in, wq, tape);
    T k = matmul_nt(x_in, wk, tape);
    T v = matmul_nt(x_in, wv, tape);
    T h = attention(q, k, v, BoolMat::causal(t_len), tape);
    T logits = matmul_nt(h, emb, tape);
    return cross_entropy(logits, refs, -1, 0.0, tape).loss;
  };
  double err = gradient_check({wq, wk, wv, emb}, f, {.eps = 1e-5, .samples_per_tensor = 8});
  CHECK(err < 1e-4);
}

TEST_CASE("every primitive matches central finite differences on random shapes") {
  Rng rng(33);
  const int m = 3, n = 5, p = 4;
  T a = T::zeros({m, n}), b = T::zeros({n, p}), c = T::zeros({m, n});
  T gain = T::zeros({n}), bias = T::zeros({n});
  T emb = T::zeros({6, n});
  for (auto* t : {&a, &b, &c, &emb})
    for (auto& x : t->vals()) x = rng.uniform(-0.8, 0.8);
  for (auto& x : gain.vals()) x = rng.uniform(0.5, 1.5);
  for (auto& x : bias.vals()) x = rng.uniform(-0.2, 0.2);
  std::vector<int> ids = {0, 5, 2};
  std::vector<int> refs = {3, 1, 2};

  auto f = [&](Tape<double>* tape) {
    T e = embedding_lookup(emb, ids, tape);          // (3, n)
    T s = add(e, scale(c, 0.7, tape), tape);         // (3, n)
    T ln = layer_norm(s, gain, bias, tape);          // (3, n)
    T mm = matmul(ln, b, tape);                      // (3, p)
    T back = matmul_nt(mm, b, tape);                 // (3, n)
    T biased = add_row_bias(back, bias, tape);       // (3, n)
    T lsm = log_softmax_rows(biased, tape);
    T left = slice_cols(lsm, 0, 2, tape);
    T right = slice_cols(lsm, 2, n, tape);
    T cat = concat_cols({left, right}, tape);
    T att = attention(cat, cat, cat, BoolMat::causal(3), tape);
    auto ce = cross_entropy(att, refs, -1, 0.1, tape);
    return add(ce.loss, sum_all(att, tape), tape);
  };
  double err = gradient_check({a, b, c, gain, bias, emb}, f,
                              {.eps = 1e-5, .samples_per_tensor = 10});
  CHECK(err < 1e-4);
}

TEST_CASE("dropout gradient matches finite differences when re-seeded") {
  Rng rng(5);
  T x = T::zeros({4, 4});
  for (auto& v : x.vals()) v = rng.uniform(-1, 1);
  auto f = [&](Tape<double>* tape) {
    Rng local(99);  // fixed seed keeps f deterministic
    T d = dropout(x, 0.25, local, tape);
    return sum_all(matmul_nt(d, d, tape), tape);
  };
  double err = gradient_check({x}, f, {.eps = 1e-5, .samples_per_tensor = 8});
  CHECK(err < 1e-4);
}
