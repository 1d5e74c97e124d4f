#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dualsub/ops.hpp"

using namespace dualsub;

using T = Tensor<double>;

TEST_CASE("attention with a single key returns that value row") {
  T q = T::from({2, 3}, {0.3, -1.0, 2.0, 5.0, 0.0, -2.0});
  T k = T::from({1, 3}, {0.7, 0.1, -0.4});
  T v = T::from({1, 4}, {1.0, 2.0, 3.0, 4.0});
  T out = attention(q, k, v, BoolMat::all(2, 1), static_cast<Tape<double>*>(nullptr));
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 4; ++j) CHECK(out.at(i, j) == Catch::Approx(v.at(0, j)));
}

TEST_CASE("attention with identical keys averages the values") {
  T q = T::from({1, 2}, {0.9, -0.3});
  T k = T::from({3, 2}, {0.5, 1.0, 0.5, 1.0, 0.5, 1.0});
  T v = T::from({3, 2}, {0.0, 3.0, 6.0, 0.0, 3.0, 3.0});
  T out = attention(q, k, v, BoolMat::all(1, 3), static_cast<Tape<double>*>(nullptr));
  CHECK(out.at(0, 0) == Catch::Approx(3.0).margin(1e-12));
  CHECK(out.at(0, 1) == Catch::Approx(2.0).margin(1e-12));
}

TEST_CASE("attention matches an independent scalar softmax evaluation") {
  // d=1, Q=[[1]], K=[[0],[1]], V=[[0],[1]]: logits are (0, 1).
  T q = T::from({1, 1}, {1.0});
  T k = T::from({2, 1}, {0.0, 1.0});
  T v = T::from({2, 1}, {0.0, 1.0});
  T out = attention(q, k, v, BoolMat::all(1, 2), static_cast<Tape<double>*>(nullptr));
  const double w1 = std::exp(1.0) / (std::exp(0.0) + std::exp(1.0));
  CHECK(out.at(0, 0) == Catch::Approx(w1).epsilon(1e-12));
}

TEST_CASE("attention weights sum to one over unmasked keys") {
  Rng rng(11);
  T scores = T::zeros({4, 6});
  for (auto& x : scores.vals()) x = rng.uniform(-3, 3);
  BoolMat mask = BoolMat::diag_causal(4, 6);
  T w = masked_softmax_rows(scores, mask, static_cast<Tape<double>*>(nullptr));
  for (int i = 0; i < 4; ++i) {
    double s = 0;
    for (int j = 0; j < 6; ++j) {
      if (!mask(i, j)) CHECK(w.at(i, j) == 0.0);
      s += w.at(i, j);
    }
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
}

TEST_CASE("fully masked attention row is rejected") {
  T q = T::from({1, 1}, {1.0});
  T k = T::from({2, 1}, {0.0, 1.0});
  T v = T::from({2, 1}, {0.0, 1.0});
  BoolMat mask = BoolMat::all(1, 2);
  mask.allow[0] = mask.allow[1] = 0;
  CHECK_THROWS_AS(attention(q, k, v, mask, static_cast<Tape<double>*>(nullptr)),
                  NumericError);
}

TEST_CASE("attention shape mismatches are rejected") {
  T q = T::from({1, 2}, {1.0, 0.0});
  T k = T::from({2, 1}, {0.0, 1.0});
  T v = T::from({2, 1}, {0.0, 1.0});
  CHECK_THROWS_AS(attention(q, k, v, BoolMat::all(1, 2), static_cast<Tape<double>*>(nullptr)),
                  DataError);
}

TEST_CASE("softmax of equal logits is uniform") {
  T x = T::from({1, 5}, {0.7, 0.7, 0.7, 0.7, 0.7});
  T y = softmax_rows(x, static_cast<Tape<double>*>(nullptr));
  for (int j = 0; j < 5; ++j) CHECK(y.at(0, j) == Catch::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("cross entropy of a near-one-hot prediction is ~0") {
  T logits = T::from({1, 3}, {100.0, 0.0, 0.0});
  auto res = cross_entropy(logits, {0}, /*pad=*/ -1, 0.0,
                           static_cast<Tape<double>*>(nullptr));
  CHECK(res.tokens == 1);
  CHECK(std::abs(res.loss.value()) < 1e-9);
}

TEST_CASE("cross entropy of uniform logits is ln V per token") {
  T logits = T::from({2, 4}, {1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0});
  auto res = cross_entropy(logits, {2, 3}, -1, 0.0, static_cast<Tape<double>*>(nullptr));
  CHECK(res.loss.value() == Catch::Approx(2.0 * std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("linear with identity weight and zero bias is the identity") {
  T x = T::from({2, 3}, {1.0, -2.0, 0.5, 3.0, 0.0, -1.0});
  T w = T::zeros({3, 3});
  for (int i = 0; i < 3; ++i) w.at(i, i) = 1.0;
  T b = T::zeros({3});
  T y = add_row_bias(matmul_nt(x, w, static_cast<Tape<double>*>(nullptr)), b,
                     static_cast<Tape<double>*>(nullptr));
  for (size_t i = 0; i < x.numel(); ++i) CHECK(y.vals()[i] == x.vals()[i]);
}

TEST_CASE("layer norm handles a zero-variance row via epsilon") {
  T x = T::from({1, 4}, {2.0, 2.0, 2.0, 2.0});
  T g = T::from({4}, {1.0, 1.0, 1.0, 1.0});
  T b = T::from({4}, {0.5, 0.5, 0.5, 0.5});
  T y = layer_norm(x, g, b, static_cast<Tape<double>*>(nullptr));
  for (int j = 0; j < 4; ++j) CHECK(y.at(0, j) == Catch::Approx(0.5).margin(1e-9));
}

TEST_CASE("non-finite values are rejected by primitives") {
  T x = T::from({1, 2}, {1.0, 2.0});
  CHECK_THROWS_AS(scale(x, std::numeric_limits<double>::infinity(),
                        static_cast<Tape<double>*>(nullptr)),
                  NumericError);
}

TEST_CASE("embedding lookup rejects out-of-vocabulary ids") {
  T emb = T::zeros({4, 2});
  CHECK_THROWS_AS(embedding_lookup(emb, {0, 4}, static_cast<Tape<double>*>(nullptr)),
                  DataError);
  CHECK_THROWS_AS(embedding_lookup(emb, {-1}, static_cast<Tape<double>*>(nullptr)),
                  DataError);
}

TEST_CASE("slice and concat of columns round-trip") {
  Rng rng(3);
  T x = T::zeros({3, 8});
  for (auto& v : x.vals()) v = rng.uniform(-1, 1);
  auto* no_tape = static_cast<Tape<double>*>(nullptr);
  std::vector<T> parts = {slice_cols(x, 0, 3, no_tape), slice_cols(x, 3, 8, no_tape)};
  T y = concat_cols(parts, no_tape);
  REQUIRE(y.shape == x.shape);
  for (size_t i = 0; i < x.numel(); ++i) CHECK(y.vals()[i] == x.vals()[i]);
}

TEST_CASE("forward passes are deterministic") {
  Rng rng(9);
  T q = T::zeros({5, 8});
  T k = T::zeros({7, 8});
  T v = T::zeros({7, 8});
  for (auto& x : q.vals()) x = rng.uniform(-1, 1);
  for (auto& x : k.vals()) x = rng.uniform(-1, 1);
  for (auto& x : v.vals()) x = rng.uniform(-1, 1);
  auto* no_tape = static_cast<Tape<double>*>(nullptr);
  T a = attention(q, k, v, BoolMat::all(5, 7), no_tape);
  T b = attention(q, k, v, BoolMat::all(5, 7), no_tape);
  for (size_t i = 0; i < a.numel(); ++i) CHECK(a.vals()[i] == b.vals()[i]);
}

TEST_CASE("dropout with p=0 is the identity and p is validated") {
  T x = T::from({1, 3}, {1.0, 2.0, 3.0});
  Rng rng(1);
  T y = dropout(x, 0.0, rng, static_cast<Tape<double>*>(nullptr));
  CHECK(y.same_storage(x));
  CHECK_THROWS_AS(dropout(x, 1.0, rng, static_cast<Tape<double>*>(nullptr)), UsageError);
}

TEST_CASE("cross entropy rejects a PAD reference at position 0") {
  T logits = T::from({2, 3}, {0.0, 0.0, 0.0, 0.0, 0.0, 0.0});
  CHECK_THROWS_AS(cross_entropy(logits, {0, 1}, /*pad=*/0, 0.0,
                                static_cast<Tape<double>*>(nullptr)),
                  DataError);
  CHECK_THROWS_AS(cross_entropy(logits, {1, 1, 1}, 0, 0.0,
                                static_cast<Tape<double>*>(nullptr)),
                  DataError);
}
