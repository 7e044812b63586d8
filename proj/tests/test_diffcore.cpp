// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "ovqa/checkpoint.hpp"
#include "ovqa/gradcheck.hpp"
#include "ovqa/params.hpp"
#include "ovqa/rng.hpp"
#include "ovqa/tape.hpp"

using namespace ovqa;
using namespace ovqa::diff;

namespace {

NDArray random_array(Rng& rng, std::span<const std::size_t> shape, double scale = 1.0) {
  NDArray a = NDArray::zeros(shape);
  for (std::size_t i = 0; i < a.numel(); ++i) a[i] = rng.uniform(-scale, scale);
  return a;
}

std::string read_file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("matmul basics") {
  Tape t;
  Var I = t.constant(NDArray::matrix(2, 2, {1, 0, 0, 1}));
  Var B = t.constant(NDArray::matrix(2, 2, {5, 6, 7, 8}));
  Var y = t.matmul(I, B);
  CHECK(t.value(y)[0] == 5.0);
  CHECK(t.value(y)[1] == 6.0);
  CHECK(t.value(y)[2] == 7.0);
  CHECK(t.value(y)[3] == 8.0);

  Var Z = t.constant(NDArray::matrix(2, 2));
  Var zy = t.matmul(Z, B);
  for (std::size_t i = 0; i < 4; ++i) CHECK(t.value(zy)[i] == 0.0);

  Var A = t.constant(NDArray::matrix(2, 2, {1, 2, 3, 4}));
  Var ones = t.constant(NDArray::matrix(2, 1, {1, 1}));
  Var p = t.matmul(A, ones);
  CHECK(t.value(p)[0] == 3.0);
  CHECK(t.value(p)[1] == 7.0);

  Var bad = t.constant(NDArray::matrix(3, 2));
  CHECK_THROWS_WITH_AS(t.matmul(A, bad), doctest::Contains("[2x2]"), std::invalid_argument);
}

TEST_CASE("softmax values and properties") {
  Tape t;
  Var x = t.constant(NDArray::vector({0, 0, 0}));
  Var y = t.softmax(x, 0);
  for (std::size_t i = 0; i < 3; ++i) CHECK(t.value(y)[i] == doctest::Approx(1.0 / 3).epsilon(1e-12));

  Var two = t.constant(NDArray::vector({std::log(1.0), std::log(3.0)}));
  Var y2 = t.softmax(two, 0);
  CHECK(t.value(y2)[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(t.value(y2)[1] == doctest::Approx(0.75).epsilon(1e-12));

  // shift invariance and normalization over random draws
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(8);
    NDArray raw = random_array(rng, std::array<std::size_t, 1>{n}, 10.0);
    NDArray shifted = raw;
    const double c = rng.uniform(-50.0, 50.0);
    for (std::size_t i = 0; i < n; ++i) shifted[i] += c;
    Tape tt;
    Var a = tt.softmax(tt.constant(raw), 0);
    Var b = tt.softmax(tt.constant(shifted), 0);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(tt.value(a)[i] == doctest::Approx(tt.value(b)[i]).epsilon(1e-12));
      CHECK(tt.value(a)[i] >= 0.0);
      sum += tt.value(a)[i];
    }
    CHECK(std::fabs(sum - 1.0) < 1e-9);
  }
}

TEST_CASE("softmax along matrix axes") {
  Tape t;
  Var m = t.constant(NDArray::matrix(2, 3, {0, 0, 0, 1, 2, 3}));
  Var rows = t.softmax(m, 1);
  for (std::size_t r = 0; r < 2; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 3; ++c) s += t.value(rows).at(r, c);
    CHECK(std::fabs(s - 1.0) < 1e-9);
  }
  Var cols = t.softmax(m, 0);
  for (std::size_t c = 0; c < 3; ++c) {
    double s = t.value(cols).at(0, c) + t.value(cols).at(1, c);
    CHECK(std::fabs(s - 1.0) < 1e-9);
  }
}

TEST_CASE("masked softmax zeroes masked entries exactly") {
  Tape t;
  Var x = t.constant(NDArray::vector({1.0, 100.0, 2.0, -3.0}));
  Var y = t.masked_softmax(x, {1, 0, 1, 1});
  CHECK(t.value(y)[1] == 0.0);
  double s = 0.0;
  for (std::size_t i = 0; i < 4; ++i) s += t.value(y)[i];
  CHECK(std::fabs(s - 1.0) < 1e-9);

  Var all_masked = t.masked_softmax(x, {0, 0, 0, 0});
  for (std::size_t i = 0; i < 4; ++i) CHECK(t.value(all_masked)[i] == 0.0);
}

TEST_CASE("lstm_cell zero-parameter identities") {
  const std::size_t din = 3, dh = 2;
  Tape t;
  Var W = t.constant(NDArray::matrix(din + dh, 4 * dh));
  Var b = t.constant(NDArray::zeros(std::array<std::size_t, 1>{4 * dh}));
  Var x = t.constant(NDArray::vector({0.3, -0.2, 0.9}));
  Var h0 = t.constant(NDArray::zeros(std::array<std::size_t, 1>{dh}));

  SUBCASE("zero cell state gives zero outputs") {
    Var c0 = t.constant(NDArray::zeros(std::array<std::size_t, 1>{dh}));
    auto [h, c] = lstm_cell(t, x, h0, c0, W, b);
    for (std::size_t i = 0; i < dh; ++i) {
      CHECK(t.value(h)[i] == 0.0);
      CHECK(t.value(c)[i] == 0.0);
    }
  }
  SUBCASE("cell state halves through 0.5 gates") {
    Var c0 = t.constant(NDArray::vector({0.8, -1.2}));
    auto [h, c] = lstm_cell(t, x, h0, c0, W, b);
    for (std::size_t i = 0; i < dh; ++i) {
      CHECK(t.value(c)[i] == doctest::Approx(0.5 * t.value(c0)[i]).epsilon(1e-12));
      CHECK(t.value(h)[i] ==
            doctest::Approx(0.5 * std::tanh(0.5 * t.value(c0)[i])).epsilon(1e-12));
    }
  }
}

TEST_CASE("lstm_cell matches reference recurrence on random input") {
  Rng rng(11);
  const std::size_t din = 4, dh = 3;
  for (int trial = 0; trial < 20; ++trial) {
    NDArray W = random_array(rng, std::array<std::size_t, 2>{din + dh, 4 * dh});
    NDArray b = random_array(rng, std::array<std::size_t, 1>{4 * dh});
    NDArray x = random_array(rng, std::array<std::size_t, 1>{din});
    NDArray h0 = random_array(rng, std::array<std::size_t, 1>{dh});
    NDArray c0 = random_array(rng, std::array<std::size_t, 1>{dh});

    auto ref = oracles::reference_lstm_cell(
        {x.data(), x.data() + din}, {h0.data(), h0.data() + dh}, {c0.data(), c0.data() + dh},
        {W.data(), W.data() + W.numel()}, {b.data(), b.data() + b.numel()}, dh);

    Tape t;
    auto [h, c] =
        lstm_cell(t, t.constant(x), t.constant(h0), t.constant(c0), t.constant(W), t.constant(b));
    for (std::size_t i = 0; i < dh; ++i) {
      CHECK(t.value(h)[i] == doctest::Approx(ref.h[i]).epsilon(1e-12));
      CHECK(t.value(c)[i] == doctest::Approx(ref.c[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("backward on constants and simple expressions") {
  ParamStore store;
  store.add("x", NDArray::scalar(3.0));

  SUBCASE("constant expression leaves parameter gradient zero") {
    Tape t;
    Var c = t.constant_scalar(5.0);
    Var p = t.param(store, "x");
    Var loss = t.add(c, t.scale(p, 0.0));
    t.backward(loss);
    CHECK(t.param_gradients().at("x")[0] == 0.0);
  }
  SUBCASE("d/dx x*x at 3 is 6") {
    Tape t;
    Var p = t.param(store, "x");
    Var loss = t.mul(p, p);
    t.backward(loss);
    CHECK(t.param_gradients().at("x")[0] == doctest::Approx(6.0).epsilon(1e-14));
  }
  SUBCASE("non-scalar root rejected") {
    Tape t;
    Var v = t.constant(NDArray::vector({1, 2}));
    CHECK_THROWS_AS(t.backward(v), std::invalid_argument);
  }
}

TEST_CASE("backward matches central finite differences on a composite expression") {
  Rng rng(23);
  ParamStore store;
  store.add("W", random_array(rng, std::array<std::size_t, 2>{3, 4}));
  store.add("b", random_array(rng, std::array<std::size_t, 1>{4}));
  store.add("v", random_array(rng, std::array<std::size_t, 1>{3}));

  auto build = [&](Tape& t) {
    Var W = t.param(store, "W");
    Var b = t.param(store, "b");
    Var v = t.param(store, "v");
    Var y = t.tanh(t.affine(v, W, b));
    Var s = t.softmax(y, 0);
    return t.sum(t.mul(s, y));
  };

  Tape t;
  Var loss = build(t);
  t.backward(loss);
  auto grads = t.param_gradients();

  for (auto& [name, entry] : store.entries()) {
    for (std::size_t i = 0; i < entry.value.numel(); ++i) {
      auto f = [&](double xv) {
        const double saved = entry.value[i];
        entry.value[i] = xv;
        Tape ft;
        const double out = ft.value(build(ft))[0];
        entry.value[i] = saved;
        return out;
      };
      const double numeric = oracles::central_diff(f, entry.value[i], 1e-5);
      CHECK(grads.at(name)[i] == doctest::Approx(numeric).epsilon(1e-6));
    }
  }
}

TEST_CASE("backward linearity: grad of sum equals sum of grads") {
  Rng rng(31);
  ParamStore store;
  store.add("a", random_array(rng, std::array<std::size_t, 1>{5}));
  store.add("c", random_array(rng, std::array<std::size_t, 1>{5}));

  auto loss1 = [&](Tape& t) { return t.sum(t.tanh(t.param(store, "a"))); };
  auto loss2 = [&](Tape& t) {
    return t.sum(t.mul(t.param(store, "a"), t.param(store, "c")));
  };

  Tape t1;
  Var l1 = loss1(t1);
  t1.backward(l1);
  Tape t2;
  Var l2 = loss2(t2);
  t2.backward(l2);
  Tape ts;
  Var lsum = ts.add(loss1(ts), loss2(ts));
  ts.backward(lsum);

  const auto g1 = t1.param_gradients();
  const auto g2 = t2.param_gradients();
  const auto gs = ts.param_gradients();
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(std::fabs(gs.at("a")[i] - (g1.at("a")[i] + g2.at("a")[i])) < 1e-12);
  }
}

TEST_CASE("repeated forward+backward is bit-identical") {
  Rng rng(41);
  ParamStore store;
  store.add("W", random_array(rng, std::array<std::size_t, 2>{4, 4}));
  store.add("x", random_array(rng, std::array<std::size_t, 1>{4}));

  auto run = [&]() {
    Tape t;
    Var y = t.softmax(t.affine(t.param(store, "x"), t.param(store, "W"),
                               t.constant(NDArray::zeros(std::array<std::size_t, 1>{4}))),
                      0);
    Var loss = t.sum(t.mul(y, y));
    t.backward(loss);
    auto g = t.param_gradients();
    return std::make_pair(t.value(loss)[0], g);
  };
  auto [l1, g1] = run();
  auto [l2, g2] = run();
  CHECK(std::memcmp(&l1, &l2, sizeof(double)) == 0);
  for (const auto& [name, arr] : g1) {
    CHECK(std::memcmp(arr.data(), g2.at(name).data(), arr.numel() * sizeof(double)) == 0);
  }
}

TEST_CASE("gradcheck on a quadratic loss is near machine precision") {
  ParamStore store;
  store.add("w", NDArray::vector({1.5, -2.0, 0.25}));
  auto build = [&](Tape& t) {
    Var w = t.param(store, "w");
    return t.sum(t.mul(w, w));
  };
  auto report = gradcheck(build, store, 1e-5, 1e-4);
  CHECK(report.passed);
  CHECK(report.max_rel_error < 1e-10);
  CHECK(report.scalars_checked == 3);
}

TEST_CASE("gradcheck passes for each primitive in isolation") {
  Rng rng(53);
  ParamStore store;
  store.add("m", random_array(rng, std::array<std::size_t, 2>{3, 4}));
  store.add("m2", random_array(rng, std::array<std::size_t, 2>{4, 3}));
  store.add("v", random_array(rng, std::array<std::size_t, 1>{4}));
  store.add("w", random_array(rng, std::array<std::size_t, 1>{4}));
  store.add("lstm.W", random_array(rng, std::array<std::size_t, 2>{6, 8}));
  store.add("lstm.b", random_array(rng, std::array<std::size_t, 1>{8}));

  using Build = std::function<Var(Tape&)>;
  auto m = [&](Tape& t) { return t.param(store, "m"); };
  auto v = [&](Tape& t) { return t.param(store, "v"); };
  auto w = [&](Tape& t) { return t.param(store, "w"); };
  std::vector<std::pair<const char*, Build>> cases = {
      {"add", [&](Tape& t) { return t.sum(t.add(v(t), w(t))); }},
      {"sub", [&](Tape& t) { return t.sum(t.sub(v(t), w(t))); }},
      {"mul", [&](Tape& t) { return t.sum(t.mul(v(t), w(t))); }},
      {"scale", [&](Tape& t) { return t.sum(t.scale(v(t), -2.5)); }},
      {"tanh", [&](Tape& t) { return t.sum(t.tanh(v(t))); }},
      {"sigmoid", [&](Tape& t) { return t.sum(t.sigmoid(v(t))); }},
      {"elu", [&](Tape& t) { return t.sum(t.elu(v(t))); }},
      {"matmul", [&](Tape& t) { return t.sum(t.matmul(m(t), t.param(store, "m2"))); }},
      {"matvec", [&](Tape& t) { return t.sum(t.matmul(m(t), w(t))); }},
      {"softmax", [&](Tape& t) { return t.sum(t.mul(t.softmax(v(t), 0), w(t))); }},
      {"softmax_rows", [&](Tape& t) { return t.sum(t.mul(t.softmax(m(t), 1), m(t))); }},
      {"masked_softmax",
       [&](Tape& t) { return t.sum(t.mul(t.masked_softmax(v(t), {1, 0, 1, 1}), w(t))); }},
      {"log_floor",
       [&](Tape& t) { return t.sum(t.log_floor(t.add(t.sigmoid(v(t)), t.sigmoid(w(t))), 1e-12)); }},
      {"concat", [&](Tape& t) { return t.sum(t.tanh(t.concat(v(t), w(t)))); }},
      {"hcat", [&](Tape& t) { return t.sum(t.tanh(t.hcat(m(t), m(t)))); }},
      {"stack_rows",
       [&](Tape& t) { return t.sum(t.tanh(t.stack_rows(std::array<Var, 2>{v(t), w(t)}))); }},
      {"row", [&](Tape& t) { return t.sum(t.tanh(t.row(m(t), 2))); }},
      {"slice", [&](Tape& t) { return t.sum(t.tanh(t.slice(v(t), 1, 2))); }},
      {"select_rows", [&](Tape& t) { return t.sum(t.tanh(t.select_rows(m(t), {0, 2, 2}))); }},
      {"pick", [&](Tape& t) { return t.tanh(t.pick(v(t), 2)); }},
      {"mul_rowvec", [&](Tape& t) { return t.sum(t.mul_rowvec(m(t), v(t))); }},
      {"add_rowvec", [&](Tape& t) { return t.sum(t.tanh(t.add_rowvec(m(t), v(t)))); }},
      {"mean", [&](Tape& t) { return t.mean(t.tanh(v(t))); }},
      {"affine",
       [&](Tape& t) { return t.sum(t.tanh(t.affine(w(t), t.param(store, "m2"), t.slice(v(t), 0, 3)))); }},
      {"reshape",
       [&](Tape& t) { return t.sum(t.tanh(t.reshape(m(t), std::array<std::size_t, 1>{12}))); }},
      {"lstm_cell", [&](Tape& t) {
         auto st = lstm_cell(t, t.slice(v(t), 0, 4), t.slice(w(t), 0, 2), t.slice(w(t), 2, 2),
                             t.param(store, "lstm.W"), t.param(store, "lstm.b"));
         return t.sum(t.add(st.h, st.c));
       }},
  };
  for (auto& [name, build] : cases) {
    auto report = gradcheck(build, store, 1e-5, 1e-4);
    INFO(name << ": " << report.summary());
    CHECK(report.passed);
  }
}

TEST_CASE("deliberately corrupted tanh backward fails gradcheck") {
  ParamStore store;
  store.add("w", NDArray::vector({0.7, -0.3}));
  auto build = [&](Tape& t) {
    t.set_corrupt_tanh_backward(true);
    return t.sum(t.tanh(t.param(store, "w")));
  };
  auto report = gradcheck(build, store, 1e-5, 1e-4);
  CHECK_FALSE(report.passed);
  CHECK(report.max_rel_error > 1e-4);
}

TEST_CASE("adam update identities") {
  SUBCASE("zero gradient with zero moments leaves parameters unchanged") {
    ParamStore store;
    store.add("p", NDArray::vector({1.0, 2.0}));
    std::map<std::string, NDArray> grads;
    grads.emplace("p", NDArray::zeros(std::array<std::size_t, 1>{2}));
    adam_step(store, grads, {.lr = 0.1});
    CHECK(store.value("p")[0] == 1.0);
    CHECK(store.value("p")[1] == 2.0);
    CHECK(store.step() == 1);
  }
  SUBCASE("first step moves each coordinate by about lr, regardless of scale") {
    ParamStore store;
    store.add("p", NDArray::vector({0.0, 0.0, 0.0}));
    std::map<std::string, NDArray> grads;
    grads.emplace("p", NDArray::vector({1e-3, 5.0, -2e4}));
    adam_step(store, grads, {.lr = 0.01, .eps = 1e-12});
    CHECK(std::fabs(std::fabs(store.value("p")[0]) - 0.01) < 1e-6);
    CHECK(std::fabs(std::fabs(store.value("p")[1]) - 0.01) < 1e-6);
    CHECK(std::fabs(std::fabs(store.value("p")[2]) - 0.01) < 1e-6);
    CHECK(store.value("p")[2] > 0.0);  // moves against the gradient
  }
  SUBCASE("three steps on a 1-D quadratic match the scalar reference") {
    ParamStore store;
    store.add("x", NDArray::scalar(2.0));
    oracles::RefAdam ref;
    double ref_x = 2.0;
    const AdamConfig cfg{.lr = 0.05, .beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8};
    for (int step = 0; step < 3; ++step) {
      // loss = x^2, grad = 2x
      std::map<std::string, NDArray> grads;
      grads.emplace("x", NDArray::scalar(2.0 * store.value("x")[0]));
      const double g = 2.0 * ref_x;
      adam_step(store, grads, cfg);
      ref_x = ref.step(ref_x, g, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
      CHECK(store.value("x")[0] == doctest::Approx(ref_x).epsilon(1e-14));
    }
  }
}

TEST_CASE("checkpoint round-trip is byte-exact and restores state") {
  Rng rng(67);
  ParamStore store;
  store.add("layer.W", random_array(rng, std::array<std::size_t, 2>{3, 5}));
  store.add("layer.b", random_array(rng, std::array<std::size_t, 1>{5}));
  store.add("scalar", NDArray::scalar(-0.125));
  // put some optimizer state in
  std::map<std::string, NDArray> grads;
  grads.emplace("layer.W", random_array(rng, std::array<std::size_t, 2>{3, 5}));
  adam_step(store, grads, {});

  const auto dir = std::filesystem::temp_directory_path() / "ovqa_ckpt_test";
  std::filesystem::create_directories(dir);
  const std::string p1 = (dir / "a.ckpt").string();
  const std::string p2 = (dir / "b.ckpt").string();

  save_checkpoint(p1, store, 7);
  Checkpoint loaded = load_checkpoint(p1);
  CHECK(loaded.epoch == 7);
  CHECK(loaded.store.step() == store.step());
  for (const auto& [name, e] : store.entries()) {
    const auto& le = loaded.store.entry(name);
    CHECK(std::memcmp(le.value.data(), e.value.data(), e.value.numel() * sizeof(double)) == 0);
    CHECK(std::memcmp(le.m.data(), e.m.data(), e.m.numel() * sizeof(double)) == 0);
    CHECK(std::memcmp(le.v.data(), e.v.data(), e.v.numel() * sizeof(double)) == 0);
  }
  save_checkpoint(p2, loaded.store, loaded.epoch);
  CHECK(read_file_bytes(p1) == read_file_bytes(p2));
  std::filesystem::remove_all(dir);
}

TEST_CASE("broadcast and shape ops gradcheck") {
  Rng rng(83);
  ParamStore store;
  store.add("M", random_array(rng, std::array<std::size_t, 2>{3, 4}));
  store.add("v", random_array(rng, std::array<std::size_t, 1>{4}));
  store.add("E", random_array(rng, std::array<std::size_t, 2>{6, 4}));

  auto build = [&](Tape& t) {
    Var M = t.param(store, "M");
    Var v = t.param(store, "v");
    Var E = t.param(store, "E");
    Var rows = t.select_rows(E, {1, 3, 3});
    Var mixed = t.add(t.mul_rowvec(M, v), t.add_rowvec(rows, v));
    Var joined = t.hcat(mixed, M);
    Var r1 = t.row(joined, 1);
    Var sl = t.slice(r1, 2, 4);
    Var st = t.stack_rows(std::array<Var, 2>{sl, sl});
    Var sm = t.masked_softmax(t.reshape(st, std::array<std::size_t, 1>{8}), {1, 1, 0, 1, 1, 0, 1, 1});
    Var lg = t.log_floor(t.add(sm, t.constant(NDArray::full(std::array<std::size_t, 1>{8}, 0.5))),
                         1e-12);
    Var p = t.pick(lg, 3);
    return t.add(p, t.mean(t.elu(joined)));
  };
  auto report = gradcheck(build, store, 1e-5, 1e-4);
  INFO(report.summary());
  CHECK(report.passed);
}
