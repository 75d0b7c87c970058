#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "../support.hpp"
#include "fuslab/errors.hpp"
#include "fuslab/model.hpp"
#include "fuslab/optim.hpp"
#include "fuslab/rng.hpp"
#include "fuslab/simd/kernels.hpp"
#include "fuslab/tensor.hpp"
#include "fuslab/train.hpp"

using namespace fuslab;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-2.0, 2.0);
  return v;
}

ModelState with_params(const ModelSpec& spec, std::vector<double> params) {
  ModelState m = init_model(spec, 0);
  REQUIRE(params.size() == m.params.size());
  m.params = std::move(params);
  return m;
}

}  // namespace

TEST_CASE("derived seeds separate streams and salts") {
  CHECK(derive_seed(1, "init") == derive_seed(1, "init"));
  CHECK(derive_seed(1, "init") != derive_seed(1, "shuffle"));
  CHECK(derive_seed(1, "init", 0) != derive_seed(1, "init", 1));
  CHECK(derive_seed(1, "init") != derive_seed(2, "init"));
  Rng a(5, "x"), b(5, "x");
  for (int i = 0; i < 10; ++i) CHECK(a.next() == b.next());
}

TEST_CASE("bounded integers stay in range and cover it") {
  Rng rng(3, "idx");
  std::vector<int> seen(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto k = rng.index(7);
    REQUIRE(k < 7);
    ++seen[k];
  }
  for (int c : seen) CHECK(c > 800);
  for (int i = 0; i < 100; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("shuffle is a permutation") {
  Rng rng(9, "s");
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  rng.shuffle(v);
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) CHECK(sorted[i] == i);
}

TEST_CASE("kernel variants agree") {
  using namespace fuslab::simd;
  if (!backend_available(Backend::Avx2)) {
    MESSAGE("AVX2 unavailable; skipping equivalence");
    return;
  }
  const auto& s = kernels_for(Backend::Scalar);
  const auto& v = kernels_for(Backend::Avx2);
  Rng rng(17, "kernels");
  for (std::size_t n = 0; n < 40; ++n) {
    const auto x = random_vec(rng, n), y = random_vec(rng, n);
    const double ds = s.dot(x.data(), y.data(), n), dv = v.dot(x.data(), y.data(), n);
    CHECK(std::abs(ds - dv) <= 1e-12 * (1.0 + std::abs(ds)));

    auto ys = y, yv = y;
    s.axpy(0.7, x.data(), ys.data(), n);
    v.axpy(0.7, x.data(), yv.data(), n);
    CHECK(ys == yv);

    auto ws = random_vec(rng, n), wv = ws, ms = random_vec(rng, n), mv = ms;
    auto vs = random_vec(rng, n);
    for (auto& e : vs) e = std::abs(e);
    auto vv = vs;
    const auto g = random_vec(rng, n);
    s.adam(ws.data(), ms.data(), vs.data(), g.data(), n, 1e-3, 0.9, 0.999, 1e-8, 0.1, 0.001);
    v.adam(wv.data(), mv.data(), vv.data(), g.data(), n, 1e-3, 0.9, 0.999, 1e-8, 0.1, 0.001);
    CHECK(ws == wv);
    CHECK(ms == mv);
    CHECK(vs == vv);
  }
  for (std::size_t rows : {1, 3, 8}) {
    for (std::size_t cols : {1, 4, 5, 13, 64}) {
      const auto w = random_vec(rng, rows * cols), x = random_vec(rng, cols), b = random_vec(rng, rows);
      const auto d = random_vec(rng, rows);
      std::vector<double> ys(rows), yv(rows);
      s.gemv(w.data(), x.data(), b.data(), ys.data(), rows, cols);
      v.gemv(w.data(), x.data(), b.data(), yv.data(), rows, cols);
      for (std::size_t i = 0; i < rows; ++i) CHECK(std::abs(ys[i] - yv[i]) <= 1e-12 * (1.0 + std::abs(ys[i])));
      s.gemv(w.data(), x.data(), nullptr, ys.data(), rows, cols);
      v.gemv(w.data(), x.data(), nullptr, yv.data(), rows, cols);
      for (std::size_t i = 0; i < rows; ++i) CHECK(std::abs(ys[i] - yv[i]) <= 1e-12 * (1.0 + std::abs(ys[i])));

      auto os = random_vec(rng, cols), ov = os;
      s.gemv_t_acc(w.data(), d.data(), os.data(), rows, cols);
      v.gemv_t_acc(w.data(), d.data(), ov.data(), rows, cols);
      CHECK(os == ov);

      auto gs = random_vec(rng, rows * cols), gv = gs;
      s.ger_acc(d.data(), x.data(), gs.data(), rows, cols);
      v.ger_acc(d.data(), x.data(), gv.data(), rows, cols);
      CHECK(gs == gv);
    }
  }
}

TEST_CASE("training is equivalent across kernel backends") {
  using namespace fuslab::simd;
  if (!backend_available(Backend::Avx2)) return;
  BlobsConfig bc;
  bc.n_per_class = 30;
  const Dataset data = gen_blobs(bc);
  const ModelSpec spec{MlpSpec{64, {16}, 4}};
  TrainConfig tc;
  tc.epochs = 3;
  const Backend before = active_backend();
  set_backend(Backend::Scalar);
  const auto a = train(init_model(spec, 1), data, tc);
  set_backend(Backend::Avx2);
  const auto b = train(init_model(spec, 1), data, tc);
  set_backend(before);
  for (std::size_t i = 0; i < a.params.size(); ++i) CHECK(std::abs(a.params[i] - b.params[i]) < 1e-9);
}

TEST_CASE("tensor construction validates shape and values") {
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  CHECK_THROWS_AS(Tensor({1}, {std::numeric_limits<double>::quiet_NaN()}), NumericError);
  const Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(shape_string({2, 3}) == "[2,3]");
  CHECK(l2_norm(std::vector<double>{3.0, 4.0}) == doctest::Approx(5.0));
}

TEST_CASE("parameter count of MLP{4,[3],2} is 23") {
  const ModelSpec spec{MlpSpec{4, {3}, 2}};
  CHECK(spec.param_count() == 4 * 3 + 3 + 3 * 2 + 2);
  CHECK(init_model(spec, 0).params.size() == 23);
}

TEST_CASE("initialization is deterministic and bounded") {
  const ModelSpec spec{MlpSpec{16, {8}, 3}};
  const auto a = init_model(spec, 42), b = init_model(spec, 42), c = init_model(spec, 43);
  CHECK(a == b);
  CHECK(a.params != c.params);
  const double bound = std::sqrt(6.0 / 16.0);
  for (std::size_t i = 0; i < 16 * 8; ++i) CHECK(std::abs(a.params[i]) <= bound);
  for (std::size_t i = 16 * 8; i < 16 * 8 + 8; ++i) CHECK(a.params[i] == 0.0);
}

TEST_CASE("zero dimensions are rejected") {
  CHECK_THROWS_AS((ModelSpec{MlpSpec{4, {0}, 2}}.validate()), ConfigError);
  CHECK_THROWS_AS((ModelSpec{MlpSpec{0, {}, 2}}.validate()), ConfigError);
  CHECK_THROWS_AS((ModelSpec{EmbeddingBagSpec{10, 0, 2}}.validate()), ConfigError);
}

TEST_CASE("identity linear layer passes inputs through") {
  const auto m = with_params(ModelSpec{MlpSpec{2, {}, 2}}, {1, 0, 0, 1, 0, 0});
  const std::vector<double> x{1.0, -2.0};
  CHECK(forward(m, x) == std::vector<double>{1.0, -2.0});
}

TEST_CASE("softmax and cross-entropy basics") {
  const auto p = softmax(std::vector<double>{0.0, 0.0});
  CHECK(p[0] == 0.5);
  CHECK(p[1] == 0.5);
  const auto big = softmax(std::vector<double>{1000.0, 0.0});
  CHECK(big[0] == doctest::Approx(1.0));
  for (std::size_t c : {2, 3, 10}) {
    const std::vector<double> logits(c, 0.25);
    CHECK(loss_from_output(logits, 1.0, TaskKind::Classification) == doctest::Approx(std::log(double(c))));
  }
  CHECK(argmax(std::vector<double>{0.1, 0.7, 0.7}) == 1);
}

TEST_CASE("linear regression gradient matches the analytic value") {
  const auto m = with_params(ModelSpec{MlpSpec{1, {}, 1}}, {1.0, 0.0});
  const std::vector<double> x{2.0};
  const auto g = loss_and_grads(m, x, 0.0, TaskKind::Regression);
  CHECK(g.loss == doctest::Approx(4.0));
  CHECK(g.param_grads[0] == doctest::Approx(8.0));
  CHECK(g.param_grads[1] == doctest::Approx(4.0));
  CHECK(g.input_grad[0] == doctest::Approx(4.0));
}

TEST_CASE("embedding bag mean-pools token embeddings") {
  const ModelSpec spec{EmbeddingBagSpec{10, 4, 3}};
  const auto m = init_model(spec, 5);
  const std::vector<std::int32_t> one{7}, two{7, 7}, mixed{2, 7};
  CHECK(forward(m, one) == forward(m, two));
  CHECK(forward(m, one) != forward(m, mixed));
  CHECK_THROWS_AS(loss_and_grads(m, one, 0.0, TaskKind::Classification, true), UnsupportedInputError);
}

TEST_CASE("embedding bag parameter gradients match finite differences") {
  const ModelSpec spec{EmbeddingBagSpec{6, 3, 2}};
  auto m = init_model(spec, 8);
  Rng rng(1, "eb");
  for (auto& p : m.params) p += rng.normal(0.0, 0.1);
  const std::vector<std::int32_t> tokens{1, 4, 4, 0};
  const auto g = loss_and_grads(m, tokens, 1.0, TaskKind::Classification);
  const double h = 1e-5;
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    auto probe = m;
    probe.params[i] += h;
    const double up = loss_from_output(forward(probe, tokens), 1.0, TaskKind::Classification);
    probe.params[i] -= 2 * h;
    const double down = loss_from_output(forward(probe, tokens), 1.0, TaskKind::Classification);
    CHECK(testing::rel_error(g.param_grads[i], (up - down) / (2 * h)) < 1e-4);
  }
}

TEST_CASE("random MLP gradients match central differences") {
  for (std::uint64_t i = 0; i < 25; ++i) {
    const auto c = testing::random_grad_case(i);
    const auto r = testing::finite_difference_check(c.model, c.x, c.label, c.task);
    CHECK(r.max_param_rel < 1e-4);
    CHECK(r.max_input_rel < 1e-4);
  }
}

TEST_CASE("workspace accumulation agrees with loss_and_grads") {
  const auto c = testing::random_grad_case(7);
  GradientWorkspace ws(c.model.spec);
  std::vector<double> acc(c.model.params.size(), 0.0), in(c.x.size(), 0.0);
  const double loss = ws.accumulate(c.model.params, c.x, c.label, c.task, acc, in);
  const auto ref = loss_and_grads(c.model, c.x, c.label, c.task);
  CHECK(loss == ref.loss);
  CHECK(acc == ref.param_grads);
  CHECK(in == ref.input_grad);
}

TEST_CASE("SGD step") {
  const auto m0 = with_params(ModelSpec{MlpSpec{1, {}, 1}}, {1.0, 0.0});
  TrainConfig tc;
  tc.optimizer = Sgd{0.1};
  const std::vector<double> g{0.5, 0.0};
  const auto m1 = optimizer_step(m0, g, tc, 0);
  CHECK(m1.params[0] == doctest::Approx(0.95));
}

TEST_CASE("learning-rate milestones") {
  TrainConfig tc;
  tc.optimizer = Sgd{0.01};
  tc.epochs = 60;
  tc.lr_milestones = {30, 50};
  CHECK(effective_lr(tc, 0) == doctest::Approx(0.01));
  CHECK(effective_lr(tc, 29) == doctest::Approx(0.01));
  CHECK(effective_lr(tc, 35) == doctest::Approx(0.001));
  CHECK(effective_lr(tc, 55) == doctest::Approx(0.0001));
  tc.lr_milestones = {30, 20};
  CHECK_THROWS_AS(tc.validate(), ConfigError);
}

TEST_CASE("Adam first step moves each weight by about lr") {
  const auto m0 = with_params(ModelSpec{MlpSpec{1, {}, 1}}, {1.0, 0.0});
  TrainConfig tc;
  tc.optimizer = Adam{0.01};
  for (double g : {0.5, -3.0, 1e-3}) {
    const std::vector<double> grads{g, 0.0};
    const auto m1 = optimizer_step(m0, grads, tc, 0);
    CHECK(std::abs(m1.params[0] - 1.0) == doctest::Approx(0.01).epsilon(1e-4));
    CHECK(m1.optimizer.steps == 1);
  }
}

TEST_CASE("non-finite gradients raise a numeric error") {
  auto m = with_params(ModelSpec{MlpSpec{1, {}, 1}}, {1.0, 0.0});
  TrainConfig tc;
  const std::vector<double> g{std::numeric_limits<double>::infinity(), 0.0};
  CHECK_THROWS_AS(apply_optimizer_step(m, g, tc, 0), NumericError);
  CHECK(m.params[0] == 1.0);
}

TEST_CASE("zero epochs leave parameters unchanged") {
  BlobsConfig bc;
  bc.n_per_class = 5;
  const Dataset data = gen_blobs(bc);
  const ModelSpec spec{MlpSpec{64, {4}, 4}};
  TrainConfig tc;
  tc.epochs = 0;
  const auto m0 = init_model(spec, 2);
  CHECK(train(m0, data, tc).params == m0.params);
}

TEST_CASE("training hook sees every epoch; runs are deterministic") {
  BlobsConfig bc;
  bc.n_per_class = 20;
  const Dataset data = gen_blobs(bc);
  const ModelSpec spec{MlpSpec{64, {8}, 4}};
  TrainConfig tc;
  tc.epochs = 4;
  tc.batch_size = 7;  // 80 examples: short final batch
  tc.seed = 3;
  std::vector<std::size_t> epochs;
  const auto a = train(init_model(spec, 1), data, tc, [&](const ModelState&, std::size_t e) { epochs.push_back(e); });
  const auto b = train(init_model(spec, 1), data, tc);
  CHECK(epochs == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK(a == b);
  tc.seed = 4;
  CHECK(train(init_model(spec, 1), data, tc).params != a.params);
}

TEST_CASE("incompatible data is rejected") {
  BlobsConfig bc;
  bc.n_per_class = 2;
  const Dataset data = gen_blobs(bc);
  TrainConfig tc;
  CHECK_THROWS_AS(train(init_model(ModelSpec{MlpSpec{10, {}, 4}}, 0), data, tc), ConfigError);
  CHECK_THROWS_AS(train(init_model(ModelSpec{MlpSpec{64, {}, 4}}, 0), data.empty_like(), tc), ConfigError);
}

TEST_CASE("reference blobs training reaches high clean accuracy") {
  const auto [tr, te] = split(gen_blobs(BlobsConfig{}), 0.2, 0);
  const ModelSpec spec{MlpSpec{64, {64}, 4}};
  TrainConfig tc;
  tc.optimizer = Sgd{0.05};
  tc.epochs = 30;
  const auto m = train(init_model(spec, 0), tr, tc);
  CHECK(accuracy(m, te) >= 0.95);
}
