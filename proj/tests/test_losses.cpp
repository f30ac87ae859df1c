#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "slmvc/losses.hpp"
#include "test_support.hpp"

using namespace slmvc;
using testsup::grad_check;
using testsup::rand_tensor;

namespace {
Var sc(double v) { return Var(Tensor::scalar(v)); }
}  // namespace

TEST_CASE("lsgan losses: fixed points and scalar oracle") {
  CHECK(adv_g(sc(1.0)).scalar() == 0.0);
  CHECK(adv_g(sc(0.0)).scalar() == 1.0);
  CHECK(adv_g(sc(0.3)).scalar() == doctest::Approx(0.49).epsilon(1e-12));

  CHECK(adv_d(sc(0.0), sc(1.0)).scalar() == 0.0);
  CHECK(adv_d(sc(0.5), sc(0.5)).scalar() == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(adv_d(sc(0.2), sc(0.9)).scalar() == doctest::Approx(0.05).epsilon(1e-12));
}

TEST_CASE("cross-entropy adversarial warm-up form") {
  CHECK(adv_ce(sc(0.0), true).scalar() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(adv_ce(sc(0.0), false).scalar() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(adv_ce(sc(20.0), true).scalar() < 1e-8);
  CHECK(adv_ce(sc(1.5), false).scalar() ==
        doctest::Approx(std::log1p(std::exp(1.5))).epsilon(1e-12));
  CHECK(adv_ce(sc(1.5), false).scalar() == doctest::Approx(1.70141).epsilon(1e-5));
}

TEST_CASE("classification losses: examples") {
  Tensor hot({1, 4});
  hot.at2(0, 1) = 20.0;
  for (int i : {0, 2, 3}) hot.at2(0, i) = 0.0;
  CHECK(classification_loss(Var(hot), {1}).scalar() < 1e-7);

  CHECK(classification_loss(Var(Tensor::zeros({1, 4})), {3}).scalar() ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));

  Tensor l({1, 4});
  l.at2(0, 0) = 2;
  l.at2(0, 1) = 1;
  l.at2(0, 2) = 0;
  l.at2(0, 3) = -1;
  CHECK(classification_loss(Var(l), {1}).scalar() == doctest::Approx(1.4402).epsilon(1e-4));
}

TEST_CASE("style loss: examples and symmetry") {
  Tensor a({2}), b({2});
  a[0] = 1;
  a[1] = 0;
  b[0] = 0;
  b[1] = 1;
  CHECK(sty_loss(Var(a), Var(a)).scalar() == 0.0);
  CHECK(sty_loss(Var(a), Var(b)).scalar() == doctest::Approx(1.0));
  CHECK(sty_loss(Var(b), Var(a)).scalar() == sty_loss(Var(a), Var(b)).scalar());
  CHECK_THROWS_AS(sty_loss(Var(a), Var(Tensor::zeros({3}))), std::invalid_argument);
}

TEST_CASE("normalize_f0: mean oracle, scale invariance, degenerate track") {
  Tensor f({3});
  f[0] = 2;
  f[1] = 4;
  f[2] = 6;
  Var out = normalize_f0(Var(f));
  CHECK(out.value()[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(out.value()[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(out.value()[2] == doctest::Approx(1.5).epsilon(1e-12));

  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    Tensor base = rand_tensor({12}, rng, 0.0, 300.0);
    std::uniform_real_distribution<double> cdist(0.05, 20.0);
    const double c = cdist(rng);
    Tensor scaled = base;
    for (int64_t i = 0; i < scaled.numel(); ++i) scaled[i] *= c;
    Var na = normalize_f0(Var(base));
    Var nb = normalize_f0(Var(scaled));
    for (int64_t i = 0; i < na.value().numel(); ++i)
      CHECK(std::abs(na.value()[i] - nb.value()[i]) < 1e-9);
  }

  Tensor constant_track({2});
  constant_track[0] = 5;
  constant_track[1] = 5;
  Var ones = normalize_f0(Var(constant_track));
  CHECK(ones.value()[0] == doctest::Approx(1.0));
  CHECK(ones.value()[1] == doctest::Approx(1.0));

  Var zeros = normalize_f0(Var(Tensor::zeros({4})));
  for (int64_t i = 0; i < 4; ++i) CHECK(zeros.value()[i] == 0.0);
}

TEST_CASE("f0_loss: examples") {
  Tensor a({2}), b({2});
  a[0] = 100;
  a[1] = 200;
  b[0] = 200;
  b[1] = 100;
  CHECK(f0_loss(Var(a), Var(a)).scalar() == 0.0);

  Tensor doubled = a;
  doubled[0] *= 2;
  doubled[1] *= 2;
  CHECK(f0_loss(Var(a), Var(doubled)).scalar() == doctest::Approx(0.0).epsilon(1e-12));

  CHECK(f0_loss(Var(a), Var(b)).scalar() == doctest::Approx(2.0 / 3.0).epsilon(1e-9));

  // length mismatch crops to the shorter track
  Tensor longer({3});
  longer[0] = 100;
  longer[1] = 200;
  longer[2] = 999;
  CHECK(f0_loss(Var(longer), Var(a)).scalar() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("norm_loss: examples and sign invariance") {
  std::mt19937_64 rng(7);
  Tensor x = rand_tensor({4, 6}, rng, -3, 3);
  CHECK(norm_loss(Var(x), Var(x)).scalar() == 0.0);

  Tensor negated = x;
  for (int64_t i = 0; i < negated.numel(); ++i) negated[i] = -negated[i];
  CHECK(norm_loss(Var(x), Var(negated)).scalar() == doctest::Approx(0.0).epsilon(1e-12));

  // column norms [3,1] vs [2,2] -> mean |diff| = 1
  Tensor a({2, 2}), b({2, 2});
  a.at2(0, 0) = 3;
  a.at2(1, 0) = 0;
  a.at2(0, 1) = 1;
  a.at2(1, 1) = 0;
  b.at2(0, 0) = 2;
  b.at2(1, 0) = 0;
  b.at2(0, 1) = -2;
  b.at2(1, 1) = 0;
  CHECK(norm_loss(Var(a), Var(b)).scalar() == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(norm_loss(Var(a), Var(Tensor::zeros({2, 3}))), std::invalid_argument);
}

TEST_CASE("cyc_loss: examples") {
  std::mt19937_64 rng(9);
  Tensor x = rand_tensor({3, 4}, rng);
  CHECK(cyc_loss(Var(x), Var(x)).scalar() == 0.0);

  Tensor shifted = x;
  for (int64_t i = 0; i < shifted.numel(); ++i) shifted[i] += 1.0;
  CHECK(cyc_loss(Var(x), Var(shifted)).scalar() == doctest::Approx(1.0).epsilon(1e-12));

  Tensor y = rand_tensor({3, 4}, rng);
  double oracle = 0;
  for (int64_t i = 0; i < x.numel(); ++i) oracle += std::abs(x[i] - y[i]);
  oracle /= static_cast<double>(x.numel());
  CHECK(cyc_loss(Var(x), Var(y)).scalar() == doctest::Approx(oracle).epsilon(1e-9));

  CHECK_THROWS_AS(cyc_loss(Var(x), Var(Tensor::zeros({4, 3}))), std::invalid_argument);
}

TEST_CASE("bcr penalty: identity augment, constant critic, stub oracle") {
  std::mt19937_64 rng(11);
  Tensor real = rand_tensor({2, 5}, rng);
  Tensor fake = rand_tensor({2, 5}, rng);
  auto mean_critic = [](Var x) { return mean_trailing(x, 1); };
  auto identity = [](Var x) { return x; };
  CHECK(bcr_penalty(mean_critic, Var(real), Var(fake), identity).scalar() == 0.0);

  auto const_critic = [](Var x) {
    return constant(Tensor::full({x.value().size(0)}, 0.42));
  };
  auto shift = [](Var x) { return add_scalar(x, 0.1); };
  CHECK(bcr_penalty(const_critic, Var(real), Var(fake), shift).scalar() == 0.0);

  // critic = mean of input, augment = +0.1 shift -> 2 * 0.01
  CHECK(bcr_penalty(mean_critic, Var(real), Var(fake), shift).scalar() ==
        doctest::Approx(0.02).epsilon(1e-9));
}

TEST_CASE("full objectives: weighted-sum oracle and linearity") {
  LossWeights w;
  std::map<std::string, double> terms{{"adv", 0.5}, {"advcls", 1.3863}, {"sty", 1.0}, {"f0", 0.0},
                                      {"slm", 2.0}, {"norm", 1.0},      {"cyc", 3.0}};
  CHECK(full_generator_objective(terms, w) == doctest::Approx(8.1932).epsilon(1e-4));

  std::map<std::string, double> zeros;
  for (const auto& n : generator_term_names()) zeros[n] = 0.0;
  CHECK(full_generator_objective(zeros, w) == 0.0);

  LossWeights w2 = w;
  w2.lambda_f0 *= 2;
  CHECK(full_generator_objective(terms, w2) == doctest::Approx(full_generator_objective(terms, w)));

  std::map<std::string, double> missing = terms;
  missing.erase("sty");
  CHECK_THROWS_AS(full_generator_objective(missing, w), std::invalid_argument);

  CHECK(full_discriminator_objective(0.0, 0.0, w) == 0.0);
  CHECK(full_discriminator_objective(0.5, std::log(4.0), w) ==
        doctest::Approx(0.6386).epsilon(1e-4));
  LossWeights no_cls = w;
  no_cls.lambda_cls = 0.0;
  CHECK(full_discriminator_objective(0.5, std::log(4.0), no_cls) == 0.5);

  // linearity in each term and each lambda by superposition
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int rep = 0; rep < 10; ++rep) {
    std::map<std::string, double> t1, t2, tsum;
    for (const auto& n : generator_term_names()) {
      t1[n] = u(rng);
      t2[n] = u(rng);
      tsum[n] = t1[n] + t2[n];
    }
    const double lhs = full_generator_objective(tsum, w);
    const double rhs = full_generator_objective(t1, w) + full_generator_objective(t2, w);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
  }
}

TEST_CASE("distance losses: gradient checks on small tensors") {
  std::mt19937_64 rng(17);

  auto sty_fn = [](const std::vector<Var>& v) { return sty_loss(v[0], v[1]); };
  CHECK(grad_check(sty_fn, {rand_tensor({6}, rng), rand_tensor({6}, rng)}).ok(1e-3));

  auto cyc_fn = [](const std::vector<Var>& v) { return cyc_loss(v[0], v[1]); };
  CHECK(grad_check(cyc_fn, {rand_tensor({4, 8}, rng), rand_tensor({4, 8}, rng)}).ok(1e-3));

  auto norm_fn = [](const std::vector<Var>& v) { return norm_loss(v[0], v[1]); };
  CHECK(grad_check(norm_fn, {rand_tensor({4, 8}, rng, 0.5, 3.0),
                             rand_tensor({4, 8}, rng, 0.5, 3.0)})
            .ok(1e-3));

  auto f0_fn = [](const std::vector<Var>& v) { return f0_loss(v[0], v[1]); };
  CHECK(grad_check(f0_fn, {rand_tensor({10}, rng, 50.0, 300.0),
                           rand_tensor({10}, rng, 50.0, 300.0)})
            .ok(1e-3));

  auto advg_fn = [](const std::vector<Var>& v) { return adv_g(v[0]); };
  CHECK(grad_check(advg_fn, {rand_tensor({4}, rng)}).ok(1e-3));

  auto advd_fn = [](const std::vector<Var>& v) { return adv_d(v[0], v[1]); };
  CHECK(grad_check(advd_fn, {rand_tensor({4}, rng), rand_tensor({4}, rng)}).ok(1e-3));

  auto ce_fn = [](const std::vector<Var>& v) {
    return add(adv_ce(v[0], true), adv_ce(v[0], false));
  };
  CHECK(grad_check(ce_fn, {rand_tensor({5}, rng, -2, 2)}).ok(1e-3));

  auto bcr_fn = [](const std::vector<Var>& v) {
    auto critic = [](Var x) { return mean_trailing(x, 1); };
    auto augment = [](Var x) { return roll_last(scale(x, 1.1), 1); };
    return bcr_penalty(critic, v[0], v[1], augment);
  };
  CHECK(grad_check(bcr_fn, {rand_tensor({2, 6}, rng), rand_tensor({2, 6}, rng)}).ok(1e-3));
}

TEST_CASE("loss weights validation") {
  LossWeights w;
  CHECK_NOTHROW(w.validate());
  w.lambda_f0 = -1;
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);
}
