#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "slmvc/slm.hpp"
#include "test_configs.hpp"

using namespace slmvc;
using testsup::test_tone;

namespace {

SlmFeatureStack random_stack(int64_t frames, uint64_t seed) {
  std::mt19937_64 rng(seed);
  SlmFeatureStack st;
  for (int l = 0; l < kSlmLayers; ++l)
    st.layers.push_back(Tensor::uniform({frames, kSlmFeatureDim}, rng, -1, 1));
  return st;
}

}  // namespace

TEST_CASE("extract_slm: stride arithmetic, layer contract, determinism") {
  SlmBackbone backbone(42);
  Waveform w = test_tone(180.0, 2.0, 22050);
  REQUIRE(w.samples.size() == 44100);
  SlmFeatureStack st = extract_slm(backbone, w);
  CHECK(st.layers.size() == 13);
  CHECK(st.n_frames() == 100);  // 32000 resampled samples / 320
  for (const auto& l : st.layers) CHECK(l.size(1) == 768);

  SlmFeatureStack st2 = extract_slm(backbone, w);
  for (int l = 0; l < 13; ++l)
    for (int64_t i = 0; i < st.layers[l].numel(); ++i)
      CHECK(st.layers[l][i] == st2.layers[l][i]);

  // frozen: reconstruction from the same seed gives identical parameters
  CHECK(backbone.parameter_hash() == SlmBackbone(42).parameter_hash());
  CHECK(backbone.trainable().empty());

  std::vector<double> too_short(100, 0.1);
  CHECK_THROWS_AS(extract_slm(backbone, Waveform(std::move(too_short), 16000)),
                  std::invalid_argument);
}

TEST_CASE("consistency_features: selects exactly layers 6..9") {
  SlmFeatureStack st = random_stack(5, 7);
  Tensor base = consistency_features(st);
  CHECK(base.size(1) == 4 * 768);
  CHECK(base.size(0) == 5);

  SlmFeatureStack outside = st;
  outside.layers[12].at2(0, 0) += 10.0;
  outside.layers[0].at2(2, 3) -= 5.0;
  Tensor same = consistency_features(outside);
  for (int64_t i = 0; i < base.numel(); ++i) CHECK(base[i] == same[i]);

  SlmFeatureStack inside = st;
  inside.layers[7].at2(1, 1) += 1.0;
  Tensor changed = consistency_features(inside);
  double diff = 0;
  for (int64_t i = 0; i < base.numel(); ++i) diff += std::abs(base[i] - changed[i]);
  CHECK(diff > 0.0);
}

TEST_CASE("project: degenerate and selector heads") {
  SlmFeatureStack st = random_stack(3, 11);
  ProjectionHead zero{Tensor::zeros({13 * 768, 256}), Tensor::zeros({256})};
  for (int64_t i = 0; i < 256; ++i) zero.bias[i] = 0.25 * static_cast<double>(i);
  Tensor out = project(st, zero);
  REQUIRE(out.size(0) == 3);
  REQUIRE(out.size(1) == 256);
  for (int64_t t = 0; t < 3; ++t)
    for (int64_t c = 0; c < 256; ++c) CHECK(out.at2(t, c) == zero.bias[c]);

  ProjectionHead selector{Tensor::zeros({13 * 768, 256}), Tensor::zeros({256})};
  for (int64_t c = 0; c < 256; ++c) selector.weight.at2(c, c) = 1.0;
  Tensor sel = project(st, selector);
  for (int64_t t = 0; t < 3; ++t)
    for (int64_t c = 0; c < 256; ++c) CHECK(sel.at2(t, c) == doctest::Approx(st.layers[0].at2(t, c)));
}

TEST_CASE("project: scalar-loop oracle on a random 2-frame stack") {
  SlmFeatureStack st = random_stack(2, 13);
  std::mt19937_64 rng(17);
  ProjectionHead head{Tensor::randn({13 * 768, 256}, rng, 0.02), Tensor::randn({256}, rng, 0.1)};
  Tensor out = project(st, head);
  for (int64_t t = 0; t < 2; ++t)
    for (int64_t c = 0; c < 256; c += 37) {
      double acc = head.bias[c];
      for (int l = 0; l < 13; ++l)
        for (int64_t r = 0; r < 768; ++r)
          acc += st.layers[l].at2(t, r) * head.weight.at2(l * 768 + r, c);
      CHECK(std::abs(out.at2(t, c) - acc) < 1e-6);
    }
}

TEST_CASE("layer_importance: one-hot, uniform, oracle, scale invariance") {
  ProjectionHead onehot{Tensor::zeros({13 * 768, 256}), Tensor::zeros({256})};
  for (int64_t r = 0; r < 768; ++r)
    for (int64_t c = 0; c < 256; ++c) onehot.weight.at2(3 * 768 + r, c) = 0.5;
  LayerImportance li = layer_importance(onehot);
  for (int l = 0; l < 13; ++l) CHECK(li.importance[l] == doctest::Approx(l == 3 ? 1.0 : 0.0));

  std::mt19937_64 rng(19);
  ProjectionHead equal{Tensor::zeros({13 * 768, 256}), Tensor::zeros({256})};
  Tensor block = Tensor::randn({768, 256}, rng);
  for (int l = 0; l < 13; ++l)
    for (int64_t r = 0; r < 768; ++r)
      for (int64_t c = 0; c < 256; ++c) equal.weight.at2(l * 768 + r, c) = block.at2(r, c);
  LayerImportance eq = layer_importance(equal);
  for (int l = 0; l < 13; ++l) CHECK(eq.importance[l] == doctest::Approx(1.0 / 13).epsilon(1e-9));

  ProjectionHead random_head{Tensor::randn({13 * 768, 256}, rng), Tensor::zeros({256})};
  LayerImportance ri = layer_importance(random_head);
  double total = 0;
  std::array<double, 13> oracle{};
  double oracle_total = 0;
  for (int l = 0; l < 13; ++l) {
    double acc = 0;
    for (int64_t r = 0; r < 768; ++r)
      for (int64_t c = 0; c < 256; ++c) {
        const double w = random_head.weight.at2(l * 768 + r, c);
        acc += w * w;
      }
    oracle[l] = std::sqrt(acc);
    oracle_total += oracle[l];
  }
  for (int l = 0; l < 13; ++l) {
    CHECK(ri.importance[l] >= 0.0);
    CHECK(std::abs(ri.importance[l] - oracle[l] / oracle_total) < 1e-9);
    total += ri.importance[l];
  }
  CHECK(std::abs(total - 1.0) < 1e-6);

  ProjectionHead scaled = random_head;
  for (int64_t i = 0; i < scaled.weight.numel(); ++i) scaled.weight[i] *= 7.5;
  LayerImportance si = layer_importance(scaled);
  for (int l = 0; l < 13; ++l) CHECK(si.importance[l] == doctest::Approx(ri.importance[l]).epsilon(1e-12));

  ProjectionHead zero{Tensor::zeros({13 * 768, 256}), Tensor::zeros({256})};
  LayerImportance zi = layer_importance(zero);
  for (int l = 0; l < 13; ++l) CHECK(zi.importance[l] == doctest::Approx(1.0 / 13));

  LayerImportance l1 = layer_importance(random_head, ImportanceNorm::kL1);
  double l1_total = 0;
  for (int l = 0; l < 13; ++l) l1_total += l1.importance[l];
  CHECK(std::abs(l1_total - 1.0) < 1e-6);
}
