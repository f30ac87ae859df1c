#include "slmvc/losses.hpp"

#include <cmath>

#include "slmvc/util.hpp"

namespace slmvc {

void LossWeights::validate() const {
  for (double v : {lambda_cls, lambda_advcls, lambda_sty, lambda_f0, lambda_slm, lambda_norm,
                   lambda_cyc, bcr_weight})
    if (v < 0 || !std::isfinite(v)) throw std::invalid_argument("LossWeights: weights must be nonnegative");
  if (!(bcr_scale_min <= bcr_scale_max) || bcr_scale_min <= 0)
    throw std::invalid_argument("LossWeights: bad bCR scale range");
  if (bcr_max_shift < 0) throw std::invalid_argument("LossWeights: bad bCR shift");
}

Var l1_mean(Var a, Var b) { return mean_all(abs_v(sub(a, b))); }

Var adv_g(Var fake_scores) { return mean_all(square(add_scalar(fake_scores, -1.0))); }

Var adv_d(Var fake_scores, Var real_scores) {
  return add(mean_all(square(fake_scores)), mean_all(square(add_scalar(real_scores, -1.0))));
}

Var adv_ce(Var logits, bool toward_real) {
  // BCE with logits: toward 1 -> softplus(-x), toward 0 -> softplus(x)
  return mean_all(softplus_v(toward_real ? neg(logits) : logits));
}

Var classification_loss(Var logits, const std::vector<int>& labels) {
  return cross_entropy(logits, labels);
}

Var sty_loss(Var s, Var s_hat) {
  if (!s.value().same_shape(s_hat.value()))
    throw std::invalid_argument("sty_loss: style dimension mismatch");
  return l1_mean(s, s_hat);
}

Var normalize_f0(Var f0) {
  Var x = f0;
  bool was_1d = false;
  if (x.value().ndim() == 1) {
    x = reshape(x, {1, x.value().size(0)});
    was_1d = true;
  }
  if (x.value().ndim() != 2) throw std::invalid_argument("normalize_f0: want [T] or [B,T]");
  const int64_t B = x.value().size(0), T = x.value().size(1);

  bool warned = false;
  std::vector<Var> rows;
  rows.reserve(static_cast<size_t>(B));
  for (int64_t b = 0; b < B; ++b) {
    Var row = reshape(narrow(x, 0, b, 1), {1, T});
    Tensor mask({1, T});
    int64_t voiced = 0;
    for (int64_t t = 0; t < T; ++t) {
      const bool v = row.value().at2(0, t) > 0;
      mask.at2(0, t) = v ? 1.0 : 0.0;
      voiced += v;
    }
    if (voiced == 0) {
      if (!warned) {
        warn("normalize_f0: all-zero track, returning it unchanged");
        warned = true;
      }
      rows.push_back(reshape(row, {T}));
      continue;
    }
    // voiced-frame mean stays in the graph so gradients flow through it
    Var masked_sum = sum_all(mul(row, constant(mask)));
    Var inv_mean = reciprocal(scale(masked_sum, 1.0 / static_cast<double>(voiced)));
    rows.push_back(reshape(mul_colvec(reshape(row, {1, T}), reshape(inv_mean, {1})), {T}));
  }
  Var out = stack_vars(rows);
  return was_1d ? reshape(out, {T}) : out;
}

Var f0_loss(Var f0_src, Var f0_gen) {
  Var a = f0_src, b = f0_gen;
  if (a.value().ndim() == 1) a = reshape(a, {1, a.value().size(0)});
  if (b.value().ndim() == 1) b = reshape(b, {1, b.value().size(0)});
  if (a.value().ndim() != 2 || b.value().ndim() != 2 || a.value().size(0) != b.value().size(0))
    throw std::invalid_argument("f0_loss: want matching [B,T] tracks");
  const int64_t t = std::min(a.value().size(1), b.value().size(1));
  if (a.value().size(1) != t) a = narrow(a, 1, 0, t);
  if (b.value().size(1) != t) b = narrow(b, 1, 0, t);
  return l1_mean(normalize_f0(a), normalize_f0(b));
}

Var slm_consistency_from_layers(const std::vector<Var>& reference,
                                const std::vector<Var>& generated) {
  if (reference.size() != generated.size())
    throw std::invalid_argument("slm_consistency: stack size mismatch");
  Var ref = reference[6];
  Var gen = generated[6];
  for (int l = 7; l <= 9; ++l) {
    ref = concat(ref, reference[static_cast<size_t>(l)], 1);
    gen = concat(gen, generated[static_cast<size_t>(l)], 1);
  }
  return l1_mean(ref, gen);
}

Var norm_loss(Var x, Var g) {
  Var a = x, b = g;
  if (a.value().ndim() == 2) a = reshape(a, {1, a.value().size(0), a.value().size(1)});
  if (b.value().ndim() == 2) b = reshape(b, {1, b.value().size(0), b.value().size(1)});
  if (a.value().ndim() != 3 || !a.value().same_shape(b.value()))
    throw std::invalid_argument("norm_loss: frame count mismatch between inputs");
  return l1_mean(sum_mid(abs_v(a)), sum_mid(abs_v(b)));
}

Var cyc_loss(Var x, Var x_cyc) {
  if (!x.value().same_shape(x_cyc.value()))
    throw std::invalid_argument("cyc_loss: shape mismatch");
  return l1_mean(x, x_cyc);
}

Var bcr_penalty(const std::function<Var(Var)>& critic, Var real, Var fake,
                const std::function<Var(Var)>& augment) {
  Var dr = critic(real);
  Var dra = critic(augment(real));
  Var df = critic(fake);
  Var dfa = critic(augment(fake));
  return add(mean_all(square(sub(dr, dra))), mean_all(square(sub(df, dfa))));
}

const std::vector<std::string>& generator_term_names() {
  static const std::vector<std::string> names{"adv", "advcls", "sty", "f0", "slm", "norm", "cyc"};
  return names;
}

double full_generator_objective(const std::map<std::string, double>& terms,
                                const LossWeights& w) {
  for (const auto& name : generator_term_names())
    if (!terms.count(name))
      throw std::invalid_argument("full_generator_objective: missing term '" + name + "'");
  return terms.at("adv") + w.lambda_advcls * terms.at("advcls") + w.lambda_sty * terms.at("sty") +
         w.lambda_f0 * terms.at("f0") + w.lambda_slm * terms.at("slm") +
         w.lambda_norm * terms.at("norm") + w.lambda_cyc * terms.at("cyc");
}

double full_discriminator_objective(double adv_d_term, double cls_term, const LossWeights& w) {
  return adv_d_term + w.lambda_cls * cls_term;
}

}  // namespace slmvc
