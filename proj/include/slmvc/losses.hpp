#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "slmvc/autodiff.hpp"
#include "slmvc/networks.hpp"

namespace slmvc {

/// Objective coefficients. Defaults follow the training recipe; every
/// L1-style term is reduced as mean over elements then mean over batch so
/// the lambdas stay comparable across tensor sizes.
struct LossWeights {
  double lambda_cls = 0.1;
  double lambda_advcls = 0.5;
  double lambda_sty = 1.0;
  double lambda_f0 = 5.0;
  double lambda_slm = 1.0;
  double lambda_norm = 1.0;
  double lambda_cyc = 1.0;
  double bcr_weight = 1.0;
  double bcr_scale_min = 0.9;
  double bcr_scale_max = 1.1;
  int bcr_max_shift = 4;
  void validate() const;
};

/// Per-step named loss values for logging; total_g is checked against the
/// weighted sum of its components.
struct LossReport {
  std::map<std::string, double> terms;
  double total_g = 0.0;
  double total_d = 0.0;
};

/// Mean absolute difference over all elements (and batch).
Var l1_mean(Var a, Var b);

// least-squares adversarial pair: critic drives real->1, fake->0
Var adv_g(Var fake_scores);
Var adv_d(Var fake_scores, Var real_scores);

/// Warm-up adversarial form on pre-sigmoid logits: binary cross-entropy
/// toward 1 for real, 0 for fake (the generator uses the non-saturating
/// direction by labeling its fakes as real).
Var adv_ce(Var logits, bool toward_real);

/// Cross-entropy over roster logits; used as both the source classifier
/// loss (label = source) and its adversarial counterpart (label = target).
Var classification_loss(Var logits, const std::vector<int>& labels);

Var sty_loss(Var s, Var s_hat);

/// Divide each track by the mean of its voiced (positive) frames. All-zero
/// tracks pass through unchanged with a warning.
Var normalize_f0(Var f0);
Var f0_loss(Var f0_src, Var f0_gen);

/// L1 over layers 6..9 of two feature stacks; callers detach the reference
/// branch.
Var slm_consistency_from_layers(const std::vector<Var>& reference,
                                const std::vector<Var>& generated);

/// Mean over frames of | ||X_t||_1 - ||G_t||_1 |.
Var norm_loss(Var x, Var g);
Var cyc_loss(Var x, Var x_cyc);

/// Consistency penalty of a critic under a label-preserving augmentation.
Var bcr_penalty(const std::function<Var(Var)>& critic, Var real, Var fake,
                const std::function<Var(Var)>& augment);

/// Exact weighted sums of the named terms. Throws if a term is missing.
double full_generator_objective(const std::map<std::string, double>& terms,
                                const LossWeights& w);
double full_discriminator_objective(double adv_d_term, double cls_term, const LossWeights& w);

/// The seven generator term names expected by full_generator_objective.
const std::vector<std::string>& generator_term_names();

}  // namespace slmvc
