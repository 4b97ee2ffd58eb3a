#pragma once

#include <functional>
#include <span>
#include <vector>

namespace combo {

/// Knobs of the combined loss: alpha mixes the cross-entropy and Dice
/// terms, beta steers the false-positive / false-negative trade-off of
/// the cross-entropy term, smooth is the add-one constant of the Dice
/// quotient.
struct ComboParams {
    double alpha = 0.5;
    double beta = 0.5;
    double smooth = 1.0;
};

struct FocalParams {
    double alpha_f = 0.25;
    double gamma = 2.0;
};

/// Loss value plus its gradient with respect to every flattened
/// prediction element.
struct LossResult {
    double value = 0.0;
    std::vector<double> grad;
};

using Span = std::span<const double>;

// All losses take flattened p (clamped probabilities) and t (one-hot
// targets) of equal length. Lower is better; Dice-type objectives enter
// negated.

LossResult cross_entropy_mean(Span p, Span t);

/// beta in [0,1]: beta weights the t*ln(p) term (false negatives),
/// (1-beta) the (1-t)*ln(1-p) term (false positives).
LossResult weighted_binary_ce(Span p, Span t, double beta);

/// (2*sum(p*t) + S) / (sum(p) + sum(t) + S) over the flattened field.
double soft_dice(Span p, Span t, double smooth);

/// When one_minus is false the loss is -soft_dice, otherwise 1 - soft_dice.
/// Gradients are identical either way.
LossResult dice_loss(Span p, Span t, double smooth, bool one_minus = false);

/// Per-class weights for the generalized Dice loss. The default follows
/// the inverse-squared-volume rule with a 1e-8 floor on the denominator.
std::vector<double> gdl_default_weights(Span t, int num_classes);

/// Requires N divisible by weights.size(); class l occupies the l-th
/// contiguous block of the flattened field.
LossResult generalized_dice_loss(Span p, Span t, std::span<const double> weights,
                                 double smooth = 1.0);

LossResult f_beta_loss(Span p, Span t, double beta_f, double smooth);

LossResult focal_loss(Span p, Span t, const FocalParams& fp);

/// alpha * WCE(beta) - (1-alpha) * soft_dice(S), flattened single-term
/// Dice. per_class switches the Dice term to a per-class sum (requires
/// num_classes dividing N).
LossResult combo_loss(Span p, Span t, const ComboParams& cp, bool per_class = false,
                      int num_classes = 1);

using LossFn = std::function<double(Span p, Span t)>;

/// Central finite differences (L(p_j+h) - L(p_j-h)) / 2h. h is shrunk per
/// element when the perturbation would leave (0,1). No re-clamping is
/// applied inside the perturbation.
std::vector<double> finite_difference_gradient(const LossFn& loss_fn, Span p, Span t, double h);

/// max_j |analytic_j - fd_j| / max(|analytic_j|, |fd_j|, floor). The floor
/// keeps central-difference roundoff noise on near-zero gradient elements
/// from registering as relative error.
double max_relative_error(std::span<const double> analytic, std::span<const double> fd,
                          double floor = 1e-6);

}  // namespace combo
