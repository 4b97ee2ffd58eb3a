#include "combo/train.hpp"

#include <cmath>
#include <stdexcept>

#include "combo/infer.hpp"
#include "combo/metrics.hpp"
#include "combo/rng.hpp"

namespace combo {

LossKind parse_loss_kind(const std::string& name) {
    if (name == "ce") return LossKind::CE;
    if (name == "wce") return LossKind::WCE;
    if (name == "dice") return LossKind::Dice;
    if (name == "gdl") return LossKind::GDL;
    if (name == "fbeta") return LossKind::FBeta;
    if (name == "focal") return LossKind::Focal;
    if (name == "combo") return LossKind::Combo;
    throw std::invalid_argument("unknown loss: " + name);
}

std::string loss_kind_name(LossKind kind) {
    switch (kind) {
        case LossKind::CE: return "ce";
        case LossKind::WCE: return "wce";
        case LossKind::Dice: return "dice";
        case LossKind::GDL: return "gdl";
        case LossKind::FBeta: return "fbeta";
        case LossKind::Focal: return "focal";
        case LossKind::Combo: return "combo";
    }
    return "?";
}

LossResult eval_loss(const LossSpec& spec, Span p, Span t, int num_classes) {
    switch (spec.kind) {
        case LossKind::CE: return cross_entropy_mean(p, t);
        case LossKind::WCE: return weighted_binary_ce(p, t, spec.combo.beta);
        case LossKind::Dice: return dice_loss(p, t, spec.combo.smooth, spec.dice_one_minus);
        case LossKind::GDL: {
            const auto w = gdl_default_weights(t, num_classes);
            return generalized_dice_loss(p, t, w, spec.combo.smooth);
        }
        case LossKind::FBeta: return f_beta_loss(p, t, spec.beta_f, spec.combo.smooth);
        case LossKind::Focal: return focal_loss(p, t, spec.focal);
        case LossKind::Combo:
            return combo_loss(p, t, spec.combo, spec.combo_per_class, num_classes);
    }
    throw std::logic_error("unreachable");
}

double mean_dice(ParamSet& params, const NetworkConfig& cfg,
                 const std::vector<TrainCase>& cases, double threshold) {
    double sum = 0.0;
    int count = 0;
    for (const auto& c : cases) {
        const Dims3 d = c.image.dims();
        const OneHotMask pred =
            predict_volume(params, cfg, c.image, {d.w, d.h, d.d}, {d.w, d.h, d.d}, threshold);
        for (const auto& cc : confusion(pred, c.mask)) {
            sum += dice_score(cc);
            ++count;
        }
    }
    return count ? sum / count : 0.0;
}

TrainResult train(const std::vector<TrainCase>& train_cases,
                  const std::vector<TrainCase>& val_cases, const TrainOptions& opts) {
    if (train_cases.empty()) throw std::invalid_argument("train: no training cases");
    const int mult = opts.net.dim_multiple();
    for (int a = 0; a < 3; ++a)
        if (opts.subvolume[a] % mult)
            throw std::invalid_argument("sub-volume dims not divisible by 2^(levels-1)");

    TrainResult res;
    res.params = glorot_init(opts.net);
    AdadeltaState state = make_adadelta_state(res.params, opts.rho, opts.eps, opts.lr);
    Rng rng(opts.seed, 4);

    res.best_params = res.params;
    if (opts.eval_every > 0 && !val_cases.empty())
        res.best_val_dice = mean_dice(res.params, opts.net, val_cases, opts.threshold);

    for (int step = 0; step < opts.steps; ++step) {
        const auto& tc = train_cases[rng.uniform_int(train_cases.size())];
        const Dims3 d = tc.image.dims();
        SubVolumeSpec spec;
        spec.size = opts.subvolume;
        spec.origin = {int(rng.uniform_int(d.w - spec.size[0] + 1)),
                       int(rng.uniform_int(d.h - spec.size[1] + 1)),
                       int(rng.uniform_int(d.d - spec.size[2] + 1))};
        const Volume sub = extract_subvolume(tc.image, spec);
        const OneHotMask sub_mask = extract_subvolume(tc.mask, spec);

        ForwardCache cache;
        ProbField probs = forward(res.params, opts.net, sub, /*training=*/true,
                                  /*want_cache=*/true, &cache);
        probs.clamp();
        const auto p = flatten(probs);
        const auto t = flatten(sub_mask);
        LossResult lr = eval_loss(opts.loss, p, t, opts.net.class_channels);
        if (!std::isfinite(lr.value))
            throw std::runtime_error("non-finite loss at step " + std::to_string(step));
        res.loss_curve.push_back(lr.value);

        GradSet grads = backward(res.params, opts.net, cache, lr.grad);
        adadelta_step(state, res.params, grads);

        if (opts.eval_every > 0 && !val_cases.empty() &&
            ((step + 1) % opts.eval_every == 0 || step + 1 == opts.steps)) {
            const double v = mean_dice(res.params, opts.net, val_cases, opts.threshold);
            if (v > res.best_val_dice) {
                res.best_val_dice = v;
                res.best_params = res.params;
            }
        }
    }
    if (opts.eval_every <= 0 || val_cases.empty()) res.best_params = res.params;
    return res;
}

}  // namespace combo
