#include "combo/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace combo {

namespace {

void check_lengths(Span p, Span t) {
    if (p.size() != t.size()) throw std::invalid_argument("p/t length mismatch");
    if (p.empty()) throw std::invalid_argument("empty input");
}

}  // namespace

LossResult cross_entropy_mean(Span p, Span t) {
    check_lengths(p, t);
    const double inv_n = 1.0 / double(p.size());
    LossResult r;
    r.grad.resize(p.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        sum += t[i] * std::log(p[i]) + (1.0 - t[i]) * std::log(1.0 - p[i]);
        r.grad[i] = -inv_n * (t[i] / p[i] - (1.0 - t[i]) / (1.0 - p[i]));
    }
    r.value = -inv_n * sum;
    return r;
}

LossResult weighted_binary_ce(Span p, Span t, double beta) {
    check_lengths(p, t);
    if (beta < 0.0 || beta > 1.0) throw std::invalid_argument("beta must be in [0,1]");
    const double inv_n = 1.0 / double(p.size());
    LossResult r;
    r.grad.resize(p.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        sum += beta * t[i] * std::log(p[i]) + (1.0 - beta) * (1.0 - t[i]) * std::log(1.0 - p[i]);
        r.grad[i] = -inv_n * (beta * t[i] / p[i] - (1.0 - beta) * (1.0 - t[i]) / (1.0 - p[i]));
    }
    r.value = -inv_n * sum;
    return r;
}

double soft_dice(Span p, Span t, double smooth) {
    check_lengths(p, t);
    double inter = 0.0, sp = 0.0, st = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        inter += p[i] * t[i];
        sp += p[i];
        st += t[i];
    }
    return (2.0 * inter + smooth) / (sp + st + smooth);
}

namespace {

// Gradient of soft_dice itself (not negated).
void soft_dice_grad(Span p, Span t, double smooth, double scale, std::vector<double>& grad) {
    double inter = 0.0, sp = 0.0, st = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        inter += p[i] * t[i];
        sp += p[i];
        st += t[i];
    }
    const double den = sp + st + smooth;
    const double num = 2.0 * inter + smooth;
    for (std::size_t i = 0; i < p.size(); ++i)
        grad[i] += scale * (2.0 * t[i] * den - num) / (den * den);
}

}  // namespace

LossResult dice_loss(Span p, Span t, double smooth, bool one_minus) {
    check_lengths(p, t);
    const double d = soft_dice(p, t, smooth);
    LossResult r;
    r.value = one_minus ? 1.0 - d : -d;
    r.grad.assign(p.size(), 0.0);
    soft_dice_grad(p, t, smooth, -1.0, r.grad);
    return r;
}

std::vector<double> gdl_default_weights(Span t, int num_classes) {
    if (num_classes < 1 || t.size() % num_classes != 0)
        throw std::invalid_argument("num_classes must divide length");
    const std::size_t per = t.size() / num_classes;
    std::vector<double> w(num_classes);
    for (int l = 0; l < num_classes; ++l) {
        double rl = 0.0;
        for (std::size_t n = 0; n < per; ++n) rl += t[l * per + n];
        w[l] = 1.0 / std::max(rl * rl, 1e-8);
    }
    return w;
}

LossResult generalized_dice_loss(Span p, Span t, std::span<const double> weights, double smooth) {
    check_lengths(p, t);
    const int num_classes = int(weights.size());
    if (num_classes < 1 || p.size() % num_classes != 0)
        throw std::invalid_argument("class count must divide length");
    if (std::all_of(weights.begin(), weights.end(), [](double w) { return w == 0.0; }))
        throw std::invalid_argument("all GDL class weights are zero");
    const std::size_t per = p.size() / num_classes;

    double num = smooth, den = smooth;  // add-one smoothing both places, as in soft_dice
    for (int l = 0; l < num_classes; ++l) {
        double inter = 0.0, both = 0.0;
        for (std::size_t n = 0; n < per; ++n) {
            inter += t[l * per + n] * p[l * per + n];
            both += t[l * per + n] + p[l * per + n];
        }
        num += 2.0 * weights[l] * inter;
        den += weights[l] * both;
    }

    LossResult r;
    r.value = 1.0 - num / den;
    r.grad.resize(p.size());
    for (int l = 0; l < num_classes; ++l)
        for (std::size_t n = 0; n < per; ++n) {
            const std::size_t j = l * per + n;
            const double dnum = 2.0 * weights[l] * t[j];
            const double dden = weights[l];
            r.grad[j] = -(dnum * den - num * dden) / (den * den);
        }
    return r;
}

LossResult f_beta_loss(Span p, Span t, double beta_f, double smooth) {
    check_lengths(p, t);
    if (!(beta_f > 0.0)) throw std::invalid_argument("beta_f must be positive");
    const double b2 = beta_f * beta_f;
    double inter = 0.0, fn = 0.0, fp = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        inter += p[i] * t[i];
        fn += t[i] * (1.0 - p[i]);
        fp += p[i] * (1.0 - t[i]);
    }
    const double num = (1.0 + b2) * inter + smooth;
    const double den = (1.0 + b2) * inter + b2 * fn + fp + smooth;

    LossResult r;
    r.value = -num / den;
    r.grad.resize(p.size());
    for (std::size_t j = 0; j < p.size(); ++j) {
        const double dnum = (1.0 + b2) * t[j];
        const double dden = (1.0 + b2) * t[j] - b2 * t[j] + (1.0 - t[j]);
        r.grad[j] = -(dnum * den - num * dden) / (den * den);
    }
    return r;
}

LossResult focal_loss(Span p, Span t, const FocalParams& fp) {
    check_lengths(p, t);
    if (!(fp.alpha_f > 0.0 && fp.alpha_f <= 1.0) || fp.gamma < 0.0)
        throw std::invalid_argument("invalid focal parameters");
    const double inv_n = 1.0 / double(p.size());
    const double a = fp.alpha_f, g = fp.gamma;
    LossResult r;
    r.grad.resize(p.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double pi = p[i], ti = t[i];
        const double q = 1.0 - pi;
        const double mod_fg = std::pow(q, g);
        const double mod_bg = std::pow(pi, g);
        sum += a * ti * mod_fg * std::log(pi) + (1.0 - a) * (1.0 - ti) * mod_bg * std::log(q);
        double dfg = mod_fg / pi;
        double dbg = -mod_bg / q;
        if (g > 0.0) {
            dfg += -g * std::pow(q, g - 1.0) * std::log(pi);
            dbg += g * std::pow(pi, g - 1.0) * std::log(q);
        }
        r.grad[i] = -inv_n * (a * ti * dfg + (1.0 - a) * (1.0 - ti) * dbg);
    }
    r.value = -inv_n * sum;
    return r;
}

LossResult combo_loss(Span p, Span t, const ComboParams& cp, bool per_class, int num_classes) {
    check_lengths(p, t);
    if (cp.alpha < 0.0 || cp.alpha > 1.0) throw std::invalid_argument("alpha must be in [0,1]");
    if (cp.smooth < 0.0) throw std::invalid_argument("smooth must be nonnegative");

    LossResult wce = weighted_binary_ce(p, t, cp.beta);
    LossResult r;
    r.grad.assign(p.size(), 0.0);

    double dice_term = 0.0;
    if (!per_class) {
        dice_term = soft_dice(p, t, cp.smooth);
        soft_dice_grad(p, t, cp.smooth, -(1.0 - cp.alpha), r.grad);
    } else {
        if (num_classes < 1 || p.size() % num_classes != 0)
            throw std::invalid_argument("num_classes must divide length");
        const std::size_t per = p.size() / num_classes;
        for (int l = 0; l < num_classes; ++l) {
            Span pl = p.subspan(l * per, per);
            Span tl = t.subspan(l * per, per);
            dice_term += soft_dice(pl, tl, cp.smooth);
            std::vector<double> g(per, 0.0);
            soft_dice_grad(pl, tl, cp.smooth, -(1.0 - cp.alpha), g);
            for (std::size_t n = 0; n < per; ++n) r.grad[l * per + n] += g[n];
        }
    }

    r.value = cp.alpha * wce.value - (1.0 - cp.alpha) * dice_term;
    for (std::size_t i = 0; i < p.size(); ++i) r.grad[i] += cp.alpha * wce.grad[i];
    return r;
}

std::vector<double> finite_difference_gradient(const LossFn& loss_fn, Span p, Span t, double h) {
    if (h < 1e-6 || h > 1e-3) throw std::invalid_argument("h must be in [1e-6, 1e-3]");
    std::vector<double> work(p.begin(), p.end());
    std::vector<double> grad(p.size());
    for (std::size_t j = 0; j < p.size(); ++j) {
        double hj = h;
        // shrink so that p_j +/- hj stays inside (0,1)
        while (work[j] + hj >= 1.0 || work[j] - hj <= 0.0) hj *= 0.5;
        const double orig = work[j];
        work[j] = orig + hj;
        const double up = loss_fn(work, t);
        work[j] = orig - hj;
        const double down = loss_fn(work, t);
        work[j] = orig;
        grad[j] = (up - down) / (2.0 * hj);
    }
    return grad;
}

double max_relative_error(std::span<const double> analytic, std::span<const double> fd,
                          double floor) {
    if (analytic.size() != fd.size()) throw std::invalid_argument("gradient length mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double denom = std::max({std::abs(fd[i]), std::abs(analytic[i]), floor});
        worst = std::max(worst, std::abs(analytic[i] - fd[i]) / denom);
    }
    return worst;
}

}  // namespace combo
