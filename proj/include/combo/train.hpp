#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "combo/losses.hpp"
#include "combo/net.hpp"
#include "combo/synth.hpp"

namespace combo {

enum class LossKind { CE, WCE, Dice, GDL, FBeta, Focal, Combo };

struct LossSpec {
    LossKind kind = LossKind::Combo;
    ComboParams combo;       // alpha, beta, smooth
    FocalParams focal;       // alpha_f, gamma
    double beta_f = 1.0;     // F_beta
    bool dice_one_minus = false;
    bool combo_per_class = false;
};

LossKind parse_loss_kind(const std::string& name);
std::string loss_kind_name(LossKind kind);

/// Dispatch by kind. num_classes is used by GDL and per-class combo.
LossResult eval_loss(const LossSpec& spec, Span p, Span t, int num_classes);

struct TrainCase {
    Volume image;
    OneHotMask mask;
};

struct TrainOptions {
    NetworkConfig net;
    LossSpec loss;
    int steps = 500;
    std::array<int, 3> subvolume{16, 16, 16};
    double rho = 0.95, eps = 1e-8, lr = 1.0;
    double threshold = 0.5;
    std::uint64_t seed = 0;
    int eval_every = 100;  // validation cadence; 0 disables best tracking
};

struct TrainResult {
    ParamSet params;           // final parameters
    ParamSet best_params;      // best validation Dice checkpoint
    double best_val_dice = -1.0;
    std::vector<double> loss_curve;  // one value per step
};

/// Fixed-step training on uniformly sampled sub-volumes of the training
/// cases. Throws on a non-finite loss, reporting the step index.
TrainResult train(const std::vector<TrainCase>& train_cases,
                  const std::vector<TrainCase>& val_cases, const TrainOptions& opts);

/// Mean per-channel Dice of whole-volume predictions over the cases.
double mean_dice(ParamSet& params, const NetworkConfig& cfg,
                 const std::vector<TrainCase>& cases, double threshold);

}  // namespace combo
