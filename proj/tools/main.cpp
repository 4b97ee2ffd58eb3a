// combo: command-line front end for the segmentation toolkit.
//
// Subcommands: synth | train | eval | sweep-beta | gradcheck.
// Every CSV artifact starts with '#' comment lines carrying the build
// identifier and the full run configuration, so results are traceable and
// byte-reproducible for identical configs and seeds (batch norm off).

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "combo/infer.hpp"
#include "combo/losses.hpp"
#include "combo/metrics.hpp"
#include "combo/net.hpp"
#include "combo/rng.hpp"
#include "combo/synth.hpp"
#include "combo/train.hpp"
#include "combo/volume.hpp"

#ifndef COMBO_BUILD_ID
#define COMBO_BUILD_ID "unknown"
#endif

namespace fs = std::filesystem;
using namespace combo;

namespace {

std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

/// '#'-prefixed header: build identifier plus the full run configuration.
std::string artifact_header(const std::string& command,
                            const std::vector<std::pair<std::string, std::string>>& config) {
    std::ostringstream os;
    os << "# build=" << COMBO_BUILD_ID << "\n";
    os << "# command=" << command;
    for (const auto& [k, v] : config) os << " " << k << "=" << v;
    os << "\n";
    return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write: " + path);
    f << content;
}

struct CasePaths {
    std::string id;
    fs::path image, mask;
};

/// Pairs case_XXX.image.cvol / case_XXX.mask.cvol under dir, sorted by id.
std::vector<CasePaths> list_cases(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
    std::vector<CasePaths> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        const std::string suffix = ".image.cvol";
        if (name.size() <= suffix.size() || name.substr(name.size() - suffix.size()) != suffix)
            continue;
        const std::string id = name.substr(0, name.size() - suffix.size());
        fs::path mask = dir / (id + ".mask.cvol");
        if (!fs::exists(mask)) throw std::runtime_error("missing mask for case: " + id);
        out.push_back({id, entry.path(), mask});
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    if (out.empty()) throw std::runtime_error("no cases (*.image.cvol) in " + dir.string());
    return out;
}

std::vector<TrainCase> load_cases(const std::vector<CasePaths>& paths) {
    std::vector<TrainCase> cases;
    cases.reserve(paths.size());
    for (const auto& p : paths)
        cases.push_back({read_cvol_volume(p.image.string()), read_cvol_mask(p.mask.string())});
    return cases;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
    std::string out_dir;
    std::string phantom_config;  // optional key=value file
    int count = 3;
    std::uint64_t seed = 0;
    double presence_prob = -1.0;  // <0: keep per-organ values
    bool random_centers = false;
};

int cmd_synth(const SynthArgs& a) {
    PhantomConfig base =
        a.phantom_config.empty() ? default_phantom_config() : load_phantom_config(a.phantom_config);
    if (a.presence_prob >= 0.0)
        for (auto& o : base.organs) o.presence_prob = a.presence_prob;
    if (a.random_centers)
        for (auto& o : base.organs) o.random_center = true;

    fs::create_directories(a.out_dir);
    const std::vector<std::pair<std::string, std::string>> cfg_echo{
        {"out", a.out_dir},
        {"phantom_config", a.phantom_config.empty() ? "<default>" : a.phantom_config},
        {"count", std::to_string(a.count)},
        {"seed", std::to_string(a.seed)},
        {"presence_prob", format_double(a.presence_prob)},
        {"random_centers", a.random_centers ? "1" : "0"}};

    std::ostringstream manifest;
    manifest << artifact_header("synth", cfg_echo);
    manifest << "case_id,image,mask,seed\n";
    for (int i = 0; i < a.count; ++i) {
        PhantomConfig cfg = base;
        cfg.seed = a.seed + std::uint64_t(i);  // one stream family per phantom index
        const auto [image, mask] = generate_phantom(cfg);
        std::ostringstream id;
        id << "case_" << std::setw(3) << std::setfill('0') << i;
        const fs::path img_path = fs::path(a.out_dir) / (id.str() + ".image.cvol");
        const fs::path mask_path = fs::path(a.out_dir) / (id.str() + ".mask.cvol");
        write_cvol(img_path.string(), image);
        write_cvol(mask_path.string(), mask);
        manifest << id.str() << "," << img_path.filename().string() << ","
                 << mask_path.filename().string() << "," << cfg.seed << "\n";
    }
    save_phantom_config((fs::path(a.out_dir) / "phantom.cfg").string(), base);
    write_text_file((fs::path(a.out_dir) / "manifest.csv").string(), manifest.str());
    std::cout << "wrote " << a.count << " phantom pairs to " << a.out_dir << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// shared train/eval configuration

struct LossArgs {
    std::string loss = "combo";
    double alpha = 0.5;
    double beta = 0.5;
    double smooth = 1.0;
    double beta_f = 1.0;
    double focal_alpha = 0.25;
    double focal_gamma = 2.0;
    bool dice_one_minus = false;
    bool per_class = false;

    LossSpec spec() const {
        LossSpec s;
        s.kind = parse_loss_kind(loss);
        s.combo = {alpha, beta, smooth};
        s.focal = {focal_alpha, focal_gamma};
        s.beta_f = beta_f;
        s.dice_one_minus = dice_one_minus;
        s.combo_per_class = per_class;
        return s;
    }

    void add_options(CLI::App* app) {
        app->add_option("--loss", loss, "ce|wce|dice|gdl|fbeta|focal|combo")
            ->check(CLI::IsMember({"ce", "wce", "dice", "gdl", "fbeta", "focal", "combo"}));
        app->add_option("--alpha", alpha, "combo mixing weight in [0,1]");
        app->add_option("--beta", beta, "cross-entropy FP/FN steering weight in [0,1]");
        app->add_option("--smooth", smooth, "Dice add-one smoothing constant");
        app->add_option("--beta-f", beta_f, "F_beta exponent parameter");
        app->add_option("--focal-alpha", focal_alpha, "focal class balance weight");
        app->add_option("--focal-gamma", focal_gamma, "focal modulation exponent");
        app->add_flag("--dice-one-minus", dice_one_minus, "use 1 - dice instead of -dice");
        app->add_flag("--per-class", per_class, "per-class Dice term inside combo");
    }

    std::vector<std::pair<std::string, std::string>> echo() const {
        return {{"loss", loss},
                {"alpha", format_double(alpha)},
                {"beta", format_double(beta)},
                {"smooth", format_double(smooth)},
                {"beta_f", format_double(beta_f)},
                {"focal_alpha", format_double(focal_alpha)},
                {"focal_gamma", format_double(focal_gamma)},
                {"dice_one_minus", dice_one_minus ? "1" : "0"},
                {"per_class", per_class ? "1" : "0"}};
    }
};

struct NetArgs {
    std::vector<int> widths = {8, 16, 32};
    bool no_batch_norm = false;

    NetworkConfig config(int class_channels, std::uint64_t seed) const {
        NetworkConfig cfg;
        cfg.class_channels = class_channels;
        cfg.encoder_widths = widths;
        cfg.batch_norm = !no_batch_norm;
        cfg.seed = seed;
        return cfg;
    }

    void add_options(CLI::App* app) {
        app->add_option("--widths", widths, "encoder channel widths per level")
            ->delimiter(',');
        app->add_flag("--no-batch-norm", no_batch_norm, "disable batch normalization");
    }

    std::vector<std::pair<std::string, std::string>> echo() const {
        std::string w;
        for (std::size_t i = 0; i < widths.size(); ++i)
            w += (i ? "," : "") + std::to_string(widths[i]);
        return {{"widths", w}, {"batch_norm", no_batch_norm ? "0" : "1"}};
    }
};

struct OptimArgs {
    int steps = 500;
    int subvolume = 16;
    double rho = 0.95, eps = 1e-8, lr = 1.0;
    double threshold = 0.5;
    std::uint64_t seed = 0;
    int eval_every = 100;
    int val_cases = 1;

    void add_options(CLI::App* app) {
        app->add_option("--steps", steps, "training steps (one sub-volume each)");
        app->add_option("--subvolume", subvolume, "cubic training sub-volume edge");
        app->add_option("--rho", rho, "ADADELTA decay rate");
        app->add_option("--eps", eps, "ADADELTA epsilon");
        app->add_option("--lr", lr, "ADADELTA learning rate");
        app->add_option("--threshold", threshold, "activation threshold (strictly above)");
        app->add_option("--seed", seed, "base RNG seed");
        app->add_option("--eval-every", eval_every, "validation cadence in steps (0 = off)");
        app->add_option("--val-cases", val_cases, "trailing cases held out for validation");
    }

    std::vector<std::pair<std::string, std::string>> echo() const {
        return {{"steps", std::to_string(steps)},
                {"subvolume", std::to_string(subvolume)},
                {"rho", format_double(rho)},
                {"eps", format_double(eps)},
                {"lr", format_double(lr)},
                {"threshold", format_double(threshold)},
                {"seed", std::to_string(seed)},
                {"eval_every", std::to_string(eval_every)},
                {"val_cases", std::to_string(val_cases)}};
    }
};

TrainOptions make_train_options(const LossArgs& loss, const NetArgs& net, const OptimArgs& opt,
                                int class_channels) {
    TrainOptions to;
    to.net = net.config(class_channels, opt.seed);
    to.loss = loss.spec();
    to.steps = opt.steps;
    to.subvolume = {opt.subvolume, opt.subvolume, opt.subvolume};
    to.rho = opt.rho;
    to.eps = opt.eps;
    to.lr = opt.lr;
    to.threshold = opt.threshold;
    to.seed = opt.seed;
    to.eval_every = opt.eval_every;
    return to;
}

void split_cases(std::vector<TrainCase> all, int val_cases, std::vector<TrainCase>& train_set,
                 std::vector<TrainCase>& val_set) {
    if (val_cases < 0 || std::size_t(val_cases) >= all.size())
        throw std::runtime_error("val-cases must leave at least one training case");
    val_set.assign(std::make_move_iterator(all.end() - val_cases),
                   std::make_move_iterator(all.end()));
    all.erase(all.end() - val_cases, all.end());
    train_set = std::move(all);
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
    std::string data_dir;
    std::string out_dir = ".";
    LossArgs loss;
    NetArgs net;
    OptimArgs opt;
};

int cmd_train(const TrainArgs& a) {
    std::vector<TrainCase> train_set, val_set;
    split_cases(load_cases(list_cases(a.data_dir)), a.opt.val_cases, train_set, val_set);
    const int channels = train_set.front().mask.channels();

    const TrainOptions to = make_train_options(a.loss, a.net, a.opt, channels);
    TrainResult result = train(train_set, val_set, to);

    fs::create_directories(a.out_dir);
    save_checkpoint((fs::path(a.out_dir) / "checkpoint.cnet").string(), to.net, result.params);
    const bool have_best = result.best_val_dice >= 0.0;
    save_checkpoint((fs::path(a.out_dir) / "best.cnet").string(), to.net,
                    have_best ? result.best_params : result.params);

    auto cfg_echo = a.loss.echo();
    auto ne = a.net.echo(), oe = a.opt.echo();
    cfg_echo.insert(cfg_echo.end(), ne.begin(), ne.end());
    cfg_echo.insert(cfg_echo.end(), oe.begin(), oe.end());
    cfg_echo.push_back({"data", a.data_dir});

    std::ostringstream csv;
    csv << artifact_header("train", cfg_echo);
    csv << "step,loss\n";
    for (std::size_t i = 0; i < result.loss_curve.size(); ++i)
        csv << i << "," << format_double(result.loss_curve[i]) << "\n";
    write_text_file((fs::path(a.out_dir) / "loss_curve.csv").string(), csv.str());

    std::cout << "trained " << to.steps << " steps; best validation dice = "
              << (have_best ? format_double(result.best_val_dice) : std::string("n/a")) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
    std::string checkpoint;
    std::string data_dir;
    std::string out_csv = "metrics.csv";
    int window = 0;  // 0: whole volume
    int stride = 0;  // 0: window size
    double threshold = 0.5;
    bool use_gt_as_pred = false;  // plumbing check: metrics of gt vs itself
};

OrganReport evaluate_cases(const EvalArgs& a, const std::vector<CasePaths>& paths,
                           std::vector<OneHotMask>& preds, std::vector<OneHotMask>& gts) {
    NetworkConfig cfg;
    ParamSet params;
    if (!a.use_gt_as_pred) {
        if (!fs::exists(a.checkpoint))
            throw std::runtime_error("checkpoint not found: " + a.checkpoint);
        std::tie(cfg, params) = load_checkpoint(a.checkpoint);
    }

    std::vector<EvalCase> cases;
    std::vector<Spacing3> spacings;
    preds.reserve(paths.size());
    gts.reserve(paths.size());
    for (const auto& p : paths) {
        const Volume image = read_cvol_volume(p.image.string());
        gts.push_back(read_cvol_mask(p.mask.string()));
        if (a.use_gt_as_pred) {
            preds.push_back(gts.back());
        } else {
            const Dims3 d = image.dims();
            const int w = a.window > 0 ? a.window : 0;
            const std::array<int, 3> window = w ? std::array<int, 3>{w, w, w}
                                                : std::array<int, 3>{d.w, d.h, d.d};
            const int s = a.stride > 0 ? a.stride : 0;
            const std::array<int, 3> stride = s ? std::array<int, 3>{s, s, s} : window;
            preds.push_back(predict_volume(params, cfg, image, window, stride, a.threshold));
        }
        spacings.push_back(image.spacing());
    }
    for (std::size_t i = 0; i < paths.size(); ++i)
        cases.push_back({paths[i].id, &preds[i], &gts[i], spacings[i]});
    return organ_report(cases);
}

int cmd_eval(const EvalArgs& a) {
    const auto paths = list_cases(a.data_dir);
    std::vector<OneHotMask> preds, gts;
    const OrganReport report = evaluate_cases(a, paths, preds, gts);

    const std::vector<std::pair<std::string, std::string>> cfg_echo{
        {"checkpoint", a.use_gt_as_pred ? "<ground-truth>" : a.checkpoint},
        {"data", a.data_dir},
        {"window", std::to_string(a.window)},
        {"stride", std::to_string(a.stride)},
        {"threshold", format_double(a.threshold)}};
    std::ostringstream header;
    header << "build=" << COMBO_BUILD_ID << "\ncommand=eval";
    for (const auto& [k, v] : cfg_echo) header << " " << k << "=" << v;
    write_text_file(a.out_csv, report_to_csv(report, header.str()));

    for (const auto& row : report.per_organ)
        std::cout << "organ " << row.organ << ": dice " << row.dice.mean << " +/- "
                  << row.dice.stddev << ", fnr " << row.fnr.mean << ", fpr_pos "
                  << row.fpr_pos.mean << "\n";
    std::cout << "wrote " << a.out_csv << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// sweep-beta

struct SweepArgs {
    std::string data_dir;
    std::string out_csv = "sweep.csv";
    std::vector<double> betas;
    int seeds = 3;
    int jobs = 1;
    LossArgs loss;  // alpha/smooth reused; kind forced to combo
    NetArgs net;
    OptimArgs opt;
};

int cmd_sweep_beta(const SweepArgs& a) {
    if (a.betas.size() < 2) throw std::runtime_error("sweep-beta needs at least 2 beta values");
    if (a.seeds < 1) throw std::runtime_error("seeds must be >= 1");

    std::vector<TrainCase> train_set, val_set;
    split_cases(load_cases(list_cases(a.data_dir)), a.opt.val_cases, train_set, val_set);
    const int channels = train_set.front().mask.channels();

    struct Task {
        double beta;
        std::uint64_t seed;
    };
    std::vector<Task> tasks;
    for (double beta : a.betas)
        for (int s = 0; s < a.seeds; ++s) tasks.push_back({beta, a.opt.seed + std::uint64_t(s)});

    std::vector<std::string> rows(tasks.size());
    std::mutex next_mutex;
    std::size_t next = 0;

    auto run_task = [&](std::size_t i) {
        const Task& task = tasks[i];
        OptimArgs opt = a.opt;
        opt.seed = task.seed;
        LossArgs loss = a.loss;
        loss.loss = "combo";
        loss.beta = task.beta;
        TrainOptions to = make_train_options(loss, a.net, opt, channels);
        TrainResult result = train(train_set, val_set, to);
        ParamSet final_params = result.params;

        std::vector<EvalCase> cases;
        std::vector<OneHotMask> preds;
        preds.reserve(val_set.size());
        for (const auto& c : val_set) {
            const Dims3 d = c.image.dims();
            preds.push_back(predict_volume(final_params, to.net, c.image, {d.w, d.h, d.d},
                                           {d.w, d.h, d.d}, opt.threshold));
        }
        for (std::size_t k = 0; k < val_set.size(); ++k)
            cases.push_back({"val_" + std::to_string(k), &preds[k], &val_set[k].mask,
                             val_set[k].image.spacing()});
        const OrganReport report = organ_report(cases);

        std::ostringstream os;
        for (const auto& r : report.rows) {
            os << format_double(task.beta) << "," << task.seed << "," << r.case_id << ","
               << r.organ << "," << format_double(r.dice) << "," << format_double(r.jaccard)
               << "," << format_double(r.fpr_pos) << "," << format_double(r.fpr_tn) << ","
               << format_double(r.fnr) << ",";
            if (r.hd_mm) os << format_double(*r.hd_mm);
            os << "\n";
        }
        rows[i] = os.str();
    };

    auto worker = [&]() {
        for (;;) {
            std::size_t i;
            {
                std::lock_guard<std::mutex> lock(next_mutex);
                if (next >= tasks.size()) return;
                i = next++;
            }
            run_task(i);
        }
    };
    const int jobs = std::max(1, std::min<int>(a.jobs, int(tasks.size())));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    auto cfg_echo = a.loss.echo();
    auto ne = a.net.echo(), oe = a.opt.echo();
    cfg_echo.insert(cfg_echo.end(), ne.begin(), ne.end());
    cfg_echo.insert(cfg_echo.end(), oe.begin(), oe.end());
    cfg_echo.push_back({"data", a.data_dir});
    cfg_echo.push_back({"seeds", std::to_string(a.seeds)});
    {
        std::string b;
        for (std::size_t i = 0; i < a.betas.size(); ++i)
            b += (i ? "," : "") + format_double(a.betas[i]);
        cfg_echo.push_back({"betas", b});
    }

    std::ostringstream csv;
    csv << artifact_header("sweep-beta", cfg_echo);
    csv << "beta,seed,case_id,organ,dice,jaccard,fpr_pos,fpr_tn,fnr,hd_mm\n";
    for (const auto& r : rows) csv << r;
    write_text_file(a.out_csv, csv.str());
    std::cout << "wrote " << a.out_csv << " (" << tasks.size() << " runs)\n";
    return 0;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckArgs {
    int trials = 30;
    double tolerance = 1e-4;
    double param_tolerance = 1e-3;
    std::uint64_t seed = 0;
    bool mutate = false;  // sign-flip the combo gradient to prove detection
};

double loss_level_worst(LossKind kind, const GradcheckArgs& a) {
    LossSpec spec;
    spec.kind = kind;
    spec.combo = {0.5, 0.4, 1.0};
    spec.beta_f = 2.0;
    Rng rng(a.seed + std::uint64_t(kind) * 101, 9);
    double worst = 0.0;
    for (int trial = 0; trial < a.trials; ++trial) {
        const int half = 1 + int(rng.uniform_int(32));
        const int n = 2 * half;  // even so two-class losses divide evenly
        std::vector<double> p(n), t(n);
        for (int i = 0; i < n; ++i) {
            p[i] = rng.uniform(0.01, 0.99);
            t[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
        }
        LossResult res = eval_loss(spec, p, t, 2);
        if (a.mutate && kind == LossKind::Combo)
            for (double& g : res.grad) g = -g;
        const auto fd = finite_difference_gradient(
            [&](Span pp, Span tt) { return eval_loss(spec, pp, tt, 2).value; }, p, t, 1e-5);
        worst = std::max(worst, max_relative_error(res.grad, fd));
    }
    return worst;
}

double parameter_level_worst(std::uint64_t seed) {
    NetworkConfig cfg;
    cfg.encoder_widths = {2};
    cfg.class_channels = 1;
    cfg.seed = seed + 5;
    ParamSet params = glorot_init(cfg);
    // nudge biases off zero: a dead receptive field with a zero bias sits
    // exactly on the ReLU kink, where central differences report slope 1/2
    Rng jitter(seed + 13);
    for (auto& c : params.convs)
        for (double& b : c.b) b += jitter.uniform(0.01, 0.05);

    Rng rng(seed + 7);
    Volume input({4, 4, 4});
    for (double& v : input.voxels()) v = rng.uniform();
    OneHotMask target(input.dims(), cfg.class_channels);
    for (auto& b : target.bits()) b = rng.uniform() < 0.3 ? 1 : 0;
    const auto t = flatten(target);
    const ComboParams cp{0.5, 0.4, 1.0};

    auto loss_of = [&](ParamSet& ps) {
        ParamSet work = ps;
        ProbField probs = forward(work, cfg, input, false, false, nullptr);
        probs.clamp();
        return combo_loss(flatten(probs), t, cp).value;
    };

    ForwardCache cache;
    {
        ParamSet work = params;
        ProbField probs = forward(work, cfg, input, false, true, &cache);
        probs.clamp();
    }
    const LossResult lr = combo_loss(cache.probs.v, t, cp);
    const GradSet grads = backward(params, cfg, cache, lr.grad);

    std::vector<std::pair<std::vector<double>*, const std::vector<double>*>> arrays;
    for (std::size_t i = 0; i < params.convs.size(); ++i) {
        arrays.push_back({&params.convs[i].w, &grads.conv_w[i]});
        arrays.push_back({&params.convs[i].b, &grads.conv_b[i]});
    }
    for (std::size_t i = 0; i < params.bns.size(); ++i) {
        arrays.push_back({&params.bns[i].gamma, &grads.bn_gamma[i]});
        arrays.push_back({&params.bns[i].beta, &grads.bn_beta[i]});
    }

    const double h = 1e-5;
    double worst = 0.0;
    for (auto& [arr, g] : arrays)
        for (std::size_t i = 0; i < arr->size(); ++i) {
            const double orig = (*arr)[i];
            (*arr)[i] = orig + h;
            const double up = loss_of(params);
            (*arr)[i] = orig - h;
            const double down = loss_of(params);
            (*arr)[i] = orig;
            const double fd = (up - down) / (2.0 * h);
            const double denom = std::max({std::abs(fd), std::abs((*g)[i]), 1e-5});
            worst = std::max(worst, std::abs(fd - (*g)[i]) / denom);
        }
    return worst;
}

int cmd_gradcheck(const GradcheckArgs& a) {
    const LossKind kinds[] = {LossKind::CE,    LossKind::WCE,   LossKind::Dice, LossKind::GDL,
                              LossKind::FBeta, LossKind::Focal, LossKind::Combo};
    bool ok = true;
    for (LossKind kind : kinds) {
        const double worst = loss_level_worst(kind, a);
        const bool pass = worst < a.tolerance;
        ok = ok && pass;
        std::cout << "loss=" << loss_kind_name(kind) << " max_rel_err=" << format_double(worst)
                  << " tol=" << format_double(a.tolerance) << (pass ? " PASS" : " FAIL") << "\n";
    }
    const double pworst = parameter_level_worst(a.seed);
    const bool ppass = pworst < a.param_tolerance;
    ok = ok && ppass;
    std::cout << "params max_rel_err=" << format_double(pworst)
              << " tol=" << format_double(a.param_tolerance) << (ppass ? " PASS" : " FAIL")
              << "\n";
    std::cout << (ok ? "gradcheck PASS" : "gradcheck FAIL") << "\n";
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Volumetric segmentation toolkit: synthetic phantoms, combo-loss training, "
                 "sliding-window evaluation"};
    app.require_subcommand(1);
    app.set_config("--config", "",
                   "key=value config file ([subcommand] sections); flags override");

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "generate phantom image/mask CVOL pairs");
    synth_cmd->add_option("--out", synth.out_dir, "output directory")->required();
    synth_cmd->add_option("--phantom-config", synth.phantom_config, "phantom geometry file");
    synth_cmd->add_option("--count", synth.count, "number of phantoms")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--seed", synth.seed, "base seed; case i uses seed+i");
    synth_cmd->add_option("--presence-prob", synth.presence_prob,
                          "override presence probability of every organ");
    synth_cmd->add_flag("--random-centers", synth.random_centers,
                        "randomize all organ centers");

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "train a model on CVOL cases");
    train_cmd->add_option("--data", train_args.data_dir, "case directory")->required();
    train_cmd->add_option("--out", train_args.out_dir, "output directory");
    train_args.loss.add_options(train_cmd);
    train_args.net.add_options(train_cmd);
    train_args.opt.add_options(train_cmd);

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint, write metrics CSV");
    eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "CNET checkpoint path");
    eval_cmd->add_option("--data", eval_args.data_dir, "case directory")->required();
    eval_cmd->add_option("--out", eval_args.out_csv, "metrics CSV path");
    eval_cmd->add_option("--window", eval_args.window, "cubic window edge (0 = whole volume)");
    eval_cmd->add_option("--stride", eval_args.stride, "cubic stride (0 = window)");
    eval_cmd->add_option("--threshold", eval_args.threshold, "activation threshold");
    eval_cmd->add_flag("--use-gt-as-pred", eval_args.use_gt_as_pred,
                       "score ground truth against itself (plumbing check)");

    SweepArgs sweep;
    auto* sweep_cmd =
        app.add_subcommand("sweep-beta", "train/evaluate one combo model per beta value");
    sweep_cmd->add_option("--data", sweep.data_dir, "case directory")->required();
    sweep_cmd->add_option("--out", sweep.out_csv, "sweep CSV path");
    sweep_cmd->add_option("--betas", sweep.betas, "beta values (need >= 2)")
        ->delimiter(',')
        ->required();
    sweep_cmd->add_option("--seeds", sweep.seeds, "seeds per beta");
    sweep_cmd->add_option("--jobs", sweep.jobs, "parallel workers across runs");
    sweep.loss.add_options(sweep_cmd);
    sweep.net.add_options(sweep_cmd);
    sweep.opt.add_options(sweep_cmd);

    GradcheckArgs gc;
    auto* gc_cmd = app.add_subcommand("gradcheck", "verify analytic gradients against FD");
    gc_cmd->add_option("--trials", gc.trials, "random (p,t) pairs per loss")
        ->check(CLI::PositiveNumber);
    gc_cmd->add_option("--tolerance", gc.tolerance, "loss-level max relative error");
    gc_cmd->add_option("--param-tolerance", gc.param_tolerance,
                       "parameter-level max relative error");
    gc_cmd->add_option("--seed", gc.seed, "RNG seed");
    gc_cmd->add_flag("--mutate", gc.mutate,
                     "sign-flip the combo gradient (must FAIL; detection self-test)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth_cmd->parsed()) return cmd_synth(synth);
        if (train_cmd->parsed()) return cmd_train(train_args);
        if (eval_cmd->parsed()) return cmd_eval(eval_args);
        if (sweep_cmd->parsed()) return cmd_sweep_beta(sweep);
        if (gc_cmd->parsed()) return cmd_gradcheck(gc);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
