// Acceptance gate: one PASS/FAIL line per criterion.
// Usage: plvton_acceptance [name-substring ...]   (no arguments runs everything)

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "../support/oracles.hpp"
#include "plvton/geowarp.hpp"
#include "plvton/pipeline.hpp"
#include "plvton/synthetic.hpp"

using namespace plvton;
namespace fs = std::filesystem;

namespace {

// tolerances
constexpr double kGeometryTol = 1e-6;
constexpr int kGeometryCases = 1000;
constexpr double kGruTol = 1e-5;
constexpr int kGravityCases = 1000;
constexpr double kLossTol = 1e-6;
constexpr double kGradRelTol = 1e-3;
constexpr int kGradCoords = 12;
constexpr double kLog7 = 1.945910149055313;
constexpr double kPsnrOneLevel = 48.13;
constexpr double kPsnrOneLevelTol = 0.01;
constexpr double kFidSameTol = 1e-4;
constexpr double kFidAnalytic = 9.0;
constexpr double kFidAnalyticTol = 1e-6;
constexpr int64_t kOverfitPairs = 8;
constexpr int64_t kOverfitMaxSteps = 2000;
constexpr int64_t kOverfitEvalEvery = 50;
constexpr double kOverfitLearningRate = 1e-3;
constexpr double kGravityRatio = 0.10;
constexpr double kParsingAccuracy = 0.95;
constexpr double kFusionSsim = 0.80;
constexpr double kFusionPsnr = 20.0;
constexpr double kLivenessDiff = 1e-3;
constexpr int64_t kDeterminismSteps = 10;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, v);
    return buf;
}

double max_abs(const torch::Tensor& a, const torch::Tensor& b) {
    return (oracle::f64(a) - oracle::f64(b)).abs().max().item<double>();
}

// ---------------------------------------------------------------------------

Outcome geometry() {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int64_t> dim(1, 8), chans(1, 3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double worst_flow = 0.0, worst_affine = 0.0;
    bool identity_exact = true;
    for (int k = 0; k < kGeometryCases; ++k) {
        const int64_t c = chans(rng), h = dim(rng), w = dim(rng);
        auto img = torch::rand({c, h, w}, torch::kFloat64);
        auto flow = torch::empty({2, h, w}, torch::kFloat64);
        for (int64_t i = 0; i < flow.numel(); ++i) flow.view({-1})[i] = 3.0 * u(rng);
        const double fill = u(rng);
        worst_flow = std::max(worst_flow, max_abs(flow_warp(img, flow, fill), oracle::flow_warp(img, flow, fill)));

        const double a1 = 1.0 + 0.5 * u(rng), a2 = 1.0 + 0.5 * u(rng), b1 = u(rng), b2 = u(rng);
        const auto got = affine_apply(img, AffineParams{a1, a2, b1, b2}, fill);
        worst_affine = std::max(worst_affine, max_abs(got, oracle::affine_apply(img, a1, a2, b1, b2, fill)));

        identity_exact = identity_exact && torch::equal(flow_warp(img, torch::zeros_like(flow), fill), img) &&
                         torch::equal(affine_apply(img, AffineParams::identity(), fill), img);
    }
    return {worst_flow <= kGeometryTol && worst_affine <= kGeometryTol && identity_exact,
            "cases=" + std::to_string(kGeometryCases) + " flow_max_err=" + fmt("%.3g", worst_flow) +
                " affine_max_err=" + fmt("%.3g", worst_affine) + " identity_exact=" + (identity_exact ? "yes" : "no")};
}

Outcome gru() {
    torch::manual_seed(11);
    ConvGruCell cell(2, 2);
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
        auto f = torch::randn({2, 4, 4});
        auto h = torch::randn({2, 4, 4});
        const auto got = gru_step(cell, f.unsqueeze(0), h.unsqueeze(0))[0];
        oracle::GruWeights g{cell->w_fr->weight, cell->w_fr->bias, cell->w_hr->weight,
                             cell->w_fz->weight, cell->w_fz->bias, cell->w_hz->weight,
                             cell->w_fh->weight, cell->w_fh->bias, cell->w_hh->weight};
        worst = std::max(worst, max_abs(got, oracle::gru_step(g, f, h)));
    }
    {
        torch::NoGradGuard no_grad;
        for (auto& p : cell->parameters()) p.zero_();
    }
    auto h = torch::randn({1, 2, 4, 4});
    const bool halves = torch::equal(gru_step(cell, torch::randn({1, 2, 4, 4}), h), 0.5 * h);
    return {worst <= kGruTol && halves,
            "max_err=" + fmt("%.3g", worst) + " zero_weights_halve_state=" + (halves ? "yes" : "no")};
}

Outcome gravity() {
    auto column = torch::zeros({1, 8, 1});
    column.narrow(1, 2, 4).fill_(1.0);
    const auto g = build_gravity_mask(column, 0.0).flatten();
    const auto expected = torch::tensor({0.0, 0.0, 1.0, 2.0 / 3, 1.0 / 3, 0.0, 0.0, 0.0}, torch::kFloat64);
    const bool column_ok = max_abs(g, expected) <= 1e-7;
    const bool empty_ok = build_gravity_mask(torch::zeros({1, 5, 4}), 0.0).abs().sum().item<double>() == 0.0;

    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int64_t> dim(1, 16);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int violations = 0;
    double worst = 0.0;
    for (int k = 0; k < kGravityCases; ++k) {
        const int64_t h = dim(rng), w = dim(rng);
        const double density = u(rng);
        const double floor = k % 2 == 0 ? 0.0 : u(rng);
        auto mask = (torch::rand({1, h, w}, torch::kFloat64) < density).to(torch::kFloat32);
        const auto m = build_gravity_mask(mask, floor).squeeze(0).to(torch::kFloat64);
        const auto ref = oracle::gravity_mask(mask.squeeze(0), floor);
        worst = std::max(worst, max_abs(m, ref));
        auto ma = m.accessor<double, 2>();
        const auto mask64 = oracle::f64(mask);
        auto ka = mask64.accessor<double, 3>();
        for (int64_t j = 0; j < w; ++j) {
            int64_t top = -1, bottom = -1;
            for (int64_t i = 0; i < h; ++i)
                if (ka[0][i][j] > 0.5) {
                    if (top < 0) top = i;
                    bottom = i;
                }
            for (int64_t i = 0; i < h; ++i) {
                const bool inside = top >= 0 && i >= top && i <= bottom;
                if (!inside && ma[i][j] != 0.0) ++violations;
                if (inside && (ma[i][j] < floor - 1e-6 || ma[i][j] > 1.0 + 1e-6)) ++violations;
                if (inside && i > top && ma[i][j] > ma[i - 1][j] + 1e-7) ++violations;
            }
            if (top >= 0 && std::abs(ma[top][j] - 1.0) > 1e-7) ++violations;
        }
    }
    return {column_ok && empty_ok && violations == 0 && worst <= 1e-6,
            std::string("column=") + (column_ok ? "ok" : "bad") + " empty=" + (empty_ok ? "ok" : "bad") +
                " random_masks=" + std::to_string(kGravityCases) + " violations=" + std::to_string(violations) +
                " oracle_max_err=" + fmt("%.3g", worst)};
}

Outcome losses() {
    torch::manual_seed(5);
    std::ostringstream d;
    bool ok = true;
    auto note = [&](const std::string& name, double err, double tol) {
        ok = ok && err <= tol;
        d << name << '=' << fmt("%.3g", err) << ' ';
    };

    // values against loop oracles
    const auto mw = torch::rand({2, 1, 8, 6}, torch::kFloat64);
    const auto mgt = (torch::rand({2, 1, 8, 6}, torch::kFloat64) > 0.5).to(torch::kFloat64);
    const auto mg = build_gravity_mask(mgt, 0.0);
    note("gra_err", std::abs(loss_gravity(mw, mgt, mg).item<double>() - oracle::mean_abs_weighted(mw, mgt, mg)),
         kLossTol);

    const auto flow = torch::randn({2, 2, 8, 6}, torch::kFloat64);
    note("tv_err", std::abs(loss_tv(flow, 1e-6).item<double>() - oracle::tv(flow, 1e-6)), kLossTol);
    note("tv_const", loss_tv(torch::full({1, 2, 8, 6}, 2.5, torch::kFloat64), 1e-6).item<double>(), 1.001e-3);

    ClassWeights unit;
    unit.values.fill(1.0);
    const auto uniform = torch::full({1, 7, 8, 6}, 1.0 / 7, torch::kFloat64);
    const auto onehot = encode_parsing(torch::randint(0, 7, {8, 6})).unsqueeze(0).to(torch::kFloat64);
    note("ppe_log7_err", std::abs(loss_ppe(uniform, onehot, unit).item<double>() - kLog7), 1e-9);

    const auto probs = torch::softmax(torch::randn({2, 7, 8, 6}, torch::kFloat64), 1);
    const auto target = torch::stack({onehot[0], encode_parsing(torch::randint(0, 7, {8, 6})).to(torch::kFloat64)});
    ClassWeights weights;
    const std::vector<double> wv(weights.values.begin(), weights.values.end());
    note("ppe_err", std::abs(loss_ppe(probs, target, weights).item<double>() - oracle::weighted_ce(probs, target, wv, 1e-8)),
         kLossTol);

    PerceptualBackbone backbone(19);
    backbone->to(torch::kFloat64);
    const auto out = torch::rand({1, 3, 32, 24}, torch::kFloat64);
    const auto tgt = torch::rand({1, 3, 32, 24}, torch::kFloat64);
    LtfOptions lopt;
    double perceptual = 0.0;
    {
        const auto fo = backbone->features(out);
        const auto ft = backbone->features(tgt);
        for (size_t i = 0; i < fo.size(); ++i) perceptual += lopt.stage_weights[i] * oracle::mean_abs_diff(fo[i], ft[i]);
    }
    const double ltf_ref = lopt.loss.image * oracle::mean_abs_diff(out, tgt) + lopt.loss.perceptual * perceptual +
                           lopt.loss.edge * oracle::mean_abs_diff(oracle::sobel(out[0]), oracle::sobel(tgt[0]));
    note("ltf_err", std::abs(ltf_stage_loss(out, tgt, backbone, lopt).item<double>() - ltf_ref), kLossTol);

    // gradients against central differences
    note("grad_gra", oracle::gradient_check([&](const torch::Tensor& x) { return loss_gravity(x, mgt, mg); }, mw,
                                            kGradCoords, 1),
         kGradRelTol);
    note("grad_tv", oracle::gradient_check([&](const torch::Tensor& x) { return loss_tv(x, 1e-6); }, flow, kGradCoords, 2),
         kGradRelTol);
    note("grad_ppe", oracle::gradient_check([&](const torch::Tensor& x) { return loss_ppe(x, target, weights); },
                                            probs, kGradCoords, 3),
         kGradRelTol);
    const auto logits = torch::randn({2, 7, 8, 6}, torch::kFloat64);
    note("grad_ppe_logits",
         oracle::gradient_check([&](const torch::Tensor& x) { return loss_ppe_from_logits(x, target, weights); }, logits,
                                kGradCoords, 4),
         kGradRelTol);
    note("grad_ltf",
         oracle::gradient_check([&](const torch::Tensor& x) { return ltf_stage_loss(x, tgt, backbone, lopt); }, out,
                                kGradCoords, 5),
         kGradRelTol);
    return {ok, d.str()};
}

Outcome structure() {
    int failures = 0;
    std::ostringstream d;
    auto check = [&](bool c, const std::string& what) {
        if (!c) {
            ++failures;
            d << "broken:" << what << ' ';
        }
    };
    auto simplex = [](const torch::Tensor& p) {
        const auto ch = p.dim() - 3;
        return (p.sum(ch) - 1.0).abs().max().item<double>() < 1e-6 && ((p == 0) | (p == 1)).all().item<bool>();
    };
    for (int64_t i = 0; i < 6; ++i) {
        const auto rec = synth::generate(i, {});
        const auto s = make_sample(rec.person, rec.clothing, rec.clothing_mask, rec.labels, rec.pose);
        check(simplex(s.parsing), "encode_parsing");
        check(simplex(s.occluded_parsing), "apply_occlusion");
        const auto nl = compose_nonlimb(s.parsing, s.gt_warp_mask);
        check(simplex(nl), "compose_nonlimb");
        const auto arms = nl[class_index(ParsingClass::LeftArm)] + nl[class_index(ParsingClass::RightArm)];
        check(arms.sum().item<double>() == 0.0, "compose_nonlimb removes arms");

        const auto mask = build_agnostic_mask(s.parsing)[0] > 0.5;
        const auto labels = rec.labels;
        check((mask | (labels != class_index(ParsingClass::UpperClothes))).all().item<bool>(), "mask covers clothing");
        for (auto keep : {ParsingClass::Background, ParsingClass::Hair, ParsingClass::Face, ParsingClass::LowerBody})
            check(!(mask & (labels == class_index(keep))).any().item<bool>(), "mask spares preserved class");
        const auto kept = ~mask;
        check(torch::equal(s.occluded_person.masked_select(kept.unsqueeze(0).expand({3, -1, -1})),
                           s.person.masked_select(kept.unsqueeze(0).expand({3, -1, -1}))),
              "occlusion keeps unmasked pixels");
    }
    for (int64_t s : {2, 4, 8}) {
        const auto x = torch::rand({3, 32, 24});
        const auto p = patchify(x, s);
        check(p.size(0) == 3 * s * s && p.size(1) == 32 / s && p.size(2) == 24 / s, "patchify shape");
        check(torch::equal(unpatch(p, s), x), "unpatch(patchify)");
        check(torch::equal(patchify(unpatch(p, s), s), p), "patchify(unpatch)");
        check(limb_guidance(torch::rand({3, 256, 192}), s).size(0) == 3 * s * s, "limb guidance channels");
    }
    return {failures == 0, failures == 0 ? "one-hot, agnostic mask, patch bijection s={2,4,8}, L_p=3s^2 channels" : d.str()};
}

Outcome metrics() {
    torch::manual_seed(9);
    const auto x = torch::rand({3, 64, 48}, torch::kFloat64) * 0.9;
    const double s_same = ssim(x, x);
    const double p_same = psnr(x, x);
    const double p_one = psnr(x, x + 1.0 / 255.0);
    const auto feats = torch::randn({50, 8}, torch::kFloat64);
    const double f_same = fid(feats, feats);
    auto a = torch::randn({400, 1}, torch::kFloat64);
    a = (a - a.mean()) / a.std();
    const double f_shift = fid(a, a + 3.0);
    const bool ok = std::abs(s_same - 1.0) < 1e-12 && p_same == kPsnrCap &&
                    std::abs(p_one - kPsnrOneLevel) <= kPsnrOneLevelTol && f_same <= kFidSameTol &&
                    std::abs(f_shift - kFidAnalytic) <= kFidAnalyticTol;
    return {ok, "ssim(X,X)=" + fmt("%.12f", s_same) + " psnr(X,X)=" + fmt("%.1f", p_same) +
                    " psnr(1/255)=" + fmt("%.4f", p_one) + " fid(same)=" + fmt("%.3g", f_same) +
                    " fid(1-D shift 3)=" + fmt("%.9f", f_shift)};
}

// ---------------------------------------------------------------------------
// overfit runs on eight synthetic pairs

std::vector<TryOnSample> overfit_samples() {
    std::vector<TryOnSample> out;
    for (int64_t i = 0; i < kOverfitPairs; ++i) {
        auto rec = synth::generate(i, {});
        auto s = make_sample(rec.person, rec.clothing, rec.clothing_mask, rec.labels, rec.pose);
        s.person_name = std::to_string(i);
        out.push_back(std::move(s));
    }
    return out;
}

TrainConfig overfit_config(StageId stage) {
    auto c = TrainConfig::defaults(stage);
    c.steps = kOverfitMaxSteps;
    c.seed = 1;
    c.learning_rate = kOverfitLearningRate;
    return c;
}

void progress(const std::string& stage, int64_t step, const std::string& what) {
    std::cerr << "  [" << stage << " step " << step << "] " << what << std::endl;
}

Outcome overfit_pcw() {
    const auto samples = overfit_samples();
    const auto all = collate(samples);
    StageTrainer trainer(overfit_config(StageId::Pcw), samples);
    auto measure = [&] {
        torch::NoGradGuard no_grad;
        trainer.pcw()->eval();
        const auto out = trainer.pcw()->forward(all);
        return loss_gravity(out.warped_mask, all.gt_warp_mask, build_gravity_mask(all.gt_warp_mask)).item<double>();
    };
    const double initial = measure();
    double current = initial;
    while (trainer.steps_done() < kOverfitMaxSteps && current > kGravityRatio * initial) {
        trainer.step();
        if (trainer.steps_done() % kOverfitEvalEvery == 0) {
            current = measure();
            progress("pcw", trainer.steps_done(), "L_gra=" + fmt("%.5f", current));
        }
    }
    return {current <= kGravityRatio * initial,
            "steps=" + std::to_string(trainer.steps_done()) + " L_gra initial=" + fmt("%.5f", initial) +
                " final=" + fmt("%.5f", current) + " ratio=" + fmt("%.3f", current / initial)};
}

Outcome overfit_ppe() {
    const auto samples = overfit_samples();
    const auto all = collate(samples);
    const auto nonlimb = compose_nonlimb(all.parsing, all.gt_warp_mask);
    StageTrainer trainer(overfit_config(StageId::Ppe), samples);
    auto measure = [&] {
        torch::NoGradGuard no_grad;
        trainer.ppe()->eval();
        const auto p = predict_target_parsing(trainer.ppe(), nonlimb, all.occluded_person, all.occluded_parsing,
                                              all.keypoints, all.gt_warp_clothing);
        return parsing_accuracy(p, all.parsing);
    };
    const double initial = measure();
    double current = initial;
    while (trainer.steps_done() < kOverfitMaxSteps && current < kParsingAccuracy) {
        trainer.step();
        if (trainer.steps_done() % kOverfitEvalEvery == 0) {
            current = measure();
            progress("ppe", trainer.steps_done(), "accuracy=" + fmt("%.4f", current));
        }
    }
    return {current >= kParsingAccuracy, "steps=" + std::to_string(trainer.steps_done()) + " accuracy initial=" +
                                              fmt("%.4f", initial) + " final=" + fmt("%.4f", current)};
}

struct FusionScores {
    double ssim = 0.0;
    double psnr = 0.0;
};

// Kept after the LTF overfit for the limb-guidance probe.
std::unique_ptr<StageTrainer> g_ltf_trainer;

FusionScores fusion_scores(TextureFusion& net, const TryOnBatch& all, bool zero_limb = false,
                           torch::Tensor* fine_out = nullptr) {
    torch::NoGradGuard no_grad;
    net->eval();
    const auto out = net->forward(all.gt_warp_clothing, all.occluded_person, all.parsing, all.keypoints, all.person,
                                  zero_limb);
    FusionScores s;
    for (int64_t i = 0; i < all.size(); ++i) {
        s.ssim += ssim(out.fine[i], all.person[i]);
        s.psnr += psnr(out.fine[i], all.person[i]);
    }
    s.ssim /= static_cast<double>(all.size());
    s.psnr /= static_cast<double>(all.size());
    if (fine_out) *fine_out = out.fine;
    return s;
}

void train_ltf_once() {
    if (g_ltf_trainer) return;
    const auto samples = overfit_samples();
    const auto all = collate(samples);
    g_ltf_trainer = std::make_unique<StageTrainer>(overfit_config(StageId::Ltf), samples);
    auto& trainer = *g_ltf_trainer;
    auto s = fusion_scores(trainer.ltf(), all);
    while (trainer.steps_done() < kOverfitMaxSteps && !(s.ssim >= kFusionSsim && s.psnr >= kFusionPsnr)) {
        trainer.step();
        if (trainer.steps_done() % kOverfitEvalEvery == 0) {
            s = fusion_scores(trainer.ltf(), all);
            progress("ltf", trainer.steps_done(), "ssim=" + fmt("%.4f", s.ssim) + " psnr=" + fmt("%.2f", s.psnr));
        }
    }
}

Outcome overfit_ltf() {
    train_ltf_once();
    const auto all = collate(g_ltf_trainer->samples());
    const auto s = fusion_scores(g_ltf_trainer->ltf(), all);
    return {s.ssim >= kFusionSsim && s.psnr >= kFusionPsnr,
            "steps=" + std::to_string(g_ltf_trainer->steps_done()) + " ssim=" + fmt("%.4f", s.ssim) +
                " psnr=" + fmt("%.2f", s.psnr) + "dB"};
}

Outcome limb_liveness() {
    train_ltf_once();
    const auto all = collate(g_ltf_trainer->samples());
    torch::Tensor with, without;
    fusion_scores(g_ltf_trainer->ltf(), all, false, &with);
    fusion_scores(g_ltf_trainer->ltf(), all, true, &without);
    const double diff = (with - without).abs().mean().item<double>();
    return {diff > kLivenessDiff, "mean_abs_diff(I_f, I_f with zeroed L_p)=" + fmt("%.5f", diff)};
}

// ---------------------------------------------------------------------------

Outcome config_fidelity() {
    std::ostringstream d;
    bool ok = true;
    auto expect = [&](bool c, const std::string& what) {
        if (!c) {
            ok = false;
            d << "mismatch:" << what << ' ';
        }
    };
    const auto pcw = TrainConfig::defaults(StageId::Pcw);
    const auto ppe = TrainConfig::defaults(StageId::Ppe);
    const auto ltf = TrainConfig::defaults(StageId::Ltf);
    expect(pcw.pcw.loss.gravity == 1.0 && pcw.pcw.loss.perceptual == 8.0 && pcw.pcw.loss.tv == 0.1, "pcw weights");
    const std::array<double, 7> cw = {1, 1, 1, 3, 3, 3, 1};
    expect(ppe.ppe.class_weights.values == cw, "class weights");
    expect(ltf.ltf.loss.image == 1.0 && ltf.ltf.loss.perceptual == 2.0 && ltf.ltf.loss.edge == 0.4, "ltf weights");
    expect(ltf.ltf.patch_scale == 8, "patch scale");
    for (const auto* c : {&pcw, &ppe, &ltf}) {
        expect(c->batch_size == 4 && c->adam_beta1 == 0.5 && c->adam_beta2 == 0.999 && c->learning_rate == 1e-4,
               "optimizer " + stage_name(c->stage));
    }
    expect(TrainConfig::defaults(StageId::Pcw, Profile::Paper).steps == 60000 &&
               TrainConfig::defaults(StageId::Ppe, Profile::Paper).steps == 80000 &&
               TrainConfig::defaults(StageId::Ltf, Profile::Paper).steps == 80000,
           "full profile step counts");
    expect(lr_at(0, 100, 1e-4) == 1e-4 && lr_at(50, 100, 1e-4) == 1e-4 && std::abs(lr_at(75, 100, 1e-4) - 5e-5) < 1e-18 &&
               lr_at(100, 100, 1e-4) == 0.0,
           "lr schedule");

    const std::string snapshot =
        "adam.beta1 = 0.5\n"
        "adam.beta2 = 0.999\n"
        "batch_size = 4\n"
        "lr = 0.0001\n"
        "lr.schedule = constant_then_linear_decay\n"
        "ltf.loss.edge = 0.4\n"
        "ltf.loss.image = 1\n"
        "ltf.loss.perceptual = 2\n"
        "ltf.patch_scale = 8\n"
        "pcw.loss.gravity = 1\n"
        "pcw.loss.perceptual = 8\n"
        "pcw.loss.tv = 0.1\n"
        "ppe.class_weights = 1,1,1,3,3,3,1\n";
    std::string actual;
    {
        std::istringstream in(ltf.to_kv().to_text());
        std::string line;
        while (std::getline(in, line)) {
            const auto key = line.substr(0, line.find(" = "));
            if (snapshot.find(key + " = ") != std::string::npos && (key.rfind("ltf.loss", 0) == 0 ||
                key.rfind("pcw.loss", 0) == 0 || key.rfind("adam.", 0) == 0 || key == "batch_size" || key == "lr" ||
                key == "lr.schedule" || key == "ltf.patch_scale" || key == "ppe.class_weights"))
                actual += line + '\n';
        }
    }
    expect(actual == snapshot, "snapshot");
    if (actual != snapshot) d << "\n--- got\n" << actual;
    const auto reparsed = TrainConfig::from(KeyValueConfig::parse(ltf.to_kv().to_text()));
    expect(reparsed.to_kv().to_text() == ltf.to_kv().to_text(), "round trip");
    return {ok, ok ? "defaults, full profile step counts, lr schedule, snapshot and round trip match" : d.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Outcome determinism() {
    const auto root = fs::temp_directory_path() / ("plvton_accept_det_" + std::to_string(::getpid()));
    fs::remove_all(root);
    synth::SyntheticOptions small;
    small.height = 64;
    small.width = 48;
    synth::write_dataset(root / "data", 4, small);

    bool logs_equal = true;
    for (auto stage : {StageId::Pcw, StageId::Ppe, StageId::Ltf}) {
        std::string logs[2];
        for (int run = 0; run < 2; ++run) {
            auto c = TrainConfig::defaults(stage);
            c.steps = kDeterminismSteps;
            c.seed = 42;
            c.data_root = (root / "data").string();
            c.height = small.height;
            c.width = small.width;
            c.output_dir = (root / ("run" + std::to_string(run))).string();
            const auto result = train(c);
            logs[run] = slurp(result.log);
        }
        logs_equal = logs_equal && !logs[0].empty() && logs[0] == logs[1] &&
                     std::count(logs[0].begin(), logs[0].end(), '\n') == kDeterminismSteps;
        // fresh logs per stage
        fs::remove(root / "run0" / "train.log");
        fs::remove(root / "run1" / "train.log");
    }

    std::string reports[2];
    for (int run = 0; run < 2; ++run) {
        auto pipeline = TryOnPipeline::load(CheckpointPaths::in_directory(root / "run0"));
        auto dataset = VitonDataset::open(root / "data", "pairs.txt", small.height, small.width);
        BackboneEmbedder embedder;
        const auto report = evaluate(dataset, [&](const TryOnBatch& b) { return pipeline.run(b).fine; }, &embedder);
        const auto path = root / ("report" + std::to_string(run) + ".txt");
        write_report(path, report);
        reports[run] = slurp(path) + slurp(root / ("report" + std::to_string(run) + ".csv"));
    }
    const bool reports_equal = !reports[0].empty() && reports[0] == reports[1];
    fs::remove_all(root);
    return {logs_equal && reports_equal, std::string("train_logs(pcw,ppe,ltf x ") + std::to_string(kDeterminismSteps) +
                                             " steps)=" + (logs_equal ? "identical" : "differ") +
                                             " evaluate_reports=" + (reports_equal ? "identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"geometry_oracles", geometry},
        {"gru_oracle", gru},
        {"gravity_mask", gravity},
        {"loss_correctness", losses},
        {"structural_invariants", structure},
        {"metrics", metrics},
        {"overfit_pcw", overfit_pcw},
        {"overfit_ppe", overfit_ppe},
        {"overfit_ltf", overfit_ltf},
        {"config_fidelity", config_fidelity},
        {"determinism", determinism},
        {"limb_guidance_liveness", limb_liveness},
    };
    std::vector<std::string> filters(argv + 1, argv + argc);
    torch::set_num_threads(1);

    int failed = 0;
    int ran = 0;
    for (const auto& [name, run] : criteria) {
        if (!filters.empty() &&
            std::none_of(filters.begin(), filters.end(), [&](const std::string& f) { return name.find(f) != std::string::npos; }))
            continue;
        ++ran;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << " (" << fmt("%.1f", secs) << "s)"
                  << std::endl;
        if (!o.pass) ++failed;
    }
    std::cout << (failed == 0 ? "ALL PASS" : "FAILURES") << ": " << ran - failed << "/" << ran << std::endl;
    return failed == 0 ? 0 : 1;
}
