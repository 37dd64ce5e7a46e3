// SPDX-License-Identifier: Apache-2.0

#include "clva/errors.hpp"
#include "clva/experiment.hpp"
#include "clva/scenario.hpp"
#include "clva/toy_model.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace clva;

namespace {

std::size_t argmax(const std::vector<double>& v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

bool contains(const std::vector<std::size_t>& v, std::size_t x) {
    return std::find(v.begin(), v.end(), x) != v.end();
}

GenerationHook hook_with(double alpha, double beta) {
    GenerationHook h;
    h.cfg.alpha = alpha;
    h.cfg.beta = beta;
    return h;
}

} // namespace

TEST_CASE("same seed gives the same model and attention") {
    ToyModelConfig cfg;
    cfg.seed = 42;
    const auto a = init_model(cfg);
    const auto b = init_model(cfg);
    CHECK(a.embedding() == b.embedding());
    const auto prompt = make_prompt(cfg, 1);
    const auto ra = run_generation(a, prompt, 0);
    const auto rb = run_generation(b, prompt, 0);
    CHECK(ra.prefill.attn(0, 0) == rb.prefill.attn(0, 0));
    CHECK(ra.prefill == rb.prefill);
}

TEST_CASE("different seeds give different attention") {
    ToyModelConfig c1;
    c1.seed = 1;
    ToyModelConfig c2;
    c2.seed = 2;
    const auto prompt = make_prompt(c1, 9);
    const auto r1 = run_generation(init_model(c1), prompt, 0);
    const auto r2 = run_generation(init_model(c2), prompt, 0);
    CHECK(oracle::max_abs_diff(r1.prefill.attn(0, 0), r2.prefill.attn(0, 0)) > 1e-6);
}

TEST_CASE("default toy dimensions produce a valid trace") {
    ToyModelConfig cfg;
    CHECK(cfg.layers == 8);
    CHECK(cfg.heads == 4);
    CHECK(cfg.model_dim == 32);
    CHECK(cfg.vocab == 64);
    CHECK(cfg.layout == build_layout(2, 16, 6));
    const auto r = run_generation(init_model(cfg), make_prompt(cfg, 3), 0);
    CHECK(r.tokens.empty());
    CHECK(r.prefill.layers() == 8);
    CHECK(r.prefill.heads() == 4);
    CHECK(r.prefill.head_dim() == 8);
    CHECK(r.prefill.seq_len() == 24);
    CHECK(r.prefill.has_values());
    CHECK(r.prefill.validate().empty());
    for (const Matrix& a : r.prefill.all_attn()) {
        for (std::size_t i = 0; i < a.rows(); ++i) {
            for (std::size_t j = i + 1; j < a.cols(); ++j) {
                CHECK(a(i, j) == 0.0);
            }
        }
    }
}

TEST_CASE("invalid model configurations") {
    ToyModelConfig cfg;
    cfg.model_dim = 30;
    CHECK_THROWS_AS(init_model(cfg), ArgumentError);
    cfg = ToyModelConfig{};
    cfg.vocab = 0;
    CHECK_THROWS_AS(init_model(cfg), ArgumentError);
}

TEST_CASE("prompt checks") {
    ToyModelConfig cfg;
    const auto m = init_model(cfg);
    auto prompt = make_prompt(cfg, 1);
    prompt[0] = 64;
    CHECK_THROWS_AS(run_generation(m, prompt, 2), ArgumentError);
    prompt.pop_back();
    CHECK_THROWS_AS(run_generation(m, prompt, 2), ArgumentError);
}

TEST_CASE("zero-strength hook leaves generations token-identical") {
    for (std::uint64_t seed : {0u, 1u, 2u, 3u, 4u}) {
        ToyModelConfig cfg;
        cfg.seed = seed;
        const auto m = init_model(cfg);
        const auto prompt = make_prompt(cfg, seed + 100);
        const auto base = run_generation(m, prompt, 16);
        const auto hooked = run_generation(m, prompt, 16, hook_with(0, 0));
        CHECK(base.tokens == hooked.tokens);
        CHECK(base.step_logits == hooked.step_logits);
        auto per_step = hook_with(0, 0);
        per_step.cfg.anchor_refresh = AnchorRefresh::per_step;
        CHECK(run_generation(m, prompt, 16, per_step).tokens == base.tokens);
    }
}

TEST_CASE("first divergence under default strengths is pinned") {
    ToyModelConfig cfg;
    cfg.seed = 0;
    const auto m = init_model(cfg);
    const auto prompt = make_prompt(cfg, 100);
    const auto base = run_generation(m, prompt, 16);
    const auto hooked = run_generation(m, prompt, 16, hook_with(14, 0.9));
    const auto again = run_generation(m, prompt, 16, hook_with(14, 0.9));
    CHECK(hooked.tokens == again.tokens);
    const auto d = first_divergence(base.tokens, hooked.tokens);
    REQUIRE(d.has_value());
    CHECK(*d == 11);
    REQUIRE(hooked.anchors.has_value());
    REQUIRE(hooked.profile.has_value());
    CHECK(hooked.anchors->l_mid == 1);
    CHECK(hooked.anchors->l_neg == 0);
    // the recorded prefill is the clean pass in both runs
    CHECK(hooked.prefill == base.prefill);
}

TEST_CASE("KV cache matches full recompute") {
    for (std::uint64_t seed : {0u, 5u, 11u}) {
        ToyModelConfig cfg;
        cfg.seed = seed;
        const auto m = init_model(cfg);
        const auto prompt = make_prompt(cfg, seed);
        GenerationOptions recompute;
        recompute.use_kv_cache = false;
        for (const auto& hook : {std::optional<GenerationHook>{}, std::optional(hook_with(14, 0.9))}) {
            const auto cached = run_generation(m, prompt, 16, hook);
            const auto full = run_generation(m, prompt, 16, hook, recompute);
            REQUIRE(cached.step_logits.size() == 16);
            REQUIRE(full.step_logits.size() == 16);
            CHECK(cached.tokens == full.tokens);
            double worst = 0.0;
            for (std::size_t s = 0; s < 16; ++s) {
                for (std::size_t v = 0; v < cfg.vocab; ++v) {
                    worst = std::max(worst,
                                     std::fabs(cached.step_logits[s][v] - full.step_logits[s][v]));
                }
            }
            CHECK(worst <= 1e-6);
        }
    }
}

TEST_CASE("per-step anchor refresh is deterministic") {
    ToyModelConfig cfg;
    const auto m = init_model(cfg);
    const auto prompt = make_prompt(cfg, 100);
    auto hook = hook_with(14, 0.9);
    hook.cfg.anchor_refresh = AnchorRefresh::per_step;
    const auto a = run_generation(m, prompt, 8, hook);
    const auto b = run_generation(m, prompt, 8, hook);
    CHECK(a.tokens == b.tokens);
    CHECK(a.tokens.size() == 8);
}

TEST_CASE("scenario defaults and validation") {
    const auto s = resolve_scenario(DriftScenario{});
    CHECK(s.layers == 8);
    CHECK(s.n_vis == 16);
    CHECK(s.gt_region == std::vector<std::size_t>{5});
    CHECK(s.noise_region == std::vector<std::size_t>{0, 3, 12});
    CHECK(s.l_mid == 1);
    CHECK(s.gamma[1] == 0.0);
    CHECK(s.gamma.back() == doctest::Approx(0.85));
    for (std::size_t l = 1; l + 1 < s.layers; ++l) {
        CHECK(s.gamma[l + 1] > s.gamma[l]);
    }
    DriftScenario bad;
    bad.noise_region = {5, 7};
    CHECK_THROWS_AS(resolve_scenario(bad), ValidationError);
    CHECK_THROWS_AS(make_scenario(bad), ValidationError);
}

TEST_CASE("scenario traces validate and are seed-deterministic") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        DriftScenario s;
        s.seed = seed;
        const auto a = make_scenario(s);
        CHECK(a.validate().empty());
        CHECK(a == make_scenario(s));
    }
    DriftScenario s1, s2;
    s2.seed = s1.seed + 1;
    CHECK_FALSE(make_scenario(s1) == make_scenario(s2));
}

TEST_CASE("scenario region concentration") {
    const auto s = resolve_scenario(DriftScenario{});
    const auto t = make_scenario(s);
    const std::size_t last = t.seq_len() - 1;
    const std::size_t v0 = t.layout().vis().begin;
    // insensitive head: C_noise scaled by its visual mass
    const Matrix& a = t.attn(0, 2);
    double vis = 0.0, noise = 0.0;
    for (std::size_t j = 0; j < s.n_vis; ++j) {
        vis += a(last, v0 + j);
        noise += contains(s.noise_region, j) ? a(last, v0 + j) : 0.0;
    }
    CHECK(noise / vis >= 0.8);
    // sensitive head at the positive layer: C_gt
    const Matrix& b = t.attn(1, 1);
    vis = 0.0;
    double gt = 0.0;
    for (std::size_t j = 0; j < s.n_vis; ++j) {
        vis += b(last, v0 + j);
        gt += contains(s.gt_region, j) ? b(last, v0 + j) : 0.0;
    }
    CHECK(gt / vis >= 0.8);
    CHECK(1.0 - vis == doctest::Approx(s.rho[1]).epsilon(1e-9));
}

TEST_CASE("no-drift limit keeps the argmax on the ground truth") {
    DriftScenario s;
    s.gamma.assign(s.layers, 0.0);
    const auto t = make_scenario(s);
    const auto spec = resolve_scenario(s);
    const std::size_t last = s.layers - 1;
    const auto m = extract_saliency(t, last, spec.sensitive_heads[last]);
    CHECK(contains(s.gt_region, argmax(m.values)));

    const auto rep = run_experiment(s, InterventionConfig{});
    const auto post = extract_saliency(rep.pipeline.intervention.trace, last,
                                       spec.sensitive_heads[last]);
    CHECK(contains(s.gt_region, argmax(post.values)));
}

TEST_CASE("full drift correlates with the noise reference") {
    DriftScenario s;
    s.gamma.assign(s.layers, 0.0);
    s.gamma.back() = 1.0;
    const auto spec = resolve_scenario(s);
    const auto t = make_scenario(spec);
    const std::size_t last = s.layers - 1;
    const auto fin = extract_saliency(t, last, spec.sensitive_heads[last]).values;
    const auto noise_ref = extract_saliency(t, 0, spec.insensitive_heads[0]).values;
    const auto gt_ref = extract_saliency(t, *spec.l_mid, spec.sensitive_heads[*spec.l_mid]).values;
    CHECK(*pearson(fin, noise_ref) > *pearson(fin, gt_ref));
}

TEST_CASE("experiment directions") {
    const DriftScenario s;
    const auto standard = run_experiment(s, InterventionConfig{});
    CHECK(standard.gt_mass_post > standard.gt_mass_pre);
    CHECK(standard.noise_mass_post < standard.noise_mass_pre);
    CHECK(*standard.r_neg_post < *standard.r_neg_pre);
    REQUIRE(standard.decomposition_pre.has_value());
    CHECK(standard.decomposition_post->linguistic_norm <
          standard.decomposition_pre->linguistic_norm);
    CHECK(standard.decomposition_post->visual_norm > standard.decomposition_pre->visual_norm);

    InterventionConfig flipped;
    flipped.sign_mode = SignMode::flipped;
    const auto f = run_experiment(s, flipped);
    CHECK(f.gt_mass_post <= f.gt_mass_pre);

    InterventionConfig zero;
    zero.alpha = 0.0;
    zero.beta = 0.0;
    const auto z = run_experiment(s, zero);
    CHECK(z.gt_mass_post == z.gt_mass_pre);
    CHECK(z.noise_mass_post == z.noise_mass_pre);
    CHECK(z.r_neg_post == z.r_neg_pre);
    CHECK(z.pipeline.intervention.trace == make_scenario(s));
}

TEST_CASE("experiment matches a brute-force mass recomputation") {
    const DriftScenario s;
    const auto rep = run_experiment(s, InterventionConfig{});
    const auto& post = rep.pipeline.intervention.trace;
    const std::size_t last = s.layers - 1;
    const std::size_t row = post.seq_len() - 1;
    const std::size_t v0 = post.layout().vis().begin;
    long double total = 0.0L;
    for (std::size_t h = 0; h < post.heads(); ++h) {
        for (std::size_t j : s.gt_region) {
            total += post.attn(last, h)(row, v0 + j);
        }
    }
    CHECK(std::fabs(rep.gt_mass_post - static_cast<double>(total / post.heads())) <= 1e-12);
}
