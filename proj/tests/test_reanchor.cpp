// SPDX-License-Identifier: Apache-2.0

#include "clva/errors.hpp"
#include "clva/reanchor.hpp"
#include "clva/scenario.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace clva;

namespace {

AnchorSet masks_only(std::vector<std::uint8_t> pos, std::vector<std::uint8_t> neg,
                     std::size_t l_mid = 0) {
    AnchorSet a;
    a.pos_mask = std::move(pos);
    a.neg_mask = std::move(neg);
    a.l_mid = l_mid;
    return a;
}

InterventionConfig config(double alpha, double beta, SignMode mode = SignMode::standard) {
    InterventionConfig c;
    c.alpha = alpha;
    c.beta = beta;
    c.sign_mode = mode;
    return c;
}

oracle::Signs signs_of(SignMode m) {
    switch (m) {
    case SignMode::standard: return oracle::Signs::standard;
    case SignMode::pos_only: return oracle::Signs::pos_only;
    case SignMode::neg_only: return oracle::Signs::neg_only;
    case SignMode::flipped: return oracle::Signs::flipped;
    }
    return oracle::Signs::standard;
}

// Last row [sys 0.25 | vis 0.2 0.2 0.1 | txt 0.25].
Matrix hand_matrix() {
    return fixture::with_row(fixture::uniform_causal(5), 4, {0.25, 0.2, 0.2, 0.1, 0.25});
}

double row_sum(const Matrix& m, std::size_t i) {
    double s = 0.0;
    for (double v : m.row(i)) {
        s += v;
    }
    return s;
}

} // namespace

TEST_CASE("alpha and beta defaults") {
    InterventionConfig c;
    CHECK(c.alpha == 14.0);
    CHECK(c.beta == 0.9);
    CHECK(c.sign_mode == SignMode::standard);
    CHECK(c.placement == Placement::decoder_self_attention);
    CHECK(c.anchor_refresh == AnchorRefresh::frozen);
    CHECK(c.clamp_floor == 0.0);
}

TEST_CASE("zero alpha and beta is the identity") {
    const auto lay = build_layout(1, 3, 1);
    const Matrix a = hand_matrix();
    const auto r = reanchor_attention(a, lay, masks_only({1, 0, 0}, {0, 0, 1}), config(0, 0));
    CHECK(r.attn == a);
    for (const auto& row : r.rows) {
        CHECK_FALSE(row.touched);
    }
}

TEST_CASE("hand example") {
    const auto lay = build_layout(1, 3, 1);
    const auto r = reanchor_attention(hand_matrix(), lay, masks_only({1, 0, 0}, {0, 0, 1}),
                                      config(1.0, 0.5));
    REQUIRE(r.rows.size() == 1);
    CHECK(r.rows[0].row == 4);
    CHECK(r.rows[0].touched);
    CHECK(r.rows[0].normalizer == doctest::Approx(1.15).epsilon(1e-12));
    CHECK(r.attn(4, 1) == doctest::Approx(0.4 / 1.15).epsilon(1e-12));
    CHECK(r.attn(4, 2) == doctest::Approx(0.2 / 1.15).epsilon(1e-12));
    CHECK(r.attn(4, 3) == doctest::Approx(0.05 / 1.15).epsilon(1e-12));
    CHECK(std::round(r.attn(4, 1) * 1e4) / 1e4 == 0.3478);
    CHECK(std::round(r.attn(4, 2) * 1e4) / 1e4 == 0.1739);
    CHECK(std::round(r.attn(4, 3) * 1e4) / 1e4 == 0.0435);
    const double ling = r.attn(4, 0) + r.attn(4, 4);
    CHECK(std::round(ling * 1e4) / 1e4 == 0.4348);
    CHECK(r.rows[0].post.linguistic == doctest::Approx(ling));
    CHECK(r.rows[0].pre.linguistic == doctest::Approx(0.5));
    CHECK(r.rows[0].pre.pos == doctest::Approx(0.2));
    CHECK(r.rows[0].pre.neg == doctest::Approx(0.1));
    // sys and earlier rows untouched
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 5; ++j) {
            CHECK(r.attn(i, j) == hand_matrix()(i, j));
        }
    }
}

TEST_CASE("flipped signs suppress the positive and amplify the negative token") {
    const auto anchors = masks_only({1, 0, 0}, {0, 0, 1});
    const auto f = modulation_factors(anchors, config(1.0, 0.5, SignMode::flipped));
    CHECK(f == std::vector<double>{0.0, 1.0, 1.5});
    const auto r = reanchor_attention(hand_matrix(), build_layout(1, 3, 1), anchors,
                                      config(1.0, 0.5, SignMode::flipped));
    // modulated slice [0.0, 0.2, 0.15], row sum 0.85
    CHECK(r.rows[0].normalizer == doctest::Approx(0.85).epsilon(1e-12));
    CHECK(r.attn(4, 1) == 0.0);
    CHECK(r.attn(4, 2) == doctest::Approx(0.2 / 0.85).epsilon(1e-12));
    CHECK(r.attn(4, 3) == doctest::Approx(0.15 / 0.85).epsilon(1e-12));
}

TEST_CASE("sign modes") {
    const auto anchors = masks_only({1, 0, 1}, {0, 1, 1});
    CHECK(modulation_factors(anchors, config(2, 0.5)) == std::vector<double>{3.0, 0.5, 2.5});
    CHECK(modulation_factors(anchors, config(2, 0.5, SignMode::pos_only)) ==
          std::vector<double>{3.0, 1.0, 3.0});
    CHECK(modulation_factors(anchors, config(2, 0.5, SignMode::neg_only)) ==
          std::vector<double>{1.0, 0.5, 0.5});
    CHECK(modulation_factors(anchors, config(2, 0.5, SignMode::flipped)) ==
          std::vector<double>{0.0, 1.5, 0.0});
    CHECK(parse_sign_mode("pos_only") == SignMode::pos_only);
    CHECK(to_string(SignMode::flipped) == "flipped");
    CHECK_THROWS_AS(parse_sign_mode("sideways"), ArgumentError);
}

TEST_CASE("clamp floor guards large beta") {
    const auto anchors = masks_only({0, 0, 0}, {1, 0, 0});
    CHECK(modulation_factors(anchors, config(1, 3))[0] == 0.0);
    auto c = config(1, 3);
    c.clamp_floor = 0.1;
    CHECK(modulation_factors(anchors, c)[0] == 0.1);
}

TEST_CASE("configuration checks") {
    const auto lay = build_layout(1, 3, 1);
    CHECK_THROWS_AS(reanchor_attention(hand_matrix(), lay, masks_only({1, 0}, {0, 0}), config(1, 1)),
                    ArgumentError);
    CHECK_THROWS_AS(reanchor_attention(hand_matrix(), lay, masks_only({1, 0, 0}, {0, 0, 0}),
                                       config(-1, 1)),
                    ArgumentError);
    CHECK_THROWS_AS(reanchor_attention(hand_matrix(), lay, masks_only({1, 0, 0}, {0, 0, 0}),
                                       config(1, -0.5)),
                    ArgumentError);
}

TEST_CASE("reanchor matches the brute-force oracle") {
    Rng rng(808);
    for (int k = 0; k < 200; ++k) {
        const auto d = oracle::random_dims(rng);
        const auto t = oracle::random_trace(rng, d, false);
        const auto n = d.n_vis;
        const auto pos = oracle::random_mask(rng, n, 0.3);
        const auto neg = oracle::random_mask(rng, n, 0.3);
        const auto mode = static_cast<SignMode>(k % 4);
        auto cfg = config(rng.uniform() * 16.0, rng.uniform() * 1.5, mode);
        if (k % 7 == 0) {
            cfg.clamp_floor = 0.05;
        }
        const Matrix& a = t.attn(0, 0);
        const auto r = reanchor_attention(a, t.layout(), masks_only(pos, neg), cfg);
        const Matrix o = oracle::reanchor(a, t.layout().txt(), t.layout().vis(), pos, neg,
                                          cfg.alpha, cfg.beta, signs_of(mode), cfg.clamp_floor);
        CHECK(oracle::max_abs_diff(r.attn, o) <= 1e-9);
        for (const auto& row : r.rows) {
            if (row.touched) {
                CHECK(std::fabs(row_sum(r.attn, row.row) - 1.0) <= 1e-9);
            } else {
                CHECK(std::equal(a.row(row.row).begin(), a.row(row.row).end(),
                                 r.attn.row(row.row).begin()));
            }
        }
        for (std::size_t i = 0; i < t.layout().txt().begin; ++i) {
            CHECK(std::equal(a.row(i).begin(), a.row(i).end(), r.attn.row(i).begin()));
        }
    }
}

TEST_CASE("ratio law") {
    Rng rng(909);
    for (double alpha : {0.5, 1.0, 14.0}) {
        for (int k = 0; k < 50; ++k) {
            const auto d = oracle::random_dims(rng);
            const auto t = oracle::random_trace(rng, d, false);
            const auto pos = oracle::random_mask(rng, d.n_vis, 0.4);
            const auto neg = oracle::random_mask(rng, d.n_vis, 0.3);
            const auto anchors = masks_only(pos, neg);
            const auto cfg = config(alpha, 0.9);
            const Matrix& a = t.attn(0, 0);
            const auto once = reanchor_attention(a, t.layout(), anchors, cfg).attn;
            const auto twice = reanchor_attention(once, t.layout(), anchors, cfg).attn;
            const auto& lay = t.layout();
            for (std::size_t i = lay.txt().begin; i < lay.txt().end; ++i) {
                for (std::size_t j = lay.vis().begin; j < lay.vis().end; ++j) {
                    const std::size_t jj = j - lay.vis().begin;
                    if (!pos[jj] || neg[jj] || a(i, j) == 0.0) {
                        continue;
                    }
                    for (std::size_t u = 0; u <= i; ++u) {
                        const bool untouched =
                            !lay.vis().contains(u) ||
                            (!pos[u - lay.vis().begin] && !neg[u - lay.vis().begin]);
                        if (!untouched || a(i, u) == 0.0) {
                            continue;
                        }
                        const double pre = a(i, j) / a(i, u);
                        CHECK(std::fabs(once(i, j) / once(i, u) - (1 + alpha) * pre) <=
                              1e-9 * (1 + alpha) * pre);
                        CHECK(std::fabs(twice(i, j) / twice(i, u) -
                                        (1 + alpha) * (1 + alpha) * pre) <=
                              1e-9 * (1 + alpha) * (1 + alpha) * pre);
                    }
                }
            }
        }
    }
}

TEST_CASE("linguistic mass falls exactly when alpha P exceeds beta N") {
    Rng rng(1010);
    int decreased = 0;
    int kept = 0;
    for (int k = 0; k < 300; ++k) {
        const std::size_t n = 3 + k % 6;
        const auto lay = build_layout(1 + k % 2, n, 2);
        Matrix a = fixture::uniform_causal(lay.seq_len());
        const std::size_t last = lay.seq_len() - 1;
        double sum = 0.0;
        for (std::size_t j = 0; j <= last; ++j) {
            a(last, j) = 0.05 + rng.uniform();
            sum += a(last, j);
        }
        for (std::size_t j = 0; j <= last; ++j) {
            a(last, j) /= sum;
        }
        std::vector<std::uint8_t> pos(n, 0), neg(n, 0);
        for (std::size_t j = 0; j < n; ++j) {
            const double u = rng.uniform();
            pos[j] = u < 0.3;
            neg[j] = u >= 0.3 && u < 0.6;
        }
        const double alpha = rng.uniform() * 2.0;
        const double beta = rng.uniform();
        double p = 0.0, nn = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            p += pos[j] ? a(last, lay.vis().begin + j) : 0.0;
            nn += neg[j] ? a(last, lay.vis().begin + j) : 0.0;
        }
        if (std::fabs(alpha * p - beta * nn) < 1e-12) {
            continue;
        }
        const auto r = reanchor_attention(a, lay, masks_only(pos, neg), config(alpha, beta));
        const auto& rep = r.rows.back();
        const bool fell = rep.post.linguistic < rep.pre.linguistic;
        CHECK(fell == (alpha * p > beta * nn));
        (fell ? decreased : kept)++;
    }
    CHECK(decreased > 50);
    CHECK(kept > 20);
}

TEST_CASE("overlapping tokens receive one plus alpha minus beta") {
    const auto f = modulation_factors(masks_only({1, 1}, {1, 0}), config(14, 0.9));
    CHECK(f[0] == doctest::Approx(14.1));
    CHECK(f[1] == 15.0);
}

TEST_CASE("averaged anchors") {
    const auto f = averaged_factors({{1, 0}, {0, 0}}, 2.0, 0.0);
    CHECK(f == std::vector<double>{2.0, 1.0});
    CHECK_THROWS_AS(averaged_factors({}, 1, 1), ArgumentError);
    CHECK_THROWS_AS(averaged_factors({{1, 0}, {1}}, 1, 1), ArgumentError);

    const auto lay = build_layout(1, 3, 1);
    const Matrix a = hand_matrix();
    CHECK(reanchor_averaged(a, lay, {{1, 0, 1}, {0, 1, 1}}, 0.7, 0.7) == a);

    const auto same = reanchor_averaged(a, lay, {{1, 0, 0}, {1, 0, 0}, {1, 0, 0}}, 3.0, 0.0);
    const auto direct = reanchor_attention(a, lay, masks_only({1, 0, 0}, {0, 0, 1}),
                                           config(3.0, 0.9, SignMode::pos_only));
    CHECK(oracle::max_abs_diff(same, direct.attn) <= 1e-15);
}

TEST_CASE("per-head masks come from each head's own saliency") {
    const auto t = make_scenario(resolve_scenario(DriftScenario{}));
    const auto masks = per_head_masks(t, 1);
    REQUIRE(masks.size() == t.heads());
    for (std::size_t h = 0; h < t.heads(); ++h) {
        CHECK(masks[h] == zscore_mask(extract_saliency(t, 1, {h}).values).mask);
    }
    CHECK(masks[1][5] == 1);
}

TEST_CASE("compressor placement modulates every row over every column") {
    const auto lay = build_layout(1, 2, 1);
    const Matrix a = fixture::uniform_causal(4);
    InterventionConfig c = config(1.0, 0.0);
    c.placement = Placement::compressor_cross_attention;
    const auto r = reanchor_attention(a, lay, masks_only({1, 0, 0, 0}, {0, 0, 0, 0}), c);
    REQUIRE(r.rows.size() == 4);
    CHECK(r.attn(0, 0) == 1.0);
    CHECK(r.attn(1, 0) == doctest::Approx(2.0 / 3.0));
    CHECK(r.attn(1, 1) == doctest::Approx(1.0 / 3.0));
    CHECK(r.attn(3, 0) == doctest::Approx(0.4));
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(row_sum(r.attn, i) == doctest::Approx(1.0).epsilon(1e-12));
        for (std::size_t j = i + 1; j < 4; ++j) {
            CHECK(r.attn(i, j) == 0.0);
        }
    }
    CHECK_THROWS_AS(reanchor_attention(a, lay, masks_only({1, 0}, {0, 0}), c), ArgumentError);
}

TEST_CASE("empty layer range leaves the trace bitwise unchanged") {
    const auto t = make_scenario(resolve_scenario(DriftScenario{}));
    auto c = config(14, 0.9);
    c.layer_range = LayerRange{3, 3};
    const auto out = apply_to_trace(t, masks_only(std::vector<std::uint8_t>(16, 1),
                                                  std::vector<std::uint8_t>(16, 0), 1),
                                    c);
    CHECK(out.trace == t);
    CHECK(out.report.rows_touched == 0);
    CHECK(out.report.layers.empty());
}

TEST_CASE("default range runs from after the positive layer to the end") {
    const std::size_t L = 32;
    const auto lay = build_layout(0, 2, 1);
    std::vector<Matrix> attn(L, fixture::uniform_causal(3));
    const AttentionTrace t(L, 1, 0, lay, attn);
    const auto anchors = masks_only({1, 0}, {0, 1}, default_anchor_layers(L).mid);
    const auto out = apply_to_trace(t, anchors, config(14, 0.9));
    CHECK(out.report.range == LayerRange{14, 32});
    REQUIRE(out.report.layers.size() == 18);
    // 1-indexed layers 15..32
    CHECK(out.report.layers.front().layer + 1 == 15);
    CHECK(out.report.layers.back().layer + 1 == 32);
    for (std::size_t l = 0; l < 14; ++l) {
        CHECK(out.trace.attn(l, 0) == t.attn(l, 0));
    }
    for (std::size_t l = 14; l < 32; ++l) {
        CHECK(out.trace.attn(l, 0) != t.attn(l, 0));
    }
    auto c = config(14, 0.9);
    c.layer_range = LayerRange{0, 33};
    CHECK_THROWS_AS(apply_to_trace(t, anchors, c), ArgumentError);
}

TEST_CASE("apply_to_trace on the default scenario") {
    const auto spec = resolve_scenario(DriftScenario{});
    const auto t = make_scenario(spec);
    const auto p = profile_trace(t);
    const auto anchors = derive_anchor_set(t, p, 1, 0);
    const auto out = apply_to_trace(t, anchors, InterventionConfig{});
    const std::size_t last = spec.layers - 1;
    CHECK(region_mass(out.trace, last, spec.gt_region) > region_mass(t, last, spec.gt_region));
    CHECK(out.trace.validate().empty());
    CHECK(out.trace.all_values() == t.all_values());
    for (const auto& r : out.report.rows) {
        CHECK(std::fabs(row_sum(out.trace.attn(r.layer, r.head), r.row) - 1.0) <= 1e-9);
    }
    for (std::size_t l = 0; l <= 1; ++l) {
        for (std::size_t h = 0; h < t.heads(); ++h) {
            CHECK(out.trace.attn(l, h) == t.attn(l, h));
        }
    }
    for (const auto& lr : out.report.layers) {
        CHECK(lr.post.pos > lr.pre.pos);
        CHECK(lr.post.neg < lr.pre.neg);
    }
}
