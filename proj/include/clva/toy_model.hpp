// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "clva/anchors.hpp"
#include "clva/layout.hpp"
#include "clva/matrix.hpp"
#include "clva/profiler.hpp"
#include "clva/reanchor.hpp"
#include "clva/trace.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace clva {

using TokenId = std::uint32_t;

struct ToyModelConfig {
    std::size_t layers = 8;
    std::size_t heads = 4;
    std::size_t model_dim = 32;
    std::size_t vocab = 64;
    TokenLayout layout = build_layout(2, 16, 6);
    std::uint64_t seed = 0;

    std::size_t head_dim() const { return heads == 0 ? 0 : model_dim / heads; }
};

/// Attention-only decoder: token embedding plus sinusoidal positions, then per
/// layer x += W_o * concat_h softmax(q k^T / sqrt(d)) v, and logits from the
/// tied embedding. No MLPs, no normalization.
class ToyModel {
public:
    struct LayerWeights {
        Matrix wq; ///< model_dim x model_dim, head h owns output columns [h*d, (h+1)*d)
        Matrix wk;
        Matrix wv;
        Matrix wo;
    };

    const ToyModelConfig& config() const { return cfg_; }
    const Matrix& embedding() const { return embedding_; }
    const std::vector<LayerWeights>& weights() const { return layers_; }

    friend ToyModel init_model(const ToyModelConfig& cfg);

private:
    ToyModelConfig cfg_;
    Matrix embedding_; ///< vocab x model_dim
    std::vector<LayerWeights> layers_;
};

/// Draws every weight from Rng(cfg.seed) in a fixed order: embedding, then per
/// layer wq, wk, wv, wo. Throws ArgumentError on invalid dimensions.
ToyModel init_model(const ToyModelConfig& cfg);

/// Intervention applied during generation. Anchors are derived from the clean
/// prefill with the given parameters.
struct GenerationHook {
    InterventionConfig cfg;
    double tau = kDefaultTau;
    double lambda_vis = kDefaultLambdaVis;
    double epsilon = kDefaultEpsilon;
    /// Default anchor layers when unset.
    std::optional<std::size_t> l_mid;
    std::optional<std::size_t> l_neg;
};

struct GenerationOptions {
    /// When false every step recomputes the full sequence from scratch.
    bool use_kv_cache = true;
};

struct GenerationResult {
    /// Generated tokens only, prompt excluded.
    std::vector<TokenId> tokens;
    /// Clean (un-intervened) prefill attention, with values.
    AttentionTrace prefill;
    /// Logits that selected each generated token.
    std::vector<std::vector<double>> step_logits;
    /// Anchors in effect at the end of generation, when a hook was given.
    std::optional<AnchorSet> anchors;
    std::optional<HeadProfile> profile;
};

/// Greedy decoding of `steps` tokens after the prompt. With a hook, text and
/// generated query rows of the affected layers are re-anchored before the
/// value product. Anchor refresh per step is only meaningful with the KV cache;
/// the recompute path always uses the prefill anchors.
GenerationResult run_generation(const ToyModel& model, std::span<const TokenId> prompt,
                                std::size_t steps,
                                const std::optional<GenerationHook>& hook = std::nullopt,
                                const GenerationOptions& options = {});

/// Deterministic prompt of layout.seq_len() tokens drawn from `seed`.
std::vector<TokenId> make_prompt(const ToyModelConfig& cfg, std::uint64_t seed);

/// Index of the first position where the sequences differ, or empty.
std::optional<std::size_t> first_divergence(std::span<const TokenId> a,
                                            std::span<const TokenId> b);

} // namespace clva
