// SPDX-License-Identifier: Apache-2.0

#include "clva/toy_model.hpp"

#include "clva/errors.hpp"
#include "clva/rng.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace clva {

namespace {

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
    Matrix m(rows, cols);
    for (double& v : m.data()) {
        v = rng.normal() * scale;
    }
    return m;
}

/// Per (layer, head) key and value rows of every processed position.
struct KvCache {
    std::vector<std::vector<double>> keys;
    std::vector<std::vector<double>> values;
    std::size_t length = 0;

    KvCache(std::size_t layers, std::size_t heads) : keys(layers * heads), values(layers * heads) {}
};

struct Recorder {
    std::vector<Matrix> attn;
    std::vector<Matrix> values;
};

/// Re-anchoring state carried through a generation.
struct Modulator {
    InterventionConfig cfg;
    LayerRange range;
    AnchorSet anchors;
    HeadProfile profile;
    std::vector<double> factors;
    bool refresh = false;
};

void refresh_anchor(Modulator& mod, std::size_t layer, const std::vector<std::vector<double>>& rows,
                    const TokenLayout& layout) {
    const bool is_neg = layer == mod.anchors.l_neg;
    const bool is_mid = layer == mod.anchors.l_mid;
    if (!is_neg && !is_mid) {
        return;
    }
    auto average = [&](const HeadSet& heads, std::size_t row_index) {
        SaliencyMap m;
        m.values.assign(layout.n_vis(), 0.0);
        m.source_layer = layer;
        m.source_heads = heads;
        m.query_row = row_index;
        for (std::size_t h : heads) {
            for (std::size_t j = 0; j < layout.n_vis(); ++j) {
                m.values[j] += rows[h][layout.vis().begin + j];
            }
        }
        for (double& v : m.values) {
            v /= static_cast<double>(heads.size());
        }
        return m;
    };
    const std::size_t row_index = rows.front().size() - 1;
    SaliencyMap pos = is_mid ? average(mod.profile.sens[layer], row_index) : mod.anchors.pos_map;
    SaliencyMap neg = is_neg ? average(mod.profile.insens[layer], row_index) : mod.anchors.neg_map;
    remask(mod.anchors, std::move(pos), std::move(neg));
    mod.factors = modulation_factors(mod.anchors, mod.cfg);
}

/// Runs positions [first_new, tokens.size()) through the model on top of the
/// cached prefix and returns the final hidden state of the last position.
std::vector<double> process(const ToyModel& model, std::span<const TokenId> tokens,
                            std::size_t first_new, KvCache& cache, Modulator* mod,
                            Recorder* rec) {
    const ToyModelConfig& cfg = model.config();
    const std::size_t D = cfg.model_dim;
    const std::size_t H = cfg.heads;
    const std::size_t d = cfg.head_dim();
    const std::size_t T = tokens.size();
    const TokenLayout& layout = cfg.layout;
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));

    std::vector<std::vector<double>> x(T - first_new, std::vector<double>(D));
    for (std::size_t p = first_new; p < T; ++p) {
        auto& xp = x[p - first_new];
        const auto emb = model.embedding().row(tokens[p]);
        for (std::size_t k = 0; k < D; ++k) {
            const double freq = std::pow(10000.0, -static_cast<double>(k - k % 2) /
                                                      static_cast<double>(D));
            const double angle = static_cast<double>(p) * freq;
            xp[k] = emb[k] + (k % 2 == 0 ? std::sin(angle) : std::cos(angle));
        }
    }

    if (rec) {
        rec->attn.assign(cfg.layers * H, Matrix(T, T));
        rec->values.assign(cfg.layers * H, Matrix(T, d));
    }

    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const auto& w = model.weights()[l];
        std::vector<std::vector<double>> queries(T - first_new, std::vector<double>(D, 0.0));
        for (std::size_t p = first_new; p < T; ++p) {
            const auto& xp = x[p - first_new];
            std::vector<double> k_row(D, 0.0);
            std::vector<double> v_row(D, 0.0);
            auto& q_row = queries[p - first_new];
            for (std::size_t a = 0; a < D; ++a) {
                for (std::size_t b = 0; b < D; ++b) {
                    q_row[b] += xp[a] * w.wq(a, b);
                    k_row[b] += xp[a] * w.wk(a, b);
                    v_row[b] += xp[a] * w.wv(a, b);
                }
            }
            for (std::size_t h = 0; h < H; ++h) {
                auto& keys = cache.keys[l * H + h];
                auto& vals = cache.values[l * H + h];
                keys.insert(keys.end(), k_row.begin() + h * d, k_row.begin() + (h + 1) * d);
                vals.insert(vals.end(), v_row.begin() + h * d, v_row.begin() + (h + 1) * d);
            }
        }

        std::vector<std::vector<double>> concat(T - first_new, std::vector<double>(D, 0.0));
        for (std::size_t p = first_new; p < T; ++p) {
            // rows[h] is the attention row of position p for head h.
            std::vector<std::vector<double>> rows(H, std::vector<double>(p + 1));
            for (std::size_t h = 0; h < H; ++h) {
                const auto& keys = cache.keys[l * H + h];
                const double* q = queries[p - first_new].data() + h * d;
                auto& a = rows[h];
                double max_logit = -INFINITY;
                for (std::size_t j = 0; j <= p; ++j) {
                    double s = 0.0;
                    for (std::size_t k = 0; k < d; ++k) {
                        s += q[k] * keys[j * d + k];
                    }
                    a[j] = s * scale;
                    max_logit = std::max(max_logit, a[j]);
                }
                double z = 0.0;
                for (double& v : a) {
                    v = std::exp(v - max_logit);
                    z += v;
                }
                for (double& v : a) {
                    v /= z;
                }
            }

            if (mod) {
                if (mod->refresh && first_new > 0 && p + 1 == T) {
                    refresh_anchor(*mod, l, rows, layout);
                }
                if (mod->range.contains(l) && p >= layout.txt().begin) {
                    for (auto& a : rows) {
                        reanchor_row(a, layout.vis(), mod->factors);
                    }
                }
            }

            for (std::size_t h = 0; h < H; ++h) {
                const auto& vals = cache.values[l * H + h];
                const auto& a = rows[h];
                for (std::size_t j = 0; j <= p; ++j) {
                    for (std::size_t k = 0; k < d; ++k) {
                        concat[p - first_new][h * d + k] += a[j] * vals[j * d + k];
                    }
                }
                if (rec) {
                    std::copy(a.begin(), a.end(), rec->attn[l * H + h].row(p).begin());
                    const double* v = vals.data() + p * d;
                    std::copy(v, v + d, rec->values[l * H + h].row(p).begin());
                }
            }
        }

        for (std::size_t p = first_new; p < T; ++p) {
            auto& xp = x[p - first_new];
            const auto& c = concat[p - first_new];
            for (std::size_t a = 0; a < D; ++a) {
                for (std::size_t b = 0; b < D; ++b) {
                    xp[b] += c[a] * w.wo(a, b);
                }
            }
        }
    }
    cache.length = T;
    return x.back();
}

std::vector<double> unembed(const ToyModel& model, const std::vector<double>& hidden) {
    const Matrix& e = model.embedding();
    const double scale = 1.0 / std::sqrt(static_cast<double>(e.cols()));
    std::vector<double> logits(e.rows(), 0.0);
    for (std::size_t t = 0; t < e.rows(); ++t) {
        const auto row = e.row(t);
        double s = 0.0;
        for (std::size_t k = 0; k < row.size(); ++k) {
            s += row[k] * hidden[k];
        }
        logits[t] = s * scale;
    }
    return logits;
}

} // namespace

ToyModel init_model(const ToyModelConfig& cfg) {
    if (cfg.layers == 0 || cfg.heads == 0 || cfg.model_dim == 0 || cfg.vocab == 0) {
        throw ArgumentError("toy model: all dimensions must be positive");
    }
    if (cfg.model_dim % cfg.heads != 0) {
        throw ArgumentError("toy model: model_dim " + std::to_string(cfg.model_dim) +
                            " is not divisible by " + std::to_string(cfg.heads) + " heads");
    }
    if (cfg.layout.seq_len() == 0) {
        throw ArgumentError("toy model: empty layout");
    }
    ToyModel m;
    m.cfg_ = cfg;
    Rng rng(cfg.seed);
    const std::size_t D = cfg.model_dim;
    const double proj = 1.0 / std::sqrt(static_cast<double>(D));
    m.embedding_ = random_matrix(rng, cfg.vocab, D, 1.0);
    m.layers_.reserve(cfg.layers);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        ToyModel::LayerWeights w;
        w.wq = random_matrix(rng, D, D, proj);
        w.wk = random_matrix(rng, D, D, proj);
        w.wv = random_matrix(rng, D, D, proj);
        w.wo = random_matrix(rng, D, D, proj);
        m.layers_.push_back(std::move(w));
    }
    return m;
}

std::vector<TokenId> make_prompt(const ToyModelConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<TokenId> prompt(cfg.layout.seq_len());
    for (auto& t : prompt) {
        t = static_cast<TokenId>(rng.next() % cfg.vocab);
    }
    return prompt;
}

std::optional<std::size_t> first_divergence(std::span<const TokenId> a,
                                            std::span<const TokenId> b) {
    const std::size_t n = std::min(a.size(), b.size());
    for (std::size_t k = 0; k < n; ++k) {
        if (a[k] != b[k]) {
            return k;
        }
    }
    if (a.size() != b.size()) {
        return n;
    }
    return std::nullopt;
}

GenerationResult run_generation(const ToyModel& model, std::span<const TokenId> prompt,
                                std::size_t steps, const std::optional<GenerationHook>& hook,
                                const GenerationOptions& options) {
    const ToyModelConfig& cfg = model.config();
    if (prompt.size() != cfg.layout.seq_len()) {
        throw ArgumentError("run_generation: prompt has " + std::to_string(prompt.size()) +
                            " tokens, layout expects " + std::to_string(cfg.layout.seq_len()));
    }
    for (TokenId t : prompt) {
        if (t >= cfg.vocab) {
            throw ArgumentError("run_generation: token " + std::to_string(t) +
                                " is outside the vocabulary");
        }
    }

    GenerationResult result;
    std::vector<TokenId> seq(prompt.begin(), prompt.end());

    KvCache cache(cfg.layers, cfg.heads);
    Recorder rec;
    std::vector<double> hidden = process(model, seq, 0, cache, nullptr, &rec);
    TraceMeta meta;
    meta.model_id = "toy-decoder";
    meta.notes = "seed=" + std::to_string(cfg.seed);
    result.prefill = AttentionTrace(cfg.layers, cfg.heads, cfg.head_dim(), cfg.layout,
                                    std::move(rec.attn), std::move(rec.values), std::move(meta));

    std::optional<Modulator> mod;
    if (hook) {
        if (hook->cfg.placement != Placement::decoder_self_attention) {
            throw ArgumentError("run_generation: the toy model only supports the decoder "
                                "self-attention placement");
        }
        const AnchorLayers defaults = default_anchor_layers(cfg.layers);
        AnchorOptions opt;
        opt.l_mid = hook->l_mid.value_or(defaults.mid);
        opt.l_neg = hook->l_neg.value_or(defaults.neg);
        opt.tau = hook->tau;
        opt.epsilon = hook->epsilon;
        Modulator m;
        m.cfg = hook->cfg;
        m.profile = profile_trace(result.prefill, hook->lambda_vis);
        m.anchors = derive_anchor_set(result.prefill, m.profile, opt);
        m.range = resolve_layer_range(m.cfg, m.anchors, cfg.layers);
        m.factors = modulation_factors(m.anchors, m.cfg);
        m.refresh = m.cfg.anchor_refresh == AnchorRefresh::per_step && options.use_kv_cache;
        mod = std::move(m);

        cache = KvCache(cfg.layers, cfg.heads);
        hidden = process(model, seq, 0, cache, &*mod, nullptr);
    }

    for (std::size_t step = 0; step < steps; ++step) {
        auto logits = unembed(model, hidden);
        const auto best = static_cast<TokenId>(std::max_element(logits.begin(), logits.end()) -
                                               logits.begin());
        result.step_logits.push_back(std::move(logits));
        result.tokens.push_back(best);
        seq.push_back(best);
        if (step + 1 == steps) {
            break;
        }
        Modulator* m = mod ? &*mod : nullptr;
        if (options.use_kv_cache) {
            hidden = process(model, seq, seq.size() - 1, cache, m, nullptr);
        } else {
            KvCache fresh(cfg.layers, cfg.heads);
            hidden = process(model, seq, 0, fresh, m, nullptr);
        }
    }

    if (mod) {
        result.anchors = mod->anchors;
        result.profile = mod->profile;
    }
    return result;
}

} // namespace clva
