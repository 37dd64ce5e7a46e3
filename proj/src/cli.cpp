// SPDX-License-Identifier: Apache-2.0

#include "clva/cli.hpp"

#include "clva/anchors.hpp"
#include "clva/diagnostics.hpp"
#include "clva/errors.hpp"
#include "clva/experiment.hpp"
#include "clva/heatmap.hpp"
#include "clva/profiler.hpp"
#include "clva/reanchor.hpp"
#include "clva/scenario.hpp"
#include "clva/serialize.hpp"
#include "clva/toy_model.hpp"
#include "clva/trace_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>

namespace clva {

namespace {

using nlohmann::json;

struct Options {
    std::string trace_path;
    std::string scenario;
    double alpha = kDefaultAlpha;
    double beta = kDefaultBeta;
    double tau = kDefaultTau;
    double lambda_vis = kDefaultLambdaVis;
    double epsilon = kDefaultEpsilon;
    std::string layers;
    std::string sign_mode = "standard";
    std::string placement = "decoder_self_attention";
    std::string anchor_refresh = "frozen";
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> l_mid;
    std::optional<std::size_t> l_neg;
    std::string out;

    // Subcommand-specific.
    std::string anchors_path;
    std::string report_path;
    std::string emit_trace;
    std::string drift_heads = "all";
    std::vector<double> alphas{0.0, 1.0, 4.0, 14.0};
    std::vector<double> betas{kDefaultBeta};
    std::size_t heatmap_layer = 0;
    std::string heatmap_heads = "sensitive";
    std::string grid;
    bool toy = false;
    std::size_t steps = 16;
};

/// "a..b", 1-indexed inclusive, or "none".
LayerRange parse_layer_range(const std::string& text) {
    if (text == "none") {
        return {0, 0};
    }
    const auto dots = text.find("..");
    if (dots == std::string::npos) {
        throw ArgumentError("--layers expects a..b (1-indexed, inclusive) or none, got '" +
                            text + "'");
    }
    try {
        std::size_t used_a = 0;
        std::size_t used_b = 0;
        const std::string a_text = text.substr(0, dots);
        const std::string b_text = text.substr(dots + 2);
        const unsigned long a = std::stoul(a_text, &used_a);
        const unsigned long b = std::stoul(b_text, &used_b);
        if (used_a != a_text.size() || used_b != b_text.size() || a == 0 || b < a) {
            throw std::invalid_argument("range");
        }
        return {a - 1, b};
    } catch (const std::logic_error&) {
        throw ArgumentError("--layers expects a..b with 1 <= a <= b, got '" + text + "'");
    }
}

std::pair<std::size_t, std::size_t> parse_grid(const std::string& text) {
    const auto x = text.find('x');
    try {
        if (x == std::string::npos) {
            throw std::invalid_argument("grid");
        }
        return {std::stoul(text.substr(0, x)), std::stoul(text.substr(x + 1))};
    } catch (const std::logic_error&) {
        throw ArgumentError("--grid expects ROWSxCOLS, got '" + text + "'");
    }
}

PipelineParams pipeline_params(const Options& o) {
    PipelineParams p;
    p.cfg.alpha = o.alpha;
    p.cfg.beta = o.beta;
    p.cfg.sign_mode = parse_sign_mode(o.sign_mode);
    p.cfg.placement = parse_placement(o.placement);
    p.cfg.anchor_refresh = parse_anchor_refresh(o.anchor_refresh);
    if (!o.layers.empty()) {
        p.cfg.layer_range = parse_layer_range(o.layers);
    }
    check_config(p.cfg);
    p.tau = o.tau;
    p.lambda_vis = o.lambda_vis;
    p.epsilon = o.epsilon;
    p.l_mid = o.l_mid;
    p.l_neg = o.l_neg;
    return p;
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open '" + path + "' for reading");
    }
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) {
        throw ValidationError("'" + path + "' is not valid JSON");
    }
    return doc;
}

DriftScenario load_scenario(const Options& o) {
    DriftScenario s;
    if (o.scenario != "default") {
        try {
            s = read_json_file(o.scenario).get<DriftScenario>();
        } catch (const json::exception& e) {
            throw ValidationError("scenario '" + o.scenario + "': " + e.what());
        }
    }
    if (o.seed) {
        s.seed = *o.seed;
    }
    return resolve_scenario(s);
}

/// Input trace from --trace or --scenario, plus the resolved scenario when
/// one was given.
struct Input {
    AttentionTrace trace;
    std::optional<DriftScenario> scenario;
};

Input load_input(const Options& o) {
    if (o.trace_path.empty() == o.scenario.empty()) {
        throw ArgumentError("exactly one of --trace or --scenario is required");
    }
    if (!o.trace_path.empty()) {
        return {read_trace_file(o.trace_path), std::nullopt};
    }
    DriftScenario s = load_scenario(o);
    return {make_scenario(s), s};
}

/// Writes text to --out when given, else to the console stream.
void emit_text(const Options& o, std::ostream& console,
               const std::function<void(std::ostream&)>& write) {
    if (o.out.empty()) {
        write(console);
        return;
    }
    std::ofstream file(o.out, std::ios::binary);
    if (!file) {
        throw IoError("cannot open '" + o.out + "' for writing");
    }
    write(file);
    if (!file) {
        throw IoError("write to '" + o.out + "' failed");
    }
}

void write_json(const std::string& path, const json& doc) {
    std::ofstream file(path, std::ios::binary);
    if (!file) {
        throw IoError("cannot open '" + path + "' for writing");
    }
    file << doc.dump(2) << '\n';
    if (!file) {
        throw IoError("write to '" + path + "' failed");
    }
}

AnchorOptions anchor_options(const Options& o, const AttentionTrace& trace,
                             const std::optional<DriftScenario>& scenario) {
    const AnchorLayers defaults = default_anchor_layers(trace.layers());
    AnchorOptions a;
    a.l_mid = o.l_mid.value_or(scenario && scenario->l_mid ? *scenario->l_mid : defaults.mid);
    a.l_neg = o.l_neg.value_or(defaults.neg);
    a.tau = o.tau;
    a.epsilon = o.epsilon;
    a.all_columns = parse_placement(o.placement) == Placement::compressor_cross_attention;
    return a;
}

AnchorSet load_or_derive_anchors(const Options& o, const Input& in, const HeadProfile& profile) {
    if (!o.anchors_path.empty()) {
        return parse_anchor_set(read_json_file(o.anchors_path));
    }
    return derive_anchor_set(in.trace, profile, anchor_options(o, in.trace, in.scenario));
}

int cmd_profile(const Options& o, std::ostream& out) {
    const Input in = load_input(o);
    const HeadProfile p = profile_trace(in.trace, o.lambda_vis);
    emit_text(o, out, [&](std::ostream& s) { export_intensity_matrix(p, s); });
    return exit_ok;
}

int cmd_anchors(const Options& o, std::ostream& out) {
    const Input in = load_input(o);
    const HeadProfile p = profile_trace(in.trace, o.lambda_vis);
    const AnchorSet a = derive_anchor_set(in.trace, p, anchor_options(o, in.trace, in.scenario));
    emit_text(o, out, [&](std::ostream& s) { s << json(a).dump(2) << '\n'; });
    return exit_ok;
}

int cmd_intervene(const Options& o, std::ostream&) {
    if (o.out.empty()) {
        throw ArgumentError("intervene requires --out <trace path>");
    }
    const Input in = load_input(o);
    const PipelineParams params = pipeline_params(o);
    const HeadProfile p = profile_trace(in.trace, o.lambda_vis);
    const AnchorSet a = load_or_derive_anchors(o, in, p);
    const InterventionOutcome r = apply_to_trace(in.trace, a, params.cfg);
    write_trace_file(r.trace, o.out);
    if (!o.report_path.empty()) {
        write_json(o.report_path, json(r.report));
    }
    return exit_ok;
}

int cmd_diagnose(const Options& o, std::ostream& out) {
    const Input in = load_input(o);
    const HeadProfile p = profile_trace(in.trace, o.lambda_vis);
    const AnchorSet a = load_or_derive_anchors(o, in, p);
    DriftOptions d;
    if (o.drift_heads == "all") {
        d.heads = DriftHeads::all;
    } else if (o.drift_heads == "sensitive") {
        d.heads = DriftHeads::sensitive;
    } else if (o.drift_heads == "insensitive") {
        d.heads = DriftHeads::insensitive;
    } else {
        throw ArgumentError("--heads must be all, sensitive or insensitive");
    }
    const DriftMetrics m = drift_report(in.trace, p, a, d);
    emit_text(o, out, [&](std::ostream& s) { export_drift_metrics(m, s); });
    return exit_ok;
}

int cmd_simulate_toy(const Options& o, std::ostream& out) {
    ToyModelConfig cfg;
    cfg.seed = o.seed.value_or(0);
    const ToyModel model = init_model(cfg);
    const auto prompt = make_prompt(cfg, cfg.seed + 1);
    GenerationHook hook;
    hook.cfg = pipeline_params(o).cfg;
    hook.tau = o.tau;
    hook.lambda_vis = o.lambda_vis;
    hook.epsilon = o.epsilon;
    hook.l_mid = o.l_mid;
    hook.l_neg = o.l_neg;
    const GenerationResult base = run_generation(model, prompt, o.steps);
    const GenerationResult steered = run_generation(model, prompt, o.steps, hook);
    const auto div = first_divergence(base.tokens, steered.tokens);
    json doc = {{"model", {{"layers", cfg.layers},
                           {"heads", cfg.heads},
                           {"model_dim", cfg.model_dim},
                           {"vocab", cfg.vocab},
                           {"seed", cfg.seed}}},
                {"config", hook.cfg},
                {"prompt", prompt},
                {"baseline_tokens", base.tokens},
                {"intervened_tokens", steered.tokens},
                {"first_divergence", div ? json(*div) : json(nullptr)},
                {"anchors", *steered.anchors}};
    if (!o.emit_trace.empty()) {
        write_trace_file(base.prefill, o.emit_trace);
    }
    emit_text(o, out, [&](std::ostream& s) { s << doc.dump(2) << '\n'; });
    return exit_ok;
}

int cmd_simulate(const Options& o, std::ostream& out) {
    if (o.toy) {
        return cmd_simulate_toy(o, out);
    }
    const PipelineParams params = pipeline_params(o);
    json doc;
    if (!o.scenario.empty() && o.trace_path.empty()) {
        const DriftScenario s = load_scenario(o);
        const ExperimentReport rep = run_experiment(s, params);
        if (!o.emit_trace.empty()) {
            write_trace_file(make_scenario(s), o.emit_trace);
        }
        doc = rep;
    } else {
        const Input in = load_input(o);
        const PipelineResult r = run_pipeline(in.trace, params);
        doc = {{"config", params.cfg},
               {"tau", params.tau},
               {"lambda_vis", params.lambda_vis},
               {"epsilon", params.epsilon},
               {"profile", r.profile},
               {"anchors", r.anchors},
               {"intervention", r.intervention.report},
               {"drift_pre", r.pre},
               {"drift_post", r.post}};
    }
    emit_text(o, out, [&](std::ostream& s) { s << doc.dump(2) << '\n'; });
    return exit_ok;
}

int cmd_sweep(const Options& o, std::ostream& out) {
    const PipelineParams params = pipeline_params(o);
    std::vector<SweepRow> rows;
    if (!o.scenario.empty() && o.trace_path.empty()) {
        rows = run_sweep(load_scenario(o), o.alphas, o.betas, params);
    } else {
        rows = run_sweep(load_input(o).trace, o.alphas, o.betas, params);
    }
    emit_text(o, out, [&](std::ostream& s) { export_sweep(rows, s); });
    return exit_ok;
}

int cmd_heatmap(const Options& o, std::ostream&) {
    if (o.out.empty()) {
        throw ArgumentError("heatmap requires --out <pgm path>");
    }
    const Input in = load_input(o);
    const HeadProfile p = profile_trace(in.trace, o.lambda_vis);
    if (o.heatmap_layer >= in.trace.layers()) {
        throw ArgumentError("--layer out of range");
    }
    HeatmapSpec spec;
    spec.layer = o.heatmap_layer;
    spec.heads = HeadSelector::parse(o.heatmap_heads);
    if (o.grid.empty()) {
        throw ArgumentError("heatmap requires --grid ROWSxCOLS");
    }
    std::tie(spec.rows, spec.cols) = parse_grid(o.grid);
    const SaliencyMap map = extract_saliency(in.trace, spec.layer, spec.heads.resolve(p, spec.layer));
    std::ofstream file(o.out, std::ios::binary);
    if (!file) {
        throw IoError("cannot open '" + o.out + "' for writing");
    }
    render_heatmap(map, spec, file);
    return exit_ok;
}

void add_common(CLI::App* cmd, Options& o) {
    cmd->add_option("--trace", o.trace_path, "CLVA-TRACE v1 input file");
    cmd->add_option("--scenario", o.scenario, "drift scenario JSON file, or 'default'");
    cmd->add_option("--alpha", o.alpha, "positive-anchor amplification")->capture_default_str();
    cmd->add_option("--beta", o.beta, "negative-anchor suppression")->capture_default_str();
    cmd->add_option("--tau", o.tau, "z-score significance threshold")->capture_default_str();
    cmd->add_option("--lambda-vis", o.lambda_vis, "head classification threshold")
        ->capture_default_str();
    cmd->add_option("--epsilon", o.epsilon, "z-score stability constant")->capture_default_str();
    cmd->add_option("--layers", o.layers, "affected layers a..b (1-indexed, inclusive) or none");
    cmd->add_option("--sign-mode", o.sign_mode, "standard | pos_only | neg_only | flipped")
        ->capture_default_str();
    cmd->add_option("--placement", o.placement,
                    "decoder_self_attention | compressor_cross_attention")
        ->capture_default_str();
    cmd->add_option("--anchor-refresh", o.anchor_refresh, "frozen | per_step (toy model only)")
        ->capture_default_str();
    cmd->add_option("--seed", o.seed, "override the scenario or toy-model seed");
    cmd->add_option("--l-mid", o.l_mid, "positive-anchor layer (0-based)");
    cmd->add_option("--l-neg", o.l_neg, "negative-anchor layer (0-based)");
    cmd->add_option("--out", o.out, "output path (stdout when omitted for text formats)");
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Cross-layer visual anchors: profile, re-anchor and diagnose attention traces"};
    app.require_subcommand(1);
    Options o;

    auto* profile = app.add_subcommand("profile", "per-head visual intensity matrix (CSV)");
    auto* anchors = app.add_subcommand("anchors", "positive/negative anchor set (JSON)");
    auto* intervene = app.add_subcommand("intervene", "re-anchor a trace and write it back");
    auto* diagnose = app.add_subcommand("diagnose", "per-layer entropy and drift correlation (CSV)");
    auto* simulate = app.add_subcommand("simulate", "end-to-end experiment report (JSON)");
    auto* sweep = app.add_subcommand("sweep", "alpha/beta sensitivity grid (CSV)");
    auto* heatmap = app.add_subcommand("heatmap", "saliency heatmap (binary PGM)");
    for (auto* cmd : {profile, anchors, intervene, diagnose, simulate, sweep, heatmap}) {
        add_common(cmd, o);
    }
    intervene->add_option("--anchors", o.anchors_path, "anchor JSON from the anchors command");
    intervene->add_option("--report", o.report_path, "write the intervention report (JSON)");
    diagnose->add_option("--anchors", o.anchors_path, "anchor JSON from the anchors command");
    diagnose->add_option("--heads", o.drift_heads, "all | sensitive | insensitive")
        ->capture_default_str();
    simulate->add_option("--emit-trace", o.emit_trace, "also write the input trace");
    simulate->add_flag("--toy", o.toy, "run the toy decoder instead of a scenario");
    simulate->add_option("--steps", o.steps, "toy decoding steps")->capture_default_str();
    sweep->add_option("--alphas", o.alphas, "alpha grid")->delimiter(',');
    sweep->add_option("--betas", o.betas, "beta grid")->delimiter(',');
    heatmap->add_option("--layer", o.heatmap_layer, "layer (0-based)")->capture_default_str();
    heatmap->add_option("--heads", o.heatmap_heads, "all | sensitive | insensitive | h0,h1,...")
        ->capture_default_str();
    heatmap->add_option("--grid", o.grid, "ROWSxCOLS with ROWS*COLS = visual tokens");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return exit_bad_arguments;
    }

    try {
        pipeline_params(o);
        if (profile->parsed()) return cmd_profile(o, out);
        if (anchors->parsed()) return cmd_anchors(o, out);
        if (intervene->parsed()) return cmd_intervene(o, out);
        if (diagnose->parsed()) return cmd_diagnose(o, out);
        if (simulate->parsed()) return cmd_simulate(o, out);
        if (sweep->parsed()) return cmd_sweep(o, out);
        if (heatmap->parsed()) return cmd_heatmap(o, out);
    } catch (const ValidationError& e) {
        err << "validation error: " << e.what() << '\n';
        return exit_validation;
    } catch (const IoError& e) {
        err << "io error: " << e.what() << '\n';
        return exit_io;
    } catch (const ArgumentError& e) {
        err << "bad arguments: " << e.what() << '\n';
        return exit_bad_arguments;
    } catch (const LayoutError& e) {
        err << "bad arguments: " << e.what() << '\n';
        return exit_bad_arguments;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_failure;
    }
    return exit_bad_arguments;
}

} // namespace clva
