#include "cgt/cli.hpp"

#include "cgt/baselines.hpp"
#include "cgt/checkpoint.hpp"
#include "cgt/data.hpp"
#include "cgt/error.hpp"
#include "cgt/explainer.hpp"
#include "cgt/hash.hpp"
#include "cgt/metrics.hpp"
#include "cgt/retrain.hpp"
#include "cgt/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

namespace cgt::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Logging: one key=value line per event on stderr.

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

struct Logger {
    Level level = Level::info;
    std::string command;
    std::mutex mutex;

    void log(Level l, const std::string& msg) {
        if (static_cast<int>(l) > static_cast<int>(level)) return;
        static const char* names[] = {"error", "warn", "info", "debug"};
        std::lock_guard<std::mutex> lock(mutex);
        std::cerr << "level=" << names[static_cast<int>(l)] << " cmd=" << (command.empty() ? "-" : command)
                  << " msg=\"" << msg << "\"\n";
    }
};

Logger& logger() {
    static Logger l;
    return l;
}

void info(const std::string& m) { logger().log(Level::info, m); }
void warn(const std::string& m) { logger().log(Level::warn, m); }

Level parse_level(const std::string& s) {
    if (s == "error") return Level::error;
    if (s == "warn") return Level::warn;
    if (s == "info") return Level::info;
    if (s == "debug") return Level::debug;
    throw ConfigError("unknown log level '" + s + "'");
}

std::string num(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

// ---------------------------------------------------------------------------
// Run context: output directory, recorded inputs/outputs, manifest.

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + p.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + p.string());
    out << content;
}

struct RunContext {
    std::string command;
    std::vector<std::string> args;  // without --out/--config
    std::optional<std::string> config_text;
    fs::path out;
    std::vector<fs::path> inputs;
    std::vector<std::string> outputs;  // relative to `out`

    void input(const fs::path& p) {
        if (!fs::is_regular_file(p)) throw ConfigError("missing input file " + p.string());
        inputs.push_back(fs::absolute(p).lexically_normal());
    }
    fs::path output(const std::string& name) {
        outputs.push_back(name);
        return out / name;
    }

    void write_manifest() const {
        json in = json::array();
        for (const auto& p : inputs) in.push_back({{"path", p.string()}, {"git_blob", git_blob_hash(read_file(p))}});
        json outs = json::array();
        for (const auto& name : outputs) {
            outs.push_back({{"path", name}, {"git_blob", git_blob_hash(read_file(out / name))}});
        }
        const json m = {{"schema", "cgt.manifest/1"},
                        {"command", command},
                        {"args", args},
                        {"config_text", config_text ? json(*config_text) : json(nullptr)},
                        {"cwd", fs::current_path().string()},
                        {"inputs", in},
                        {"outputs", outs}};
        write_file(out / "manifest.json", m.dump(2) + "\n");
    }
};

std::vector<std::string> strip_run_flags(const std::vector<std::string>& args) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < args.size(); ++i) {
        const auto& a = args[i];
        if (a == "--out" || a == "-o" || a == "--config") {
            ++i;
            continue;
        }
        if (a.rfind("--out=", 0) == 0 || a.rfind("--config=", 0) == 0) continue;
        out.push_back(a);
    }
    return out;
}

fs::path default_out(const std::string& command) {
    const char* root = std::getenv(kOutputRootEnv);
    return fs::path(root && *root ? root : "runs") / command;
}

// ---------------------------------------------------------------------------
// Shared option groups

struct DataOptions {
    std::string data_dir;
    std::string adjacency;
    std::string flow;
    std::string dataset;
    std::size_t window = 12;
    std::size_t channels = 1;
    std::size_t semantic_k = 3;
    bool gcn_self_loops = false;
    bool no_attention_self_loops = false;
};

void add_data_options(CLI::App* app, DataOptions& d, bool graph_options) {
    app->add_option("--data", d.data_dir, "Directory holding adjacency.csv and flow.csv");
    app->add_option("--adjacency", d.adjacency, "Adjacency CSV (from,to,cost)");
    app->add_option("--flow", d.flow, "Flow CSV (one row per step, N*C columns)");
    app->add_option("--dataset", d.dataset, "Dataset label used in reports (default: data directory name)");
    if (graph_options) {
        app->add_option("--window", d.window, "Input/target length T")->capture_default_str();
        app->add_option("--channels", d.channels, "Channels per node")->capture_default_str();
        app->add_option("--semantic-k", d.semantic_k, "Semantic neighbours per node")->capture_default_str();
        app->add_flag("--gcn-self-loops", d.gcn_self_loops, "Add the identity to A_GCN");
        app->add_flag("--no-attention-self-loops", d.no_attention_self_loops,
                      "Do not let nodes attend to themselves");
    }
}

json data_options_json(const DataOptions& d) {
    return {{"window", d.window},
            {"channels", d.channels},
            {"semantic_k", d.semantic_k},
            {"gcn_self_loops", d.gcn_self_loops},
            {"attention_self_loops", !d.no_attention_self_loops}};
}

void apply_data_json(DataOptions& d, const json& j) {
    if (!j.is_object() || !j.contains("window")) return;
    d.window = j.at("window").get<std::size_t>();
    d.channels = j.at("channels").get<std::size_t>();
    d.semantic_k = j.at("semantic_k").get<std::size_t>();
    d.gcn_self_loops = j.at("gcn_self_loops").get<bool>();
    d.no_attention_self_loops = !j.at("attention_self_loops").get<bool>();
}

std::string dataset_label(const DataOptions& d) {
    if (!d.dataset.empty()) return d.dataset;
    if (!d.data_dir.empty()) {
        const auto name = fs::path(d.data_dir).lexically_normal().filename().string();
        if (!name.empty() && name != ".") return name;
    }
    return "dataset";
}

DatasetBundle load_data(const DataOptions& d, RunContext& ctx) {
    fs::path adj = d.adjacency, flow = d.flow;
    if (adj.empty() && !d.data_dir.empty()) adj = fs::path(d.data_dir) / "adjacency.csv";
    if (flow.empty() && !d.data_dir.empty()) flow = fs::path(d.data_dir) / "flow.csv";
    if (adj.empty() || flow.empty()) throw ConfigError("no dataset: pass --data DIR or --adjacency and --flow");
    ctx.input(adj);
    ctx.input(flow);
    IngestOptions opts;
    opts.window = d.window;
    opts.channels = d.channels;
    opts.graph.semantic_k = d.semantic_k;
    opts.graph.gcn_self_loops = d.gcn_self_loops;
    opts.graph.attention_self_loops = !d.no_attention_self_loops;
    DatasetBundle b = ingest_csv(adj, flow, opts);
    for (const auto& w : b.warnings) warn(w);
    info("loaded nodes=" + std::to_string(b.graph.n_nodes) + " edges=" + std::to_string(b.graph.edge_count()) +
         " windows=" + std::to_string(b.train.size()) + "/" + std::to_string(b.val.size()) + "/" +
         std::to_string(b.test.size()));
    return b;
}

struct TrainOptions {
    TrainConfig config;
    void add(CLI::App* app) {
        app->add_option("--epochs", config.epochs, "Training epochs")->capture_default_str();
        app->add_option("--batch-size", config.batch_size, "Windows per Adam step")->capture_default_str();
        app->add_option("--lr", config.learning_rate, "Adam learning rate")->capture_default_str();
        app->add_option("--windows-per-epoch", config.windows_per_epoch, "Training windows per epoch (0 = all)")
            ->capture_default_str();
    }
};

// Loads a checkpoint and the dataset it was trained with.
struct ModelAndData {
    Model model;
    DatasetBundle bundle;
};

ModelAndData load_model_and_data(const std::string& model_path, DataOptions data, RunContext& ctx) {
    if (model_path.empty()) throw ConfigError("--model is required");
    ctx.input(model_path);
    json extra;
    Model model = load_checkpoint(model_path, &extra);
    apply_data_json(data, extra.value("data", json::object()));
    DatasetBundle b = load_data(data, ctx);
    if (model.config().nodes != 0 && model.config().nodes != b.graph.n_nodes) {
        throw ConfigError("model expects " + std::to_string(model.config().nodes) + " nodes, dataset has " +
                          std::to_string(b.graph.n_nodes));
    }
    return {std::move(model), std::move(b)};
}

std::vector<std::uint64_t> parse_seeds(const std::string& s, std::uint64_t fallback) {
    if (s.empty()) return {fallback};
    std::vector<std::uint64_t> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        const auto dash = tok.find('-');
        try {
            if (dash != std::string::npos && dash > 0) {
                const auto lo = std::stoull(tok.substr(0, dash));
                const auto hi = std::stoull(tok.substr(dash + 1));
                if (hi < lo) throw ConfigError("bad seed range '" + tok + "'");
                for (auto v = lo; v <= hi; ++v) out.push_back(v);
            } else {
                out.push_back(std::stoull(tok));
            }
        } catch (const std::logic_error&) {
            throw ConfigError("bad seed list '" + s + "'");
        }
    }
    if (out.empty()) throw ConfigError("empty seed list");
    return out;
}

unsigned parse_targets(const std::string& s) {
    if (s == "all") return mask_all;
    unsigned t = 0;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok == "gcn") t |= mask_gcn;
        else if (tok == "geo") t |= mask_geo;
        else if (tok == "sem") t |= mask_sem;
        else throw ConfigError("unknown mask target '" + tok + "' (expected all or gcn,geo,sem)");
    }
    if (t == 0) throw ConfigError("no mask targets");
    return t;
}

std::vector<NodePair> parse_pairs(const std::string& s) {
    std::vector<NodePair> out;
    if (s.empty()) return out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        const auto sep = tok.find_first_of("-:>");
        if (sep == std::string::npos) throw ConfigError("bad edge '" + tok + "' (expected a-b)");
        try {
            out.emplace_back(std::stoull(tok.substr(0, sep)), std::stoull(tok.substr(sep + 1)));
        } catch (const std::logic_error&) {
            throw ConfigError("bad edge '" + tok + "'");
        }
    }
    return out;
}

std::vector<std::size_t> parse_indices(const std::string& s) {
    std::vector<std::size_t> out;
    if (s.empty()) return out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            out.push_back(std::stoull(tok));
        } catch (const std::logic_error&) {
            throw ConfigError("bad index '" + tok + "'");
        }
    }
    return out;
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads; results keep index order.
template <class T, class F>
std::vector<T> parallel_map(std::size_t n, std::size_t jobs, F&& fn) {
    std::vector<std::optional<T>> slots(n);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                slots[i].emplace(fn(i));
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::max<std::size_t>(1, std::min(jobs, n));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
    std::vector<T> out;
    out.reserve(n);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

std::size_t structural_count(const GraphSpec& g, Dimension dim, std::size_t window) {
    return dim == Dimension::spatial ? structural_pairs(g).size() : window;
}

void write_explanations(RunContext& ctx, const std::vector<CounterfactualResult>& results,
                        const std::string& dataset, std::size_t k, bool traces) {
    for (const auto& r : results) {
        const std::string stem = "seed" + std::to_string(r.seed);
        write_result_json(r, ctx.output("result_" + stem + ".json"));
        if (traces) write_trace_csv(r, ctx.output("trace_" + stem + ".csv"));
        for (const auto& w : r.warnings) warn(stem + ": " + w);
        info(stem + " valid=" + (r.valid ? std::string("1") : "0") + " size=" + std::to_string(r.size()) +
             " delta_mae=" + num(r.delta_mae()) + " loss_pred=" + num(r.loss_pred));
    }
    const ExplanationReport report = make_report(results, k);
    for (const auto& w : report.warnings) warn(w);
    write_report_csv(report, dataset, ctx.output("report.csv"));
    write_file(ctx.output("report.json"), to_json(report).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Commands

struct SynthOptions {
    SyntheticSpec spec;
    std::string planted_edges;
    std::string planted_slices;
};

void run_synth(RunContext& ctx, SynthOptions& o) {
    o.spec.planted_edges = parse_pairs(o.planted_edges);
    o.spec.planted_slices = parse_indices(o.planted_slices);
    const DatasetBundle b = generate(o.spec);
    for (const auto& w : b.warnings) warn(w);
    export_csv(b, ctx.output("adjacency.csv"), ctx.output("flow.csv"));
    json planted = json::array();
    for (const auto& [a, c] : o.spec.planted_edges) planted.push_back({a, c});
    const json meta = {{"schema", "cgt.synth/1"},
                       {"nodes", o.spec.n_nodes},
                       {"edges", b.graph.edge_count()},
                       {"planted_edges", planted},
                       {"planted_slices", o.spec.planted_slices},
                       {"edge_lag", o.spec.edge_lag == 0 ? o.spec.window : o.spec.edge_lag},
                       {"signal_strength", o.spec.signal_strength},
                       {"noise_std", o.spec.noise_std},
                       {"persistence", o.spec.persistence},
                       {"series_length", o.spec.series_length},
                       {"window", o.spec.window},
                       {"channels", o.spec.channels},
                       {"seed", o.spec.seed}};
    write_file(ctx.output("synth.json"), meta.dump(2) + "\n");
    info("synthesized nodes=" + std::to_string(o.spec.n_nodes) + " edges=" + std::to_string(b.graph.edge_count()));
}

struct TrainCmd {
    DataOptions data;
    TrainOptions train;
    ModelConfig model;
    std::uint64_t seed = 0;
};

void run_train(RunContext& ctx, TrainCmd& o) {
    const DatasetBundle b = load_data(o.data, ctx);
    o.model.window = o.data.window;
    o.model.channels = o.data.channels;
    o.model.nodes = b.graph.n_nodes;
    o.model.seed = o.seed;
    o.train.config.seed = o.seed;
    const auto t0 = std::chrono::steady_clock::now();
    const TrainResult tr = train(Model(o.model), b, o.train.config);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    info("trained epochs=" + std::to_string(tr.curve.size()) + " best_epoch=" + std::to_string(tr.best_epoch) +
         " val_mse=" + num(tr.best_val_loss) + " seconds=" + num(secs));
    save_checkpoint(tr.model, ctx.output("model.json"), {{"data", data_options_json(o.data)}});
    write_curve_csv(tr.curve, ctx.output("curve.csv"));
    const PredictionReport test = evaluate_test(tr.model, b);
    const json summary = {{"schema", "cgt.train/1"},
                          {"best_epoch", tr.best_epoch},
                          {"best_val_loss", tr.best_val_loss},
                          {"initial_val_loss", tr.initial_val_loss},
                          {"test", to_json(test)}};
    write_file(ctx.output("train.json"), summary.dump(2) + "\n");
    info("test mae=" + num(test.mae) + " rmse=" + num(test.rmse));
}

struct ExplainCmd {
    DataOptions data;
    std::string model;
    ExplainerConfig config;
    std::string dimension = "spatial";
    std::string beta_mode = "absolute";
    std::string targets = "all";
    std::string seeds;
    std::uint64_t seed = 0;
    std::size_t windows = 8;
    std::size_t jobs = 1;
};

void add_explainer_options(CLI::App* app, ExplainCmd& o) {
    add_data_options(app, o.data, false);
    app->add_option("--model", o.model, "Trained checkpoint (model.json)")->required();
    app->add_option("--seed", o.seed, "Run seed")->capture_default_str();
    app->add_option("--seeds", o.seeds, "Seed list, e.g. 1-10 or 1,4,7 (overrides --seed)");
    app->add_option("--windows", o.windows, "Test windows per explanation")->capture_default_str();
    app->add_option("--jobs", o.jobs, "Parallel runs across seeds")->capture_default_str();
    app->add_option("--threshold", o.config.threshold, "Mask threshold tau")->capture_default_str();
    app->add_option("--validity-fraction", o.config.validity_fraction,
                    "tau_v as a fraction of MAE(Y_hat, Y)")->capture_default_str();
    app->add_option("--validity-epsilon", o.config.validity_epsilon,
                    "Absolute tau_v in flow units (0 = use the fraction)")->capture_default_str();
    app->add_option("--targets", o.targets, "Masked adjacencies: all or a list of gcn,geo,sem")->capture_default_str();
    app->add_option("--beta", o.config.beta, "Distance weight")->capture_default_str();
    app->add_option("--beta-mode", o.beta_mode, "absolute or relative")->capture_default_str();
    app->add_option("--alpha", o.config.alpha, "Mask learning rate")->capture_default_str();
    app->add_option("--iterations", o.config.iterations, "Optimization steps")->capture_default_str();
    app->add_option("--init", o.config.init, "Initial mask value")->capture_default_str();
    app->add_option("--jitter", o.config.jitter, "Seeded uniform logit jitter")->capture_default_str();
}

std::vector<CounterfactualResult> run_many(const ExplainCmd& o, const ModelAndData& md,
                                           const std::function<CounterfactualResult(const ExplainerConfig&,
                                                                                    const std::vector<FlowWindow>&)>& fn) {
    const auto seeds = parse_seeds(o.seeds, o.seed);
    return parallel_map<CounterfactualResult>(seeds.size(), o.jobs, [&](std::size_t i) {
        ExplainerConfig cfg = o.config;
        cfg.seed = seeds[i];
        const auto windows = sample_windows(md.bundle.test, o.windows, seeds[i]);
        return fn(cfg, windows);
    });
}

void run_explain(RunContext& ctx, ExplainCmd& o) {
    o.config.dimension = parse_dimension(o.dimension);
    o.config.beta_mode = parse_beta_mode(o.beta_mode);
    o.config.targets = parse_targets(o.targets);
    o.config.validate();
    if (o.windows == 0) throw ConfigError("--windows must be positive");
    const ModelAndData md = load_model_and_data(o.model, o.data, ctx);
    const auto results = run_many(o, md, [&](const ExplainerConfig& cfg, const std::vector<FlowWindow>& w) {
        return search(md.model, md.bundle.graph, w, md.bundle.stats, cfg);
    });
    write_explanations(ctx, results, dataset_label(o.data),
                       structural_count(md.bundle.graph, o.config.dimension, md.model.config().window), true);
}

struct BaselineCmd {
    ExplainCmd base;
    std::string kind = "random";
    std::optional<std::size_t> top_k;
    std::optional<std::size_t> center;
};

void run_baseline(RunContext& ctx, BaselineCmd& o) {
    const BaselineKind kind = parse_baseline_kind(o.kind);
    o.base.config.targets = parse_targets(o.base.targets);
    o.base.config.beta_mode = parse_beta_mode(o.base.beta_mode);
    o.base.config.dimension = Dimension::spatial;
    o.base.config.validate();
    if (o.base.windows == 0) throw ConfigError("--windows must be positive");
    const ModelAndData md = load_model_and_data(o.base.model, o.base.data, ctx);
    const auto results = run_many(o.base, md, [&](const ExplainerConfig& cfg, const std::vector<FlowWindow>& w) {
        switch (kind) {
            case BaselineKind::random: return random_explain(md.model, md.bundle.graph, w, md.bundle.stats, cfg);
            case BaselineKind::one_hop:
                return one_hop_explain(md.model, md.bundle.graph, w, md.bundle.stats, cfg, o.center);
            case BaselineKind::attention_score: {
                std::size_t k = 0;
                if (o.top_k) {
                    k = *o.top_k;
                } else {
                    k = search_spatial(md.model, md.bundle.graph, w, md.bundle.stats, cfg).size();
                    info("seed" + std::to_string(cfg.seed) + " top_k from CGT explanation: " + std::to_string(k));
                }
                return attention_explain(md.model, md.bundle.graph, w, md.bundle.stats, cfg, k);
            }
        }
        throw ConfigError("unknown baseline");
    });
    write_explanations(ctx, results, dataset_label(o.base.data), structural_pairs(md.bundle.graph).size(), false);
}

struct RetrainCmd {
    DataOptions data;
    std::string model;
    std::string result;
    EmbeddingConfig embedding;
    TrainOptions train;
    bool warm_start = false;
};

void run_retrain(RunContext& ctx, RetrainCmd& o) {
    o.embedding.validate();
    const ModelAndData md = load_model_and_data(o.model, o.data, ctx);
    std::vector<NodePair> edges;
    std::vector<std::size_t> slices;
    if (!o.result.empty()) {
        ctx.input(o.result);
        const CounterfactualResult r = read_result_json(o.result);
        if (!r.valid) warn("explanation is not a valid counterfactual; retraining without embedding");
        edges = key_edges(r);
        slices = key_slices(r);
    }
    info("embedding edges=" + std::to_string(edges.size()) + " slices=" + std::to_string(slices.size()));
    const DatasetBundle embedded = embed_explanation(md.bundle, edges, slices, o.embedding);
    o.train.config.seed = md.model.config().seed;
    RetrainOptions ro;
    ro.warm_start = o.warm_start;
    const RetrainResult rr = retrain(md.model, md.bundle, embedded, o.train.config, ro);
    json extra = {{"data", data_options_json(o.data)}};
    {
        json ck_extra;
        load_checkpoint(o.model, &ck_extra);
        if (ck_extra.contains("data")) extra["data"] = ck_extra["data"];
    }
    save_checkpoint(rr.model, ctx.output("model.json"), extra);
    write_curve_csv(rr.training.curve, ctx.output("curve.csv"));
    json summary = to_json(rr);
    summary["gamma_edge"] = o.embedding.gamma_edge;
    summary["gamma_time"] = o.embedding.gamma_time;
    summary["renormalize"] = o.embedding.renormalize;
    summary["warm_start"] = o.warm_start;
    write_file(ctx.output("retrain.json"), summary.dump(2) + "\n");
    write_side_by_side_csv(rr, ctx.output("side_by_side.csv"));
    info("baseline mae=" + num(rr.baseline.mae) + " retrained mae=" + num(rr.retrained.mae));
}

struct EvalCmd {
    std::string truth;
    std::string pred;
    double mape_epsilon = kMapeEpsilon;
    DataOptions data;
    std::string model;
    std::string result;
};

Tensor read_matrix_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw IngestionError(path.string() + ": empty file (header row required)");
    std::size_t columns = 1;
    for (char ch : line) columns += ch == ',' ? 1 : 0;
    std::vector<double> values;
    std::size_t rows = 0, line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t count = 0;
        while (std::getline(ss, cell, ',')) {
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (cell.empty() || end == cell.c_str() || *end != '\0') {
                throw IngestionError(path.string() + ":" + std::to_string(line_no) + ": non-numeric cell '" + cell +
                                     "'");
            }
            values.push_back(v);
            ++count;
        }
        if (count != columns) {
            throw IngestionError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                                 std::to_string(columns) + " cells, got " + std::to_string(count));
        }
        ++rows;
    }
    if (rows == 0) throw IngestionError(path.string() + ": no data rows");
    return Tensor({rows, columns}, std::move(values));
}

void run_eval(RunContext& ctx, EvalCmd& o) {
    json out = {{"schema", "cgt.eval/1"}};
    if (!o.truth.empty() || !o.pred.empty()) {
        if (o.truth.empty() || o.pred.empty()) throw ConfigError("--truth and --pred go together");
        ctx.input(o.truth);
        ctx.input(o.pred);
        const Tensor y = read_matrix_csv(o.truth);
        const Tensor p = read_matrix_csv(o.pred);
        if (y.shape() != p.shape()) {
            throw DimensionError("truth " + shape_str(y.shape()) + " vs prediction " + shape_str(p.shape()));
        }
        PredictionReport r = prediction_metrics(y, p, o.mape_epsilon, "file");
        r.horizon = y.dim(0);
        out["files"] = to_json(r);
        info("mae=" + num(r.mae) + " rmse=" + num(r.rmse));
    } else {
        const ModelAndData md = load_model_and_data(o.model, o.data, ctx);
        const PredictionReport base = evaluate_test(md.model, md.bundle);
        out["test"] = to_json(base);
        info("test mae=" + num(base.mae));
        if (!o.result.empty()) {
            ctx.input(o.result);
            const CounterfactualResult r = read_result_json(o.result);
            ForwardOptions opts;
            opts.targets = r.params.value("targets", static_cast<unsigned>(mask_all));
            if (r.dimension == Dimension::spatial) opts.mask_s = r.mask.tensor();
            else opts.mask_f = r.mask.tensor();
            const PredictionReport pert = evaluate_test(md.model, md.bundle, opts);
            out["perturbed"] = to_json(pert);
            info("perturbed test mae=" + num(pert.mae));
        }
    }
    write_file(ctx.output("eval.json"), out.dump(2) + "\n");
}

struct ReportCmd {
    std::vector<std::string> inputs;
};

void run_report(RunContext& ctx, ReportCmd& o) {
    std::vector<ReportRow> rows;
    for (const auto& p : o.inputs) {
        ctx.input(p);
        const auto r = read_report_csv(p);
        rows.insert(rows.end(), r.begin(), r.end());
    }
    std::vector<std::size_t> counts;
    const auto agg = aggregate_rows(rows, &counts);
    write_comparison_csv(rows, ctx.output("comparison.csv"));
    json table = json::array();
    for (std::size_t i = 0; i < agg.size(); ++i) {
        table.push_back({{"dataset", agg[i].dataset},
                         {"explainer", agg[i].explainer},
                         {"runs", counts[i]},
                         {"fidelity", agg[i].fidelity},
                         {"e_size", agg[i].e_size},
                         {"sparsity", agg[i].sparsity},
                         {"delta_mae", agg[i].delta_mae}});
        if (agg[i].sparsity < 0.0) warn(agg[i].dataset + "/" + agg[i].explainer + ": sparsity below 0");
    }
    write_file(ctx.output("comparison.json"), json({{"schema", "cgt.comparison/1"}, {"rows", table}}).dump(2) + "\n");
    info("aggregated rows=" + std::to_string(rows.size()) + " groups=" + std::to_string(agg.size()));
}

int run_rerun(const std::string& manifest_path, std::string out);

// ---------------------------------------------------------------------------

int dispatch_impl(const std::vector<std::string>& args) {
    CLI::App app{"Counterfactual explanations for a spatio-temporal graph transformer", "cgt"};
    app.require_subcommand(1);
    CLI::Option* config_opt = app.set_config("--config", "", "Plain-text config file (key = value, [command] sections); flags win");
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "error, warn, info or debug")->capture_default_str();
    std::string out;

    SynthOptions synth;
    auto* c_synth = app.add_subcommand("synth", "Generate a synthetic dataset with planted structure");
    c_synth->add_option("--nodes", synth.spec.n_nodes, "Node count")->capture_default_str();
    c_synth->add_option("--seed", synth.spec.seed, "Generator seed")->capture_default_str();
    c_synth->add_option("--edge-density", synth.spec.edge_density, "Extra edge probability")->capture_default_str();
    c_synth->add_option("--planted-edges", synth.planted_edges, "Directed planted edges, e.g. 0-1,3-5");
    c_synth->add_option("--planted-slices", synth.planted_slices, "Window positions with AR dependence, e.g. 11");
    c_synth->add_option("--edge-lag", synth.spec.edge_lag, "Planted copy delay (0 = window)")->capture_default_str();
    c_synth->add_option("--signal", synth.spec.signal_strength, "Planted edge strength")->capture_default_str();
    c_synth->add_option("--noise-std", synth.spec.noise_std, "Noise level")->capture_default_str();
    c_synth->add_option("--snr-floor", synth.spec.snr_floor, "Minimum signal / noise")->capture_default_str();
    c_synth->add_option("--persistence", synth.spec.persistence, "AR coefficient of the drivers")
        ->capture_default_str();
    c_synth->add_option("--series-length", synth.spec.series_length, "Time steps")->capture_default_str();
    c_synth->add_option("--window", synth.spec.window, "Window length T")->capture_default_str();
    c_synth->add_option("--channels", synth.spec.channels, "Channels per node")->capture_default_str();

    TrainCmd trainc;
    auto* c_train = app.add_subcommand("train", "Train the forecaster");
    add_data_options(c_train, trainc.data, true);
    trainc.train.add(c_train);
    c_train->add_option("--hidden", trainc.model.hidden, "Hidden width d")->capture_default_str();
    c_train->add_option("--blocks", trainc.model.blocks, "Transformer blocks")->capture_default_str();
    c_train->add_option("--heads", trainc.model.heads, "Attention heads")->capture_default_str();
    c_train->add_option("--seed", trainc.seed, "Initialization and shuffling seed")->capture_default_str();

    ExplainCmd explain;
    auto* c_explain = app.add_subcommand("explain", "Counterfactual explanation search");
    add_explainer_options(c_explain, explain);
    c_explain->add_option("--dimension", explain.dimension, "spatial or temporal")->capture_default_str();

    BaselineCmd baseline;
    auto* c_baseline = app.add_subcommand("baseline", "Comparison explainers");
    add_explainer_options(c_baseline, baseline.base);
    c_baseline->add_option("--kind", baseline.kind, "random, one_hop or attention_score")->capture_default_str();
    c_baseline->add_option("--top-k", baseline.top_k,
                           "Edges removed by attention_score (default: rounded size of the CGT explanation)");
    c_baseline->add_option("--center", baseline.center, "Center node for one_hop (default: all nodes)");

    RetrainCmd retrainc;
    auto* c_retrain = app.add_subcommand("retrain", "Embed an explanation and retrain");
    add_data_options(c_retrain, retrainc.data, false);
    retrainc.train.add(c_retrain);
    c_retrain->add_option("--model", retrainc.model, "Baseline checkpoint")->required();
    c_retrain->add_option("--result", retrainc.result, "Explanation JSON (omit for an empty explanation)");
    c_retrain->add_option("--gamma-edge", retrainc.embedding.gamma_edge, "Key edge amplification")
        ->capture_default_str();
    c_retrain->add_option("--gamma-time", retrainc.embedding.gamma_time, "Key slice amplification")
        ->capture_default_str();
    c_retrain->add_flag("--renormalize", retrainc.embedding.renormalize, "Keep adjacency row sums");
    c_retrain->add_flag("--warm-start", retrainc.warm_start, "Start from the baseline parameters");

    EvalCmd evalc;
    auto* c_eval = app.add_subcommand("eval", "Prediction metrics");
    c_eval->add_option("--truth", evalc.truth, "Ground-truth CSV (header + rows)");
    c_eval->add_option("--pred", evalc.pred, "Prediction CSV with the same shape");
    c_eval->add_option("--mape-epsilon", evalc.mape_epsilon, "MAPE skips |y| below this")->capture_default_str();
    add_data_options(c_eval, evalc.data, false);
    c_eval->add_option("--model", evalc.model, "Checkpoint evaluated on the test split");
    c_eval->add_option("--result", evalc.result, "Also evaluate under this explanation's mask");

    ReportCmd reportc;
    auto* c_report = app.add_subcommand("report", "Aggregate per-seed report CSVs into one table");
    c_report->add_option("inputs", reportc.inputs, "report.csv files")->required();

    std::string manifest;
    auto* c_rerun = app.add_subcommand("rerun", "Re-execute a run from its manifest and compare outputs");
    c_rerun->add_option("--manifest", manifest, "manifest.json of the original run")->required();

    for (auto* sub : {c_synth, c_train, c_explain, c_baseline, c_retrain, c_eval, c_report, c_rerun}) {
        sub->add_option("-o,--out", out, "Output directory");
    }

    std::vector<std::string> argv_store{"cgt"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : argv_store) argv.push_back(s.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }
    logger().level = parse_level(log_level);

    CLI::App* sub = app.get_subcommands().front();
    logger().command = sub->get_name();
    if (sub == c_rerun) return run_rerun(manifest, out);

    RunContext ctx;
    ctx.command = sub->get_name();
    ctx.args = strip_run_flags(args);
    const std::string config_file = config_opt->count() > 0 ? config_opt->as<std::string>() : std::string();
    if (!config_file.empty()) {
        ctx.config_text = read_file(config_file);
        ctx.input(config_file);
    }
    ctx.out = out.empty() ? default_out(ctx.command) : fs::path(out);
    fs::create_directories(ctx.out);
    info("output " + ctx.out.string());

    if (sub == c_synth) run_synth(ctx, synth);
    else if (sub == c_train) run_train(ctx, trainc);
    else if (sub == c_explain) run_explain(ctx, explain);
    else if (sub == c_baseline) run_baseline(ctx, baseline);
    else if (sub == c_retrain) run_retrain(ctx, retrainc);
    else if (sub == c_eval) run_eval(ctx, evalc);
    else if (sub == c_report) run_report(ctx, reportc);
    ctx.write_manifest();
    return kExitOk;
}

int run_rerun(const std::string& manifest_path, std::string out) {
    json m;
    try {
        m = json::parse(read_file(manifest_path));
    } catch (const json::exception& e) {
        throw ConfigError(manifest_path + ": " + e.what());
    }
    if (m.value("schema", "") != "cgt.manifest/1") throw ConfigError(manifest_path + ": not a cgt manifest");
    const fs::path original = fs::absolute(manifest_path).parent_path();
    const fs::path target = fs::absolute(out.empty() ? original.string() + "-rerun" : out);
    for (const auto& in : m.at("inputs")) {
        const fs::path p = in.at("path").get<std::string>();
        if (!fs::exists(p)) throw ConfigError("rerun: input " + p.string() + " is missing");
        if (git_blob_hash(read_file(p)) != in.at("git_blob").get<std::string>()) {
            throw ConfigError("rerun: input " + p.string() + " changed since the original run");
        }
    }
    std::vector<std::string> args = m.at("args").get<std::vector<std::string>>();
    fs::create_directories(target);
    if (!m.at("config_text").is_null()) {
        const fs::path cfg = target / "rerun.cfg";
        write_file(cfg, m.at("config_text").get<std::string>());
        args.push_back("--config");
        args.push_back(cfg.string());
    }
    args.push_back("--out");
    args.push_back(target.string());
    const fs::path cwd = fs::current_path();
    fs::current_path(m.at("cwd").get<std::string>());
    int code = kExitValidation;
    try {
        code = dispatch_impl(args);
    } catch (...) {
        fs::current_path(cwd);
        throw;
    }
    fs::current_path(cwd);
    logger().command = "rerun";
    if (code != kExitOk) return code;
    std::size_t same = 0, total = 0;
    for (const auto& o : m.at("outputs")) {
        const auto name = o.at("path").get<std::string>();
        ++total;
        const fs::path p = target / name;
        const bool ok = fs::exists(p) && git_blob_hash(read_file(p)) == o.at("git_blob").get<std::string>();
        same += ok ? 1 : 0;
        if (!ok) warn("output differs: " + name);
    }
    info("reproduced " + std::to_string(same) + "/" + std::to_string(total) + " outputs byte-identically");
    return same == total ? kExitOk : kExitValidation;
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
    try {
        return dispatch_impl(args);
    } catch (const NumericalError& e) {
        logger().log(Level::error, std::string("numerical failure: ") + e.what());
        return kExitNumerical;
    } catch (const Error& e) {
        logger().log(Level::error, e.what());
        return kExitValidation;
    } catch (const fs::filesystem_error& e) {
        logger().log(Level::error, e.what());
        return kExitValidation;
    } catch (const json::exception& e) {
        logger().log(Level::error, std::string("schema error: ") + e.what());
        return kExitValidation;
    }
}

int dispatch(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return dispatch(args);
}

}  // namespace cgt::cli
