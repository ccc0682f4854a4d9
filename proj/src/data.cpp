#include "cgt/data.hpp"

#include "cgt/error.hpp"
#include "cgt/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>

namespace cgt {

namespace {

Tensor slice_time(const Tensor& series, std::size_t begin, std::size_t end) {
    const std::size_t n = series.dim(1);
    const std::size_t c = series.dim(2);
    const auto s = series.data();
    std::vector<double> out(s.begin() + static_cast<std::ptrdiff_t>(begin * n * c),
                            s.begin() + static_cast<std::ptrdiff_t>(end * n * c));
    return Tensor({end - begin, n, c}, std::move(out));
}

std::vector<FlowWindow> cut_windows(const Tensor& normalized, std::size_t begin, std::size_t end,
                                    std::size_t window) {
    std::vector<FlowWindow> out;
    if (end < begin + 2 * window) return out;
    for (std::size_t s = begin; s + 2 * window <= end; ++s) {
        out.push_back({slice_time(normalized, s, s + window), slice_time(normalized, s + window, s + 2 * window), s});
    }
    return out;
}

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        cells.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return cells;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

double parse_double(std::string_view cell, const std::string& where) {
    cell = trim(cell);
    double v = 0.0;
    const auto* end = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(cell.data(), end, v);
    if (ec != std::errc() || ptr != end || cell.empty()) {
        throw IngestionError(where + ": non-numeric cell '" + std::string(cell) + "'");
    }
    return v;
}

std::size_t parse_index(std::string_view cell, const std::string& where) {
    const double v = parse_double(cell, where);
    if (v < 0.0 || v != std::floor(v)) throw IngestionError(where + ": invalid node id '" + std::string(cell) + "'");
    return static_cast<std::size_t>(v);
}

template <class T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw IngestionError("bundle cache: truncated file");
    return v;
}

bool has_cycle(std::size_t n, const std::vector<NodePair>& directed) {
    std::vector<std::vector<std::size_t>> out(n);
    for (const auto& [a, b] : directed) out[a].push_back(b);
    std::vector<int> state(n, 0);
    std::function<bool(std::size_t)> visit = [&](std::size_t u) {
        state[u] = 1;
        for (std::size_t v : out[u]) {
            if (state[v] == 1) return true;
            if (state[v] == 0 && visit(v)) return true;
        }
        state[u] = 2;
        return false;
    };
    for (std::size_t u = 0; u < n; ++u) {
        if (state[u] == 0 && visit(u)) return true;
    }
    return false;
}

}  // namespace

// ---------------------------------------------------------------------------

NormStats compute_stats(const Tensor& series, std::vector<std::string>* warnings) {
    const std::size_t c = series.dim(2);
    const std::size_t count = series.dim(0) * series.dim(1);
    const auto s = series.data();
    NormStats st{std::vector<double>(c, 0.0), std::vector<double>(c, 0.0)};
    if (count == 0) {
        st.std.assign(c, 1.0);
        return st;
    }
    for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t k = 0; k < c; ++k) st.mean[k] += s[i * c + k];
    }
    for (auto& m : st.mean) m /= static_cast<double>(count);
    for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t k = 0; k < c; ++k) {
            const double d = s[i * c + k] - st.mean[k];
            st.std[k] += d * d;
        }
    }
    for (std::size_t k = 0; k < c; ++k) {
        st.std[k] = std::sqrt(st.std[k] / static_cast<double>(count));
        if (st.std[k] == 0.0) {
            st.std[k] = 1.0;
            if (warnings) warnings->push_back("channel " + std::to_string(k) + " has zero variance; std set to 1");
        }
    }
    return st;
}

Tensor normalize(const Tensor& t, const NormStats& stats) {
    const std::size_t c = stats.mean.size();
    if (t.rank() == 0 || t.shape().back() != c) throw DimensionError("normalize: channel count mismatch");
    std::vector<double> out(t.data().begin(), t.data().end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] - stats.mean[i % c]) / stats.std[i % c];
    return Tensor(t.shape(), std::move(out));
}

Tensor denormalize(const Tensor& t, const NormStats& stats) {
    const std::size_t c = stats.mean.size();
    if (t.rank() == 0 || t.shape().back() != c) throw DimensionError("denormalize: channel count mismatch");
    std::vector<double> out(t.data().begin(), t.data().end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] * stats.std[i % c] + stats.mean[i % c];
    return Tensor(t.shape(), std::move(out));
}

std::vector<FlowWindow> denormalize(const std::vector<FlowWindow>& windows, const NormStats& stats) {
    std::vector<FlowWindow> out;
    out.reserve(windows.size());
    for (const auto& w : windows) out.push_back({denormalize(w.x, stats), denormalize(w.y, stats), w.window_start});
    return out;
}

std::vector<FlowWindow> sample_windows(const std::vector<FlowWindow>& windows, std::size_t count,
                                       std::uint64_t seed) {
    std::vector<std::size_t> order(windows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(order);
    order.resize(std::min(count, order.size()));
    std::vector<FlowWindow> out;
    for (std::size_t i : order) out.push_back(windows[i]);
    return out;
}

DatasetBundle build_bundle(std::size_t n_nodes, std::vector<Edge> edges, const std::vector<double>& weights,
                           const Tensor& series, std::size_t window, const GraphOptions& options) {
    if (series.rank() != 3 || series.dim(1) != n_nodes) {
        throw DimensionError("build_bundle: series " + shape_str(series.shape()) + " does not have " +
                             std::to_string(n_nodes) + " nodes");
    }
    if (window == 0) throw ConfigError("build_bundle: window must be positive");
    const std::size_t len = series.dim(0);
    DatasetBundle b;
    b.window = window;
    b.series = series.detach();
    b.train_end = len * 6 / 10;
    b.val_end = len * 8 / 10;
    const Tensor train_part = slice_time(series, 0, b.train_end);
    b.stats = compute_stats(train_part, &b.warnings);
    b.graph = build_graph(n_nodes, std::move(edges), weights, train_part, options);
    const Tensor norm = normalize(series, b.stats);
    b.train = cut_windows(norm, 0, b.train_end, window);
    b.val = cut_windows(norm, b.train_end, b.val_end, window);
    b.test = cut_windows(norm, b.val_end, len, window);
    return b;
}

// ---------------------------------------------------------------------------

DatasetBundle generate(const SyntheticSpec& spec) {
    const std::size_t n = spec.n_nodes;
    if (n < 2) throw ConfigError("synthetic: need at least two nodes");
    if (spec.window == 0 || spec.channels == 0) throw ConfigError("synthetic: window and channels must be positive");
    if (spec.series_length < 10 * spec.window) throw ConfigError("synthetic: series too short for 6:2:2 windows");
    if (spec.noise_std < 0.0) throw ConfigError("synthetic: noise_std must be non-negative");
    if (!spec.planted_edges.empty() && spec.noise_std > 0.0 && spec.signal_strength / spec.noise_std < spec.snr_floor) {
        throw ConfigError("synthetic: signal_strength / noise_std below SNR floor");
    }
    std::set<NodePair> planted_pairs;
    for (const auto& [a, b] : spec.planted_edges) {
        if (a >= n || b >= n || a == b) {
            throw ConfigError("synthetic: planted edge (" + std::to_string(a) + "," + std::to_string(b) +
                              ") is not a valid edge of the generated graph");
        }
        planted_pairs.insert({std::min(a, b), std::max(a, b)});
    }
    if (has_cycle(n, spec.planted_edges)) throw ConfigError("synthetic: planted edges form a directed cycle");
    std::vector<std::size_t> slices = spec.planted_slices;
    if (slices.empty()) slices.push_back(spec.window - 1);
    for (std::size_t p : slices) {
        if (p >= spec.window) throw ConfigError("synthetic: planted slice outside the window");
    }

    Rng rng(spec.seed);
    // Random spanning tree keeps the graph connected; extra edges by density.
    std::set<NodePair> pairs;
    for (std::size_t i = 1; i < n; ++i) {
        const std::size_t j = rng.index(i);
        pairs.insert({j, i});
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (rng.uniform() < spec.edge_density) pairs.insert({i, j});
        }
    }
    pairs.insert(planted_pairs.begin(), planted_pairs.end());
    std::vector<Edge> edges;
    for (const auto& [i, j] : pairs) edges.push_back({i, j, 1.0});

    // Weak couplings on non-planted edges, bounded by the noise level.
    std::vector<std::vector<std::pair<std::size_t, double>>> weak(n);
    for (const auto& [i, j] : pairs) {
        if (planted_pairs.count({i, j})) continue;
        weak[i].emplace_back(j, rng.uniform(-spec.noise_std, spec.noise_std));
        weak[j].emplace_back(i, rng.uniform(-spec.noise_std, spec.noise_std));
    }
    std::vector<std::vector<std::size_t>> sources(n);
    for (const auto& [a, b] : spec.planted_edges) sources[b].push_back(a);

    const std::size_t c = spec.channels;
    const std::size_t burn_in = 4 * spec.window + 50;
    const std::size_t total = spec.series_length + burn_in;
    // driver[t][i][k]: autoregressive innovations; z: node signal.
    std::vector<double> driver(total * n * c, 0.0);
    std::vector<double> z(total * n * c, 0.0);
    auto at = [n, c](std::vector<double>& v, std::size_t t, std::size_t i, std::size_t k) -> double& {
        return v[(t * n + i) * c + k];
    };
    const std::size_t lag = spec.edge_lag == 0 ? spec.window : spec.edge_lag;
    const double coeff = spec.persistence / static_cast<double>(slices.size());
    // Nodes are visited in topological order of planted edges so sources are
    // known before their targets at the same step.
    std::vector<std::size_t> order;
    {
        std::vector<std::size_t> indeg(n, 0);
        for (const auto& [a, b] : spec.planted_edges) ++indeg[b];
        std::vector<std::size_t> ready;
        for (std::size_t i = n; i-- > 0;) {
            if (indeg[i] == 0) ready.push_back(i);
        }
        while (!ready.empty()) {
            const std::size_t u = ready.back();
            ready.pop_back();
            order.push_back(u);
            for (const auto& [a, b] : spec.planted_edges) {
                if (a == u && --indeg[b] == 0) ready.push_back(b);
            }
        }
    }
    for (std::size_t t = 0; t < total; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < c; ++k) {
                double v = rng.normal();
                for (std::size_t p : slices) {
                    const std::size_t lag = spec.window - p;
                    if (t >= lag) v += coeff * at(driver, t - lag, i, k);
                }
                at(driver, t, i, k) = v;
            }
        }
        for (std::size_t i : order) {
            for (std::size_t k = 0; k < c; ++k) {
                double v = 0.0;
                if (sources[i].empty()) {
                    v = at(driver, t, i, k);
                } else if (t >= lag) {
                    for (std::size_t a : sources[i]) v += spec.signal_strength * at(z, t - lag, a, k);
                }
                if (t >= 1) {
                    for (const auto& [j, w] : weak[i]) v += w * at(driver, t - 1, j, k);
                }
                if (spec.noise_std > 0.0) v += spec.noise_std * rng.normal();
                at(z, t, i, k) = v;
            }
        }
    }
    std::vector<double> values(spec.series_length * n * c);
    for (std::size_t t = 0; t < spec.series_length; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < c; ++k) {
                values[(t * n + i) * c + k] = spec.base_level + spec.scale * at(z, t + burn_in, i, k);
            }
        }
    }
    const Tensor series({spec.series_length, n, c}, std::move(values));
    const auto weights = gaussian_kernel_weights(edges);
    return build_bundle(n, std::move(edges), weights, series, spec.window, spec.graph);
}

// ---------------------------------------------------------------------------

DatasetBundle ingest_csv(const std::filesystem::path& adjacency_path, const std::filesystem::path& flow_path,
                         const IngestOptions& options) {
    if (options.channels == 0) throw ConfigError("ingest: channels must be positive");
    std::ifstream flow(flow_path);
    if (!flow) throw IngestionError("cannot open flow file " + flow_path.string());
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(flow, line) || trim(line).empty()) {
        throw IngestionError(flow_path.string() + ": empty flow file (header row required)");
    }
    ++line_no;
    const std::size_t columns = split_csv(trim(line)).size();
    if (columns % options.channels != 0) {
        throw IngestionError(flow_path.string() + ":1: " + std::to_string(columns) +
                             " columns not divisible by channel count " + std::to_string(options.channels));
    }
    const std::size_t n = columns / options.channels;
    std::vector<double> values;
    std::size_t rows = 0;
    while (std::getline(flow, line)) {
        ++line_no;
        const auto body = trim(line);
        if (body.empty()) continue;
        const auto cells = split_csv(body);
        const std::string where = flow_path.string() + ":" + std::to_string(line_no);
        if (cells.size() != columns) {
            throw IngestionError(where + ": expected " + std::to_string(columns) + " cells, got " +
                                 std::to_string(cells.size()));
        }
        for (const auto cell : cells) values.push_back(parse_double(cell, where));
        ++rows;
    }
    if (rows == 0) throw IngestionError(flow_path.string() + ": no data rows");

    std::ifstream adj(adjacency_path);
    if (!adj) throw IngestionError("cannot open adjacency file " + adjacency_path.string());
    line_no = 0;
    if (!std::getline(adj, line)) throw IngestionError(adjacency_path.string() + ": empty adjacency file");
    ++line_no;
    std::vector<Edge> edges;
    while (std::getline(adj, line)) {
        ++line_no;
        const auto body = trim(line);
        if (body.empty()) continue;
        const auto cells = split_csv(body);
        const std::string where = adjacency_path.string() + ":" + std::to_string(line_no);
        if (cells.size() != 3) throw IngestionError(where + ": expected from,to,cost");
        Edge e{parse_index(cells[0], where), parse_index(cells[1], where), parse_double(cells[2], where)};
        if (e.from >= n || e.to >= n) {
            throw IngestionError(where + ": node id out of range (" + std::to_string(n) + " nodes)");
        }
        edges.push_back(e);
    }
    const Tensor series({rows, n, options.channels}, std::move(values));
    const auto weights = gaussian_kernel_weights(edges);
    return build_bundle(n, std::move(edges), weights, series, options.window, options.graph);
}

void export_csv(const DatasetBundle& bundle, const std::filesystem::path& adjacency_path,
                const std::filesystem::path& flow_path) {
    std::ofstream adj(adjacency_path);
    if (!adj) throw IngestionError("cannot write " + adjacency_path.string());
    adj << "from,to,cost\n";
    for (const auto& e : bundle.graph.edges) adj << e.from << ',' << e.to << ',' << fmt_double(e.cost) << '\n';
    std::ofstream flow(flow_path);
    if (!flow) throw IngestionError("cannot write " + flow_path.string());
    const std::size_t n = bundle.series.dim(1);
    const std::size_t c = bundle.series.dim(2);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < c; ++k) flow << (i || k ? "," : "") << "node" << i << "_c" << k;
    }
    flow << '\n';
    const auto s = bundle.series.data();
    for (std::size_t t = 0; t < bundle.series.dim(0); ++t) {
        for (std::size_t j = 0; j < n * c; ++j) flow << (j ? "," : "") << fmt_double(s[t * n * c + j]);
        flow << '\n';
    }
}

void save_bundle_cache(const DatasetBundle& bundle, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IngestionError("cannot write " + path.string());
    os.write("CGTBNDL", 7);
    write_pod(os, kBundleCacheVersion);
    const auto& g = bundle.graph;
    write_pod<std::uint64_t>(os, g.n_nodes);
    write_pod<std::uint64_t>(os, bundle.window);
    write_pod<std::uint8_t>(os, g.options.gcn_self_loops);
    write_pod<std::uint8_t>(os, g.options.attention_self_loops);
    write_pod<std::uint64_t>(os, g.options.semantic_k);
    write_pod<std::uint64_t>(os, g.edges.size());
    const auto a = g.a_gcn.data();
    for (const auto& e : g.edges) {
        write_pod<std::uint64_t>(os, e.from);
        write_pod<std::uint64_t>(os, e.to);
        write_pod<double>(os, e.cost);
        write_pod<double>(os, a[e.from * g.n_nodes + e.to]);
    }
    for (std::size_t ax = 0; ax < 3; ++ax) write_pod<std::uint64_t>(os, bundle.series.dim(ax));
    const auto s = bundle.series.data();
    os.write(reinterpret_cast<const char*>(s.data()), static_cast<std::streamsize>(s.size() * sizeof(double)));
}

DatasetBundle load_bundle_cache(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IngestionError("cannot open " + path.string());
    char magic[7];
    is.read(magic, 7);
    if (!is || std::memcmp(magic, "CGTBNDL", 7) != 0) throw IngestionError(path.string() + ": not a bundle cache");
    const auto version = read_pod<std::uint32_t>(is);
    if (version != kBundleCacheVersion) {
        throw IngestionError(path.string() + ": unsupported cache version " + std::to_string(version));
    }
    const auto n = static_cast<std::size_t>(read_pod<std::uint64_t>(is));
    const auto window = static_cast<std::size_t>(read_pod<std::uint64_t>(is));
    GraphOptions options;
    options.gcn_self_loops = read_pod<std::uint8_t>(is) != 0;
    options.attention_self_loops = read_pod<std::uint8_t>(is) != 0;
    options.semantic_k = static_cast<std::size_t>(read_pod<std::uint64_t>(is));
    const auto m = static_cast<std::size_t>(read_pod<std::uint64_t>(is));
    std::vector<Edge> edges(m);
    std::vector<double> weights(m);
    for (std::size_t k = 0; k < m; ++k) {
        edges[k].from = static_cast<std::size_t>(read_pod<std::uint64_t>(is));
        edges[k].to = static_cast<std::size_t>(read_pod<std::uint64_t>(is));
        edges[k].cost = read_pod<double>(is);
        weights[k] = read_pod<double>(is);
    }
    Shape shape(3);
    for (auto& d : shape) d = static_cast<std::size_t>(read_pod<std::uint64_t>(is));
    std::vector<double> values(shape_numel(shape));
    is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!is) throw IngestionError(path.string() + ": truncated series");
    return build_bundle(n, std::move(edges), weights, Tensor(shape, std::move(values)), window, options);
}

}  // namespace cgt
