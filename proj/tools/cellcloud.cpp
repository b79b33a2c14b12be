// cellcloud: command-line front end. Exit code 0 on success, 1 on usage
// errors, 2 on data errors; failures print an `error_code=` line on stderr.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include "cellcloud/clinical.hpp"
#include "cellcloud/error.hpp"
#include "cellcloud/hsp.hpp"
#include "cellcloud/ingest.hpp"
#include "cellcloud/nie.hpp"
#include "cellcloud/parallel.hpp"
#include "cellcloud/rng.hpp"
#include "cellcloud/spatial.hpp"
#include "cellcloud/survival.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace cellcloud;

namespace {

constexpr const char* kVersion = "0.1.0";

// Raised for problems with the invocation itself (exit code 1).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Python-style shortest round-trip: 1 prints as "1.0".
std::string num(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, r.ptr);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

// JSON config files: either a run manifest ({"command", "config", ...}) or
// a flat object of option values, optionally with per-command sections.
class JsonConfig : public CLI::Config {
public:
    std::string section;  // subcommand that flat keys apply to

    std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        json j;
        try {
            j = json::parse(input);
        } catch (const json::exception& e) {
            throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
        }
        if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
        std::vector<CLI::ConfigItem> items;
        if (j.contains("command") && j.contains("config")) {
            add(items, {j["command"].get<std::string>()}, j["config"]);
        } else {
            for (auto& [key, value] : j.items()) {
                if (value.is_object())
                    add(items, {key}, value);
                else
                    add_one(items, section.empty() ? std::vector<std::string>{} : std::vector<std::string>{section}, key, value);
            }
        }
        return items;
    }

private:
    static void add(std::vector<CLI::ConfigItem>& items, const std::vector<std::string>& parents, const json& obj) {
        for (auto& [key, value] : obj.items()) add_one(items, parents, key, value);
    }

    static void add_one(std::vector<CLI::ConfigItem>& items, const std::vector<std::string>& parents, const std::string& key,
                        const json& value) {
        CLI::ConfigItem item;
        item.parents = parents;
        item.name = key;
        if (value.is_array()) {
            for (const auto& v : value) item.inputs.push_back(scalar(v));
        } else {
            item.inputs.push_back(scalar(value));
        }
        items.push_back(std::move(item));
    }

    static std::string scalar(const json& v) {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
        return v.dump();
    }
};

// ---- shared option state ----------------------------------------------------

struct Common {
    unsigned threads = 0;
    std::string manifest;
};

struct RunInfo {
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::optional<std::uint64_t> seed;
    std::string default_manifest;
    json extra = json::object();
};

clinical::AlphaWeights parse_alpha(const std::string& text) {
    if (auto p = clinical::alpha_preset(text)) return *p;
    clinical::AlphaWeights a;
    std::stringstream ss(text);
    std::string tok;
    std::size_t i = 0;
    while (std::getline(ss, tok, ',')) {
        if (i == 3) throw UsageError("--alpha takes a preset name or three comma-separated weights");
        double v = 0;
        const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (r.ec != std::errc{} || r.ptr != tok.data() + tok.size())
            throw UsageError("--alpha: '" + tok + "' is not a number or preset");
        a.alpha[i++] = v;
    }
    if (i != 3) throw UsageError("--alpha takes a preset name or three comma-separated weights");
    clinical::validate_alpha(a);
    return a;
}

bool is_csv(const fs::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".csv";
}

void save_cloud(const CellCloud& c, const fs::path& p) {
    if (is_csv(p))
        write_cloud_csv(c, p);
    else
        write_cloud_binary(c, p);
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot open '" + p.string() + "' for writing");
    out << text;
    if (!out) throw Error(ErrorCode::Io, "failed writing '" + p.string() + "'");
}

std::string format_rows(const FeatureMatrix& f) {
    std::string s;
    for (std::size_t i = 0; i < f.rows(); ++i) {
        for (std::size_t c = 0; c < f.dim(); ++c) {
            if (c) s += ',';
            char buf[32];
            auto r = std::to_chars(buf, buf + sizeof buf, f.at(i, c));
            s.append(buf, r.ptr);
        }
        s += '\n';
    }
    return s;
}

void save_features(const FeatureMatrix& f, const fs::path& p) {
    if (is_csv(p))
        write_text(p, format_rows(f));
    else
        write_features(f, p);
}

// Resolved value of every option of `app`, defaults included.
json resolved_config(const CLI::App* app) {
    json cfg = json::object();
    for (const CLI::Option* opt : app->get_options()) {
        const std::string name = opt->get_single_name();
        if (name == "help" || name == "config" || name.empty()) continue;
        std::vector<std::string> values = opt->count() > 0 ? opt->results() : std::vector<std::string>{};
        if (opt->count() == 0) {
            if (opt->get_default_str().empty()) continue;
            values = {opt->get_default_str()};
        }
        if (values.size() == 1 && opt->get_expected_max() <= 1)
            cfg[name] = values.front();
        else
            cfg[name] = values;
    }
    return cfg;
}

void write_manifest(const CLI::App* sub, const Common& common, const RunInfo& info, double seconds) {
    json m;
    m["command"] = sub->get_name();
    m["config"] = resolved_config(sub);
    m["inputs"] = info.inputs;
    m["outputs"] = info.outputs;
    m["seed"] = info.seed ? json(*info.seed) : json(nullptr);
    m["threads"] = resolve_threads(common.threads);
    m["tool_version"] = kVersion;
    m["wall_clock_seconds"] = seconds;
    for (auto& [k, v] : info.extra.items()) m[k] = v;
    const fs::path path = common.manifest.empty() ? fs::path(info.default_manifest) : fs::path(common.manifest);
    write_text(path, m.dump(2) + "\n");
}

std::string manifest_next_to(const std::string& output) { return output + ".manifest.json"; }

// ---- commands ------------------------------------------------------------------

struct IngestArgs {
    std::string input, output;
    double patch_size = 512, d_boundary = 24, d_merge = 12, grid = 0;
    std::string slide_id;
};

RunInfo run_ingest(const IngestArgs& a) {
    CellCloud cloud;
    if (fs::is_directory(a.input)) {
        const auto patches = ingest::load_patch_directory(a.input, a.patch_size);
        cloud = ingest::merge_boundary_cells(patches, {a.d_boundary, a.d_merge},
                                             a.slide_id.empty() ? fs::path(a.input).filename().string() : a.slide_id);
    } else {
        cloud = ingest::load_cloud(a.input);
        if (!a.slide_id.empty()) cloud = CellCloud({cloud.cells().begin(), cloud.cells().end()}, a.slide_id);
    }
    if (a.grid > 0) cloud = ingest::grid_sample(cloud, a.grid);
    save_cloud(cloud, a.output);
    std::cout << "cells=" << cloud.size() << " neoplastic=" << cloud.count(CellType::Neoplastic)
              << " inflammatory=" << cloud.count(CellType::Inflammatory) << " other=" << cloud.count(CellType::Other)
              << "\n";
    RunInfo info{{a.input}, {a.output}, std::nullopt, manifest_next_to(a.output)};
    info.extra["cells"] = cloud.size();
    return info;
}

struct NieArgs {
    std::string input, output;
    double lambda_r = 4;
    std::size_t nd = 3;
    std::optional<double> d_mean;
};

RunInfo run_nie(const NieArgs& a, unsigned threads) {
    const auto cloud = ingest::load_cloud(a.input);
    const auto e = nie::embed_with_counts(cloud, {a.lambda_r, a.nd}, {a.d_mean, threads});
    save_features(e.features, a.output);
    std::cout << "rows=" << e.features.rows() << " dim=" << e.features.dim() << " r_max=" << num(e.radii.r_max()) << "\n";
    RunInfo info{{a.input}, {a.output}, std::nullopt, manifest_next_to(a.output)};
    info.extra["radii"] = e.radii.r;
    return info;
}

struct ForwardArgs {
    std::string input, features, output, weights, save_weights, appearance;
    std::optional<std::uint64_t> seed;
    double lambda_r = 4, beta = 0;
    std::size_t nd = 3;
    hsp::HspConfig cfg;
};

RunInfo run_forward(const ForwardArgs& a, const CLI::App* sub, unsigned threads) {
    const auto cloud = ingest::load_cloud(a.input);
    RunInfo info{{a.input}, {a.output}, std::nullopt, manifest_next_to(a.output)};
    FeatureMatrix feats;
    if (!a.features.empty()) {
        feats = read_features(a.features);
        info.inputs.push_back(a.features);
    } else {
        feats = nie::embed(cloud, {a.lambda_r, a.nd}, {std::nullopt, threads});
    }

    hsp::HspConfig cfg = a.cfg;
    hsp::HspWeights w;
    if (!a.weights.empty()) {
        w = hsp::read_weights(a.weights);
        info.inputs.push_back(a.weights);
        // Layer layout comes from the file unless given explicitly.
        auto given = [&](const char* flag) { return sub->get_option(flag)->count() > 0; };
        if (!given("--levels")) cfg.levels = w.config.levels;
        if (!given("--updates")) cfg.updates_per_level = w.config.updates_per_level;
        if (!given("--encode-dim")) cfg.encode_dim = w.config.encode_dim;
        if (!given("--dim-multiplier")) cfg.dim_multiplier = w.config.dim_multiplier;
    } else {
        const std::uint64_t seed = a.seed.value_or(0);
        info.seed = seed;
        hsp::validate_config(cfg);
        w = hsp::init_weights(cfg, feats.dim(), seed);
    }
    if (!a.save_weights.empty()) {
        hsp::write_weights(w, a.save_weights);
        info.outputs.push_back(a.save_weights);
    }

    hsp::ForwardTrace trace;
    auto out = hsp::hsp_forward(cloud.coordinates(), feats, cloud.types(), cfg, w, &trace, threads);
    if (!a.appearance.empty()) {
        const auto app = read_features(a.appearance);
        if (app.rows() != 1) throw Error(ErrorCode::DimMismatch, "appearance file must hold exactly one row");
        out = hsp::combine_appearance(out, app.row(0), a.beta);
        info.inputs.push_back(a.appearance);
    }
    save_features(FeatureMatrix(1, out.size(), out), a.output);

    std::cout << "dim=" << out.size() << " anchors=";
    for (std::size_t i = 0; i < trace.anchors_per_level.size(); ++i) std::cout << (i ? "/" : "") << trace.anchors_per_level[i];
    std::cout << " retained=";
    for (std::size_t i = 0; i < trace.retained_fraction_per_level.size(); ++i)
        std::cout << (i ? "/" : "") << num(trace.retained_fraction_per_level[i]);
    std::cout << "\n";
    info.extra["anchors_per_level"] = trace.anchors_per_level;
    info.extra["group_size_per_level"] = trace.group_size_per_level;
    return info;
}

struct ScoreArgs {
    std::vector<std::string> inputs;
    std::string output, alpha = "hnsc";
    std::size_t n_box = 20;
    std::vector<double> ratio{0.6, 1.0};
    std::uint64_t seed = 0;
};

RunInfo run_score(const ScoreArgs& a, bool multi) {
    const auto alpha = parse_alpha(a.alpha);
    if (multi && a.ratio.size() != 2) throw UsageError("--ratio takes LOW,HIGH");
    std::string table = "slide_id,score\n";
    for (std::size_t i = 0; i < a.inputs.size(); ++i) {
        const auto cloud = ingest::load_cloud(a.inputs[i]);
        // Slide i of a batch gets its own sub-seed so batches match single runs.
        const double s = multi ? clinical::mcps(cloud, alpha, {a.n_box, a.ratio[0], a.ratio[1], a.seed + i})
                               : clinical::cps(cloud, alpha);
        const std::string id = cloud.slide_id().empty() ? fs::path(a.inputs[i]).stem().string() : cloud.slide_id();
        table += id + "," + num(s) + "\n";
        if (a.inputs.size() == 1)
            std::cout << num(s) << "\n";
        else
            std::cout << id << " " << num(s) << "\n";
    }
    RunInfo info{a.inputs, {}, multi ? std::optional<std::uint64_t>(a.seed) : std::nullopt,
                 std::string("cellcloud-") + (multi ? "mcps" : "cps") + ".manifest.json"};
    if (!a.output.empty()) {
        write_text(a.output, table);
        info.outputs.push_back(a.output);
        info.default_manifest = manifest_next_to(a.output);
    }
    return info;
}

struct KmArgs {
    std::string cohort, output_dir, split = "median";
    std::optional<double> threshold;
};

RunInfo run_km(const KmArgs& a) {
    const auto cohort = clinical::read_cohort(a.cohort);
    if (cohort.empty()) throw Error(ErrorCode::EmptyCohort, "cohort file has no patients");
    double cut = 0;
    if (a.split == "median") {
        std::vector<double> s;
        for (const auto& r : cohort) s.push_back(r.score);
        std::sort(s.begin(), s.end());
        cut = 0.5 * (s[(s.size() - 1) / 2] + s[s.size() / 2]);
    } else {
        if (!a.threshold) throw UsageError("--split threshold needs --threshold");
        cut = *a.threshold;
    }
    clinical::SurvivalCohort high, low;
    for (const auto& r : cohort) (r.score > cut ? high : low).push_back(r);
    if (high.empty() || low.empty()) throw Error(ErrorCode::EmptyCohort, "split at " + num(cut) + " leaves a group empty");
    const auto lr = clinical::logrank(high, low);

    json report;
    report["split"] = a.split;
    report["cut"] = cut;
    report["n_high"] = high.size();
    report["n_low"] = low.size();
    report["statistic"] = lr.statistic;
    report["p_value"] = lr.p_value;
    std::cout << "cut=" << num(cut) << " n_high=" << high.size() << " n_low=" << low.size()
              << " statistic=" << num(lr.statistic) << " p_value=" << num(lr.p_value) << "\n";

    RunInfo info{{a.cohort}, {}, std::nullopt, "cellcloud-km.manifest.json"};
    if (!a.output_dir.empty()) {
        fs::create_directories(a.output_dir);
        const fs::path d(a.output_dir);
        write_text(d / "km_high.csv", clinical::format_km_csv(clinical::km_curve(high)));
        write_text(d / "km_low.csv", clinical::format_km_csv(clinical::km_curve(low)));
        write_text(d / "logrank.json", report.dump(2) + "\n");
        info.outputs = {(d / "km_high.csv").string(), (d / "km_low.csv").string(), (d / "logrank.json").string()};
        info.default_manifest = (d / "manifest.json").string();
    }
    info.extra["logrank"] = report;
    return info;
}

RunInfo run_cindex(const std::string& path) {
    const auto c = clinical::c_index(clinical::read_cohort(path));
    std::cout << num(c) << "\n";
    RunInfo info{{path}, {}, std::nullopt, "cellcloud-cindex.manifest.json"};
    info.extra["c_index"] = c;
    return info;
}

struct SynthArgs {
    std::string kind = "toy", output;
    std::size_t n = 200;
    std::uint64_t seed = 0;
};

RunInfo run_synth(const SynthArgs& a) {
    RunInfo info{{}, {}, a.seed, ""};
    if (a.kind == "toy") {
        const auto toy = clinical::synth_toy_set(a.seed);
        save_cloud(toy.cloud, a.output);
        info.outputs = {a.output};
        info.default_manifest = manifest_next_to(a.output);
        std::cout << "cells=" << toy.cloud.size() << "\n";
    } else if (a.kind == "cohort") {
        const auto s = clinical::synth_cohort(a.n, a.seed);
        const fs::path d(a.output);
        fs::create_directories(d);
        for (std::size_t i = 0; i < s.patients.size(); ++i) {
            const auto p = d / (s.cohort[i].patient_id + ".cc5b");
            write_cloud_binary(s.patients[i].cloud, p);
        }
        write_text(d / "cohort.csv", clinical::format_cohort_csv(s.cohort));
        info.outputs = {(d / "cohort.csv").string()};
        info.default_manifest = (d / "manifest.json").string();
        std::cout << "patients=" << s.patients.size() << "\n";
    } else {
        throw UsageError("--kind must be toy or cohort");
    }
    return info;
}

struct BenchArgs {
    std::size_t cells = 1000000, hsp_cells = 50000;
    std::uint64_t seed = 0;
};

RunInfo run_bench(const BenchArgs& a, unsigned threads) {
    using Clock = std::chrono::steady_clock;
    auto secs = [](Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); };
    // Uniform cells at about 10 px mean nearest-neighbour spacing.
    auto uniform = [&](std::size_t n, std::uint64_t stream) {
        RngStream rng(a.seed, stream);
        const double side = 20.0 * std::sqrt(static_cast<double>(n));
        std::vector<Cell> cells(n);
        for (auto& c : cells) c = {rng.uniform(0, side), rng.uniform(0, side), static_cast<CellType>(rng.below(3))};
        return CellCloud(std::move(cells));
    };
    json report;
    if (a.cells > 0) {
        const auto cloud = uniform(a.cells, 1);
        const auto r = nie::radii_schedule(10.0);
        auto t = Clock::now();
        const auto idx = spatial::build_index(cloud, r.r_max());
        const double build = secs(t);
        t = Clock::now();
        const auto counts = spatial::count_in_radii(idx, r.r, threads);
        const double query = secs(t);
        report["count_in_radii"] = {{"cells", a.cells}, {"threads", threads}, {"index_seconds", build},
                                    {"query_seconds", query}, {"cells_per_second", static_cast<double>(a.cells) / query}};
        std::cout << "count_in_radii cells=" << a.cells << " threads=" << threads << " index_s=" << num(build)
                  << " query_s=" << num(query) << "\n";
    }
    if (a.hsp_cells > 1) {
        const auto cloud = uniform(a.hsp_cells, 2);
        const hsp::HspConfig cfg;
        auto t = Clock::now();
        const auto feats = nie::embed(cloud, {}, {std::nullopt, threads});
        const double embed = secs(t);
        const auto w = hsp::init_weights(cfg, feats.dim(), a.seed);
        t = Clock::now();
        hsp::hsp_forward(cloud.coordinates(), feats, cloud.types(), cfg, w, nullptr, threads);
        const double fwd = secs(t);
        report["hsp_forward"] = {{"cells", a.hsp_cells}, {"threads", threads}, {"embed_seconds", embed}, {"forward_seconds", fwd}};
        std::cout << "hsp_forward cells=" << a.hsp_cells << " threads=" << threads << " embed_s=" << num(embed)
                  << " forward_s=" << num(fwd) << "\n";
    }
    RunInfo info{{}, {}, a.seed, "cellcloud-bench.manifest.json"};
    info.extra["timings"] = report;
    return info;
}

std::string section_from_argv(int argc, char** argv, const CLI::App& app) {
    for (int i = 1; i < argc; ++i)
        for (const auto* sub : app.get_subcommands({}))
            if (sub->get_name() == argv[i]) return argv[i];
    return {};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cell-cloud pipeline for whole-slide images: ingestion, neighbourhood embedding, hierarchical "
                 "descriptors, proportion scores and survival statistics."};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    app.fallthrough();
    app.option_defaults()->always_capture_default();
    auto formatter = std::make_shared<JsonConfig>();
    app.config_formatter(formatter);
    app.set_config("--config", "", "Read option values from a JSON file; a run manifest reproduces that run");

    Common common;
    app.add_option("--threads", common.threads, "Worker threads; 0 reads CELLCLOUD_THREADS, else 1")->capture_default_str();
    app.add_option("--manifest", common.manifest, "Manifest path (default: next to the main output)");

    // ingest
    IngestArgs ia;
    auto* ingest_cmd = app.add_subcommand("ingest", "Parse detections, merge patch seams, optionally grid-sample; writes CC5B");
    ingest_cmd->add_option("-i,--input", ia.input, "Cell CSV, CC5B file, or directory of patch_{x0}_{y0}.csv")->required();
    ingest_cmd->add_option("-o,--output", ia.output, "Output cloud (.csv for CSV, anything else CC5B)")->required();
    ingest_cmd->add_option("--patch-size", ia.patch_size, "Patch side in pixels")->check(CLI::PositiveNumber);
    ingest_cmd->add_option("--d-boundary", ia.d_boundary, "Seam band width in pixels")->check(CLI::PositiveNumber);
    ingest_cmd->add_option("--d-merge", ia.d_merge, "Merge distance in pixels")->check(CLI::PositiveNumber);
    ingest_cmd->add_option("--grid", ia.grid, "Grid-sample cell size in pixels, 0 disables")->check(CLI::NonNegativeNumber);
    ingest_cmd->add_option("--slide-id", ia.slide_id, "Slide identifier stored in the output");

    // nie
    NieArgs na;
    auto* nie_cmd = app.add_subcommand("nie", "Neighbourhood embedding of every cell; writes CCEM");
    nie_cmd->add_option("-i,--input", na.input, "Input cloud (CSV or CC5B)")->required();
    nie_cmd->add_option("-o,--output", na.output, "Output features (.csv for text, anything else CCEM)")->required();
    nie_cmd->add_option("--lambda-r", na.lambda_r, "Largest radius in units of the mean nearest-neighbour distance")
        ->check(CLI::PositiveNumber);
    nie_cmd->add_option("--nd", na.nd, "Number of radius shells")->check(CLI::PositiveNumber);
    nie_cmd->add_option("--d-mean", na.d_mean, "Fixed mean nearest-neighbour distance (default: from the slide)")
        ->check(CLI::PositiveNumber);

    // forward
    ForwardArgs fa;
    auto* fwd_cmd = app.add_subcommand("forward", "Hierarchical spatial descriptor of one slide");
    fwd_cmd->add_option("-i,--input", fa.input, "Input cloud (CSV or CC5B)")->required();
    fwd_cmd->add_option("--features", fa.features, "Precomputed CCEM features (default: embed the cloud)");
    fwd_cmd->add_option("-o,--output", fa.output, "Descriptor output (.csv for text, anything else CCEM)")->required();
    auto* wopt = fwd_cmd->add_option("--weights", fa.weights, "CCWT weight file");
    auto* sopt = fwd_cmd->add_option("--seed", fa.seed, "Seed for random weights (default 0 when --weights is absent)");
    wopt->excludes(sopt);
    sopt->excludes(wopt);
    fwd_cmd->add_option("--save-weights", fa.save_weights, "Also write the weights used");
    fwd_cmd->add_option("--lambda-r", fa.lambda_r, "Embedding radius scale when features are computed")->check(CLI::PositiveNumber);
    fwd_cmd->add_option("--nd", fa.nd, "Embedding shell count when features are computed")->check(CLI::PositiveNumber);
    fwd_cmd->add_option("--levels", fa.cfg.levels, "Hierarchy levels L")->check(CLI::PositiveNumber);
    fwd_cmd->add_option("--anchors", fa.cfg.initial_anchors, "Anchors at the first level N_k")->check(CLI::PositiveNumber);
    fwd_cmd->add_option("--n-basic", fa.cfg.n_basic, "Anchor reduction factor per level N_basic")->check(CLI::PositiveNumber);
    fwd_cmd->add_option("--lambda-sim", fa.cfg.lambda_sim, "Similarity threshold of the group filter");
    fwd_cmd->add_option("--updates", fa.cfg.updates_per_level, "Attention updates per level")->check(CLI::PositiveNumber);
    fwd_cmd->add_option("--encode-dim", fa.cfg.encode_dim, "Encoder width D0")->check(CLI::PositiveNumber);
    fwd_cmd->add_option("--dim-multiplier", fa.cfg.dim_multiplier, "Width growth per level")->check(CLI::PositiveNumber);
    fwd_cmd->add_option("--appearance", fa.appearance, "One-row CCEM appearance vector to add");
    fwd_cmd->add_option("--beta", fa.beta, "Weight of the appearance vector");

    // cps / mcps
    ScoreArgs ca, ma;
    auto* cps_cmd = app.add_subcommand("cps", "Cell proportion score of whole slides");
    auto* mcps_cmd = app.add_subcommand("mcps", "Multi-scale cell proportion score over random boxes");
    for (auto [cmd, args] : {std::pair{cps_cmd, &ca}, std::pair{mcps_cmd, &ma}}) {
        cmd->add_option("-i,--input", args->inputs, "Input clouds (CSV or CC5B)")->required();
        cmd->add_option("-o,--output", args->output, "Score table CSV (slide_id,score)");
        cmd->add_option("--alpha", args->alpha,
                        "Preset (hnsc, kirc, paad, hnsc-prose, kirc-prose) or weights a1,a2,a3 on "
                        "[neo/total, inf/total, neo/inf]");
    }
    mcps_cmd->add_option("--n-box", ma.n_box, "Boxes per slide")->check(CLI::PositiveNumber);
    mcps_cmd->add_option("--ratio", ma.ratio, "Box side range LOW,HIGH as fractions of the cloud extent")
        ->delimiter(',')
        ->expected(2);
    mcps_cmd->add_option("--seed", ma.seed, "Seed; slide i of a batch uses seed + i");

    // km
    KmArgs ka;
    auto* km_cmd = app.add_subcommand("km", "Kaplan-Meier curves and log-rank test of a two-group split");
    km_cmd->add_option("-c,--cohort", ka.cohort, "Cohort CSV (patient_id,score,time,event)")->required();
    km_cmd->add_option("--split", ka.split, "How to split on score: median or threshold")
        ->check(CLI::IsMember({"median", "threshold"}));
    km_cmd->add_option("--threshold", ka.threshold, "Cut for --split threshold; score > cut is the high group");
    km_cmd->add_option("-o,--output-dir", ka.output_dir, "Directory for km_high.csv, km_low.csv, logrank.json");

    // cindex
    std::string cindex_cohort;
    auto* ci_cmd = app.add_subcommand("cindex", "Concordance index of cohort scores (higher score, earlier event)");
    ci_cmd->add_option("-c,--cohort", cindex_cohort, "Cohort CSV (patient_id,score,time,event)")->required();

    // synth
    SynthArgs ya;
    auto* synth_cmd = app.add_subcommand("synth", "Synthetic fixtures: toy three-blob cloud or survival cohort");
    synth_cmd->add_option("--kind", ya.kind, "toy or cohort")->check(CLI::IsMember({"toy", "cohort"}));
    synth_cmd->add_option("-o,--output", ya.output, "Cloud file for toy, directory for cohort")->required();
    synth_cmd->add_option("-n,--patients", ya.n, "Cohort size")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--seed", ya.seed, "Seed");

    // bench
    BenchArgs ba;
    auto* bench_cmd = app.add_subcommand("bench", "Throughput of neighbour counting and the descriptor pass");
    bench_cmd->add_option("--cells", ba.cells, "Uniform cells for count_in_radii, 0 skips");
    bench_cmd->add_option("--hsp-cells", ba.hsp_cells, "Uniform cells for hsp_forward, 0 skips");
    bench_cmd->add_option("--seed", ba.seed, "Seed");

    for (auto* sub : app.get_subcommands({})) sub->configurable();
    formatter->section = section_from_argv(argc, argv, app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        if (rc != 0) std::cerr << "error_code=Usage\n";
        return rc == 0 ? 0 : 1;
    }

    const auto t0 = std::chrono::steady_clock::now();
    const unsigned threads = resolve_threads(common.threads);
    const CLI::App* sub = app.get_subcommands().front();
    try {
        RunInfo info;
        if (sub == ingest_cmd) info = run_ingest(ia);
        else if (sub == nie_cmd) info = run_nie(na, threads);
        else if (sub == fwd_cmd) info = run_forward(fa, fwd_cmd, threads);
        else if (sub == cps_cmd) info = run_score(ca, false);
        else if (sub == mcps_cmd) info = run_score(ma, true);
        else if (sub == km_cmd) info = run_km(ka);
        else if (sub == ci_cmd) info = run_cindex(cindex_cohort);
        else if (sub == synth_cmd) info = run_synth(ya);
        else info = run_bench(ba, threads);
        write_manifest(sub, common, info, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\nerror_code=Usage\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what();
        if (e.line()) std::cerr << " (line " << *e.line() << ")";
        std::cerr << "\nerror_code=" << error_code_name(e.code()) << "\n";
        if (e.code() == ErrorCode::InvalidArgument) return 1;
        return 2;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\nerror_code=Io\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\nerror_code=Internal\n";
        return 2;
    }
    return 0;
}
