// SPDX-License-Identifier: Apache-2.0
#include "objstyle/app.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <torch/version.h>

#include "objstyle/backends.hpp"
#include "objstyle/config.hpp"
#include "objstyle/error.hpp"
#include "objstyle/grounding.hpp"
#include "objstyle/io.hpp"
#include "objstyle/metrics.hpp"
#include "objstyle/trainer.hpp"

namespace objstyle::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "0.1.0";
constexpr const char* kManifestSchema = "objstyle-run-manifest/1";

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ManifestError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct FileConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InputFileError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct OutputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

int guarded(const std::function<int()>& body, std::ostream& err) {
    try {
        return body();
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const ManifestError& e) {
        err << "error: malformed manifest: " << e.what() << "\n";
        return kDataError;
    } catch (const FileConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kConfig;
    } catch (const InputFileError& e) {
        err << "error: " << e.what() << "\n";
        return kNoInput;
    } catch (const OutputError& e) {
        err << "error: " << e.what() << "\n";
        return kCantCreate;
    } catch (const GroundingFailure& e) {
        err << "error: " << e.what() << "\n";
        return kGroundingFailed;
    } catch (const BackendLoadError& e) {
        err << "error: backend load failed: " << e.what() << "\n";
        return kBackendLoadFailed;
    } catch (const TrainingDivergence& e) {
        err << "error: " << e.what();
        if (!e.last_good_checkpoint().empty()) err << " (last good state: " << e.last_good_checkpoint() << ")";
        err << "\n";
        return kSoftware;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const RejectedInputError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kSoftware;
    }
}

// ---------------------------------------------------------------------------
// shared plumbing
// ---------------------------------------------------------------------------

struct ConfigSources {
    std::string file;
    std::vector<std::string> sets;  // "key=value"
};

void add_config_flags(CLI::App* cmd, ConfigSources& src) {
    cmd->add_option("--config", src.file, "flat key=value config file");
    cmd->add_option("--set", src.sets, "override one config key (key=value); repeatable");
}

/// defaults < config file < --set < dedicated flags (applied by the caller).
AppConfig load_config(const ConfigSources& src) {
    AppConfig cfg;
    if (!src.file.empty()) {
        try {
            apply_key_values(cfg, load_key_values(src.file));
        } catch (const ConfigError& e) {
            throw FileConfigError(e.what());
        }
    }
    for (const auto& s : src.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
        try {
            auto key = s.substr(0, eq);
            auto value = s.substr(eq + 1);
            auto strip = [](std::string& v) {
                v.erase(0, v.find_first_not_of(" \t"));
                v.erase(v.find_last_not_of(" \t") + 1);
            };
            strip(key);
            strip(value);
            apply_key_value(cfg, key, value);
        } catch (const ConfigError& e) {
            throw UsageError(e.what());
        }
    }
    return cfg;
}

void validate_config(const AppConfig& cfg, bool from_file) {
    try {
        cfg.train.validate();
        (void)make_parser(cfg.parser, cfg.parser_command);
    } catch (const ConfigError& e) {
        if (from_file) throw FileConfigError(e.what());
        throw UsageError(e.what());
    }
}

AppConfig config_from_json(const json& j) {
    if (!j.is_object()) throw ManifestError("'config' must be an object of strings");
    AppConfig cfg;
    try {
        for (const auto& [k, v] : j.items()) {
            if (!v.is_string()) throw ManifestError("config value for '" + k + "' is not a string");
            apply_key_value(cfg, k, v.get<std::string>());
        }
    } catch (const ConfigError& e) {
        throw ManifestError(e.what());
    }
    return cfg;
}

json config_json(const AppConfig& cfg) {
    json j = json::object();
    for (const auto& [k, v] : to_key_values(cfg)) j[k] = v;
    return j;
}

std::string file_fnv1a(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) return {};
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 14];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    char out[17];
    std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
    return out;
}

void ensure_output_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw OutputError("cannot create output directory " + dir.string());
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw OutputError("cannot write " + path.string());
    os << text;
    if (!text.empty() && text.back() != '\n') os << '\n';
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InputFileError("cannot read " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ManifestError(path.string() + ": " + e.what());
    }
}

std::string require_string(const json& obj, const char* key, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key) || !obj.at(key).is_string()) {
        throw ManifestError(where + ": missing string field '" + key + "'");
    }
    return obj.at(key).get<std::string>();
}

fs::path resolve_relative(const fs::path& p, const fs::path& base) {
    return p.is_absolute() ? p : base / p;
}

Image load_input_image(const fs::path& p) {
    try {
        return load_image(p);
    } catch (const RejectedInputError& e) {
        throw InputFileError(e.what());
    }
}

json backend_json(const AppConfig& cfg, const ImageTextEmbedder* embedder, const PerceptualExtractor* perceptual) {
    json j;
    if (embedder != nullptr) {
        const auto d = embedder->descriptor();
        j["image"] = {{"name", d.name}, {"embed_dim", d.embed_dim}, {"image_input_size", d.image_input_size}};
    } else {
        j["image"] = {{"name", cfg.backends.image_backend}};
    }
    j["perceptual"] = {{"name", perceptual != nullptr ? perceptual->name() : cfg.backends.perceptual_backend}};
    j["libtorch"] = TORCH_VERSION;
    j["opencv"] = codec_version();
    return j;
}

json manifest_base(const std::string& command, const AppConfig& cfg, const fs::path& output) {
    json m;
    m["schema"] = kManifestSchema;
    m["command"] = command;
    m["tool_version"] = kToolVersion;
    m["output_dir"] = fs::absolute(output).lexically_normal().string();
    m["config"] = config_json(cfg);
    m["config_hash"] = config_hash(cfg);
    return m;
}

json load_run_manifest(const fs::path& path, const std::string& command) {
    auto m = read_json(path);
    if (!m.is_object()) throw ManifestError("run manifest must be a JSON object");
    if (m.value("schema", "") != kManifestSchema) throw ManifestError("unsupported manifest schema");
    if (m.value("command", "") != command) {
        throw ManifestError("manifest was written by '" + m.value("command", "?") + "', not '" + command + "'");
    }
    if (!m.contains("inputs") || !m["inputs"].is_object()) throw ManifestError("manifest has no 'inputs' object");
    if (!m.contains("config")) throw ManifestError("manifest has no 'config' object");
    return m;
}

// ---------------------------------------------------------------------------
// stylize
// ---------------------------------------------------------------------------

struct StylizeJob {
    std::string name;
    fs::path source_image;
    std::string source_text;
    std::string style_text;
    AppConfig config;
    fs::path output;
};

int run_stylize_job(const StylizeJob& job, std::ostream& out) {
    ensure_output_dir(job.output);
    const auto& cfg = job.config;
    const auto src_abs = fs::absolute(job.source_image).lexically_normal();

    json manifest = manifest_base("stylize", cfg, job.output);
    manifest["inputs"] = {{"source_image", src_abs.string()},
                          {"source_image_fnv1a", file_fnv1a(src_abs)},
                          {"source_text", job.source_text},
                          {"style_text", job.style_text}};
    manifest["outputs"] = {{"stylized", "stylized.png"},     {"mask", "mask.png"},
                           {"report", "report.json"},        {"checkpoint", "stylenet.ckpt"},
                           {"manifest", "manifest.json"},    {"log", "train_log.jsonl"}};
    manifest["backends"] = backend_json(cfg, nullptr, nullptr);
    write_text(job.output / "manifest.json", manifest.dump(2));

    const Image original = load_input_image(job.source_image);
    const Image source = resize_image(original, cfg.train.resolution, cfg.train.resolution);

    const auto embedder = make_embedder(cfg.backends);
    const auto perceptual = make_perceptual(cfg.backends);
    const auto parser = make_parser(cfg.parser, cfg.parser_command);

    SceneJob scene{source, job.source_text, job.style_text, cfg.train};
    scene.config.log_path = job.output / "train_log.jsonl";
    scene.config.checkpoint_path = job.output / "stylenet.ckpt";
    auto result = train_scene(scene, *embedder, *perceptual, *parser);

    save_png(result.net.stylize(source), job.output / "stylized.png");
    save_mask(*result.report.foreground, job.output / "mask.png");
    auto report = json::parse(result.report.to_json());
    report["backends"] = backend_json(cfg, embedder.get(), perceptual.get());
    report["config_hash"] = config_hash(cfg);
    report["source_size"] = {original.height(), original.width()};
    write_text(job.output / "report.json", report.dump(2));

    out << (job.name.empty() ? "" : job.name + ": ") << "stylized '" << result.report.texts.source << "' -> '"
        << result.report.texts.target << "' in " << result.report.wall_seconds << " s; outputs in "
        << job.output.string() << "\n";
    return kOk;
}

std::vector<StylizeJob> parse_batch(const fs::path& path, const AppConfig& base, const fs::path& output) {
    const auto j = read_json(path);
    const json& scenes = j.is_object() && j.contains("scenes") ? j.at("scenes") : j;
    if (!scenes.is_array() || scenes.empty()) throw ManifestError("batch file needs a non-empty 'scenes' array");
    const auto base_dir = fs::absolute(path).parent_path();
    std::vector<StylizeJob> jobs;
    std::set<std::string> names;
    for (size_t i = 0; i < scenes.size(); ++i) {
        const auto& s = scenes[i];
        const std::string where = "scene " + std::to_string(i);
        StylizeJob job;
        job.name = s.is_object() && s.contains("name") ? s.value("name", "") : "scene" + std::to_string(i);
        if (job.name.empty() || job.name.find('/') != std::string::npos || job.name == "." || job.name == "..") {
            throw ManifestError(where + ": invalid scene name");
        }
        if (!names.insert(job.name).second) throw ManifestError(where + ": duplicate scene name '" + job.name + "'");
        job.source_image = resolve_relative(require_string(s, "source_image", where), base_dir);
        job.source_text = require_string(s, "source_text", where);
        job.style_text = require_string(s, "style_text", where);
        job.config = base;
        if (s.contains("seed")) {
            if (!s["seed"].is_number_unsigned()) throw ManifestError(where + ": 'seed' must be a non-negative integer");
            job.config.train.seed = s["seed"].get<std::uint64_t>();
        }
        job.output = output / job.name;
        jobs.push_back(std::move(job));
    }
    return jobs;
}

int run_jobs_forked(const std::vector<StylizeJob>& jobs, int workers, std::ostream& out, std::ostream& err) {
    std::deque<size_t> pending;
    for (size_t i = 0; i < jobs.size(); ++i) pending.push_back(i);
    std::map<pid_t, size_t> running;
    std::vector<int> codes(jobs.size(), kSoftware);
    out.flush();
    err.flush();
    while (!pending.empty() || !running.empty()) {
        while (!pending.empty() && static_cast<int>(running.size()) < workers) {
            const size_t idx = pending.front();
            pending.pop_front();
            const pid_t pid = ::fork();
            if (pid < 0) throw std::runtime_error("fork failed");
            if (pid == 0) {
                const int code = guarded([&] { return run_stylize_job(jobs[idx], std::cout); }, std::cerr);
                std::cout.flush();
                std::cerr.flush();
                ::_exit(code);
            }
            running[pid] = idx;
        }
        int status = 0;
        const pid_t done = ::waitpid(-1, &status, 0);
        if (done < 0) break;
        const auto it = running.find(done);
        if (it == running.end()) continue;
        codes[it->second] = WIFEXITED(status) ? WEXITSTATUS(status) : kSoftware;
        running.erase(it);
    }
    int first_failure = kOk;
    for (size_t i = 0; i < jobs.size(); ++i) {
        out << "scene " << jobs[i].name << ": exit " << codes[i] << "\n";
        if (codes[i] != kOk && first_failure == kOk) first_failure = codes[i];
    }
    return first_failure;
}

// ---------------------------------------------------------------------------
// ground
// ---------------------------------------------------------------------------

struct GroundJob {
    fs::path source_image;
    std::string source_text;
    AppConfig config;
    fs::path output;
};

int run_ground_job(const GroundJob& job, std::ostream& out, std::ostream& err) {
    ensure_output_dir(job.output);
    const auto& cfg = job.config;
    const auto src_abs = fs::absolute(job.source_image).lexically_normal();
    json manifest = manifest_base("ground", cfg, job.output);
    manifest["inputs"] = {{"source_image", src_abs.string()},
                          {"source_image_fnv1a", file_fnv1a(src_abs)},
                          {"source_text", job.source_text}};
    manifest["outputs"] = {{"mask", "mask.png"},   {"overlay", "overlay.png"},      {"votes", "votes.png"},
                           {"summary", "ground.json"}, {"manifest", "manifest.json"}};
    manifest["backends"] = backend_json(cfg, nullptr, nullptr);
    write_text(job.output / "manifest.json", manifest.dump(2));

    const Image source =
        resize_image(load_input_image(job.source_image), cfg.train.resolution, cfg.train.resolution);
    const auto embedder = make_embedder(cfg.backends);
    const auto text = normalize_text(job.source_text);
    if (text.empty()) throw UsageError("--source-text is empty");
    const auto prs = prs_build_foreground(source, text, *embedder, cfg.train.prs);

    save_mask(prs.foreground, job.output / "mask.png");
    save_png(mask_overlay(source, prs.foreground), job.output / "overlay.png");
    save_votes(prs.votes, job.output / "votes.png");
    json summary;
    summary["source_text"] = text;
    summary["candidates"] = prs.candidates.size();
    summary["selected"] = prs.selection.indices;
    summary["tau"] = cfg.train.prs.vote_threshold;
    summary["max_votes"] = prs.votes.max();
    summary["foreground_pixels"] = prs.foreground.count();
    summary["backends"] = backend_json(cfg, embedder.get(), nullptr);
    write_text(job.output / "ground.json", summary.dump(2));

    if (!prs.foreground.any()) throw GroundingFailure(text);
    (void)err;
    out << "grounded '" << text << "': " << prs.selection.indices.size() << " of " << prs.candidates.size()
        << " patches selected, " << prs.foreground.count() << " foreground pixels\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct TripleEntry {
    std::string id;
    fs::path source;
    fs::path stylized;
    fs::path mask;
    std::string target_text;
};

std::vector<TripleEntry> parse_triples(const fs::path& path) {
    const auto j = read_json(path);
    const json& list = j.is_object() && j.contains("triples") ? j.at("triples") : j;
    if (!list.is_array()) throw ManifestError("expected a JSON array of triples (or {\"triples\": [...]})");
    if (list.empty()) throw ManifestError("triples list is empty");
    const auto base_dir = fs::absolute(path).parent_path();
    std::vector<TripleEntry> out;
    for (size_t i = 0; i < list.size(); ++i) {
        const auto& t = list[i];
        const std::string where = "triple " + std::to_string(i);
        if (!t.is_object()) throw ManifestError(where + " is not an object");
        TripleEntry e;
        e.id = t.contains("id") ? (t["id"].is_string() ? t["id"].get<std::string>() : t["id"].dump())
                                : std::to_string(i);
        e.source = resolve_relative(require_string(t, "source", where), base_dir);
        e.stylized = resolve_relative(require_string(t, "stylized", where), base_dir);
        e.mask = resolve_relative(require_string(t, "mask", where), base_dir);
        e.target_text = require_string(t, "target_text", where);
        out.push_back(std::move(e));
    }
    return out;
}

int run_evaluate_job(const fs::path& triples_path, const AppConfig& cfg, const fs::path& output, std::ostream& out,
                     std::ostream& err) {
    const auto entries = parse_triples(triples_path);
    ensure_output_dir(output);
    json manifest = manifest_base("evaluate", cfg, output);
    manifest["inputs"] = {{"triples", fs::absolute(triples_path).lexically_normal().string()},
                          {"triples_fnv1a", file_fnv1a(triples_path)}};
    manifest["outputs"] = {{"csv", "metrics.csv"}, {"json", "metrics.json"}, {"manifest", "manifest.json"}};
    manifest["backends"] = backend_json(cfg, nullptr, nullptr);
    write_text(output / "manifest.json", manifest.dump(2));

    const auto embedder = make_embedder(cfg.backends);
    const auto perceptual = make_perceptual(cfg.backends);
    const auto dists = try_make_dists(cfg.backends);
    const MetricBackends backends{embedder.get(), perceptual.get(), dists.get()};
    if (!dists) err << "note: DISTS weights not found; dists_b reported as 'skipped'\n";

    std::vector<EvalRow> rows;
    for (const auto& e : entries) {
        EvalRow row{e.id, e.target_text, std::nullopt, {}};
        try {
            EvalTriple t;
            t.id = e.id;
            t.target_text = e.target_text;
            t.stylized = load_image(e.stylized);
            // The source and mask are brought to the stylized resolution, which
            // is the resolution the network saw.
            t.source = resize_image(load_image(e.source), t.stylized.height(), t.stylized.width());
            t.fg_gt = resize_mask(load_mask(e.mask), t.stylized.height(), t.stylized.width());
            row.report = evaluate(t, backends);
        } catch (const Error& ex) {
            row.error = ex.what();
            err << "warning: triple '" << e.id << "': " << ex.what() << "\n";
        }
        rows.push_back(std::move(row));
    }
    const auto batch = summarize(std::move(rows));
    write_text(output / "metrics.csv", batch.to_csv());
    auto summary = json::parse(batch.to_json());
    summary["backends"] = backend_json(cfg, embedder.get(), perceptual.get());
    write_text(output / "metrics.json", summary.dump(2));
    out << "evaluated " << batch.valid_rows << " of " << batch.rows.size() << " triples; results in "
        << output.string() << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// grid
// ---------------------------------------------------------------------------

int run_grid_job(const std::vector<std::string>& images, const std::vector<std::string>& captions, int cell,
                 const fs::path& output, std::ostream& out) {
    if (images.empty()) throw UsageError("grid needs at least one --image");
    if (!captions.empty() && captions.size() != images.size()) {
        throw UsageError("give either no --caption or exactly one per --image");
    }
    if (cell < 16) throw UsageError("--cell must be >= 16");
    ensure_output_dir(output);
    json manifest = manifest_base("grid", AppConfig{}, output);
    json imgs = json::array();
    for (const auto& p : images) imgs.push_back(fs::absolute(p).lexically_normal().string());
    manifest["inputs"] = {{"images", imgs}, {"captions", captions}, {"cell", cell}};
    manifest["outputs"] = {{"grid", "grid.png"}, {"manifest", "manifest.json"}};
    write_text(output / "manifest.json", manifest.dump(2));

    std::vector<GridItem> items;
    for (size_t i = 0; i < images.size(); ++i) {
        items.push_back({load_input_image(images[i]), captions.empty() ? fs::path(images[i]).stem().string() : captions[i]});
    }
    const auto grid = make_grid(items, cell);
    save_png(grid, output / "grid.png");
    const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(items.size()))));
    out << "wrote " << (output / "grid.png").string() << " (" << (items.size() + cols - 1) / cols << "x" << cols
        << " grid)\n";
    return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Object-centric text-driven style transfer", "objstyle"};
    app.set_version_flag("--version", kToolVersion);
    app.require_subcommand(1);

    // stylize ---------------------------------------------------------------
    auto* stylize = app.add_subcommand("stylize", "train a per-scene network and stylize the named object");
    std::string s_image, s_source, s_style, s_output = "objstyle_out", s_manifest, s_batch;
    std::optional<std::uint64_t> s_seed;
    int s_jobs = 1;
    ConfigSources s_cfg;
    stylize->add_option("--source-image", s_image, "input image (PNG/JPEG)");
    stylize->add_option("--source-text", s_source, "phrase naming the object to restyle");
    stylize->add_option("--style-text", s_style, "phrase describing the new appearance");
    auto* s_output_opt = stylize->add_option("--output", s_output, "output directory")->capture_default_str();
    stylize->add_option("--seed", s_seed, "training seed (overrides train.seed)");
    stylize->add_option("--from-manifest", s_manifest, "re-run the job recorded in a manifest.json");
    stylize->add_option("--batch", s_batch, "JSON list of scenes to stylize");
    stylize->add_option("--jobs", s_jobs, "worker processes for --batch")->check(CLI::PositiveNumber);
    add_config_flags(stylize, s_cfg);

    // ground ----------------------------------------------------------------
    auto* ground = app.add_subcommand("ground", "estimate the foreground region named by a text");
    std::string g_image, g_source, g_output = "objstyle_ground", g_manifest;
    std::optional<int> g_tau;
    ConfigSources g_cfg;
    ground->add_option("--source-image", g_image, "input image (PNG/JPEG)");
    ground->add_option("--source-text", g_source, "phrase naming the object");
    auto* g_output_opt = ground->add_option("--output", g_output, "output directory")->capture_default_str();
    ground->add_option("--tau", g_tau, "vote threshold (overrides prs.tau)");
    ground->add_option("--from-manifest", g_manifest, "re-run the job recorded in a manifest.json");
    add_config_flags(ground, g_cfg);

    // evaluate --------------------------------------------------------------
    auto* evaluate_cmd = app.add_subcommand("evaluate", "masked foreground/background metrics over triples");
    std::string e_triples, e_output = "objstyle_eval", e_manifest;
    ConfigSources e_cfg;
    evaluate_cmd->add_option("--triples", e_triples, "JSON list of {source, stylized, mask, target_text}");
    auto* e_output_opt = evaluate_cmd->add_option("--output", e_output, "output directory")->capture_default_str();
    evaluate_cmd->add_option("--from-manifest", e_manifest, "re-run the job recorded in a manifest.json");
    add_config_flags(evaluate_cmd, e_cfg);

    // grid ------------------------------------------------------------------
    auto* grid = app.add_subcommand("grid", "tile images with captions into one PNG");
    std::vector<std::string> r_images, r_captions;
    std::string r_output = "objstyle_grid", r_manifest;
    int r_cell = 256;
    grid->add_option("--image", r_images, "image path; repeatable");
    grid->add_option("--caption", r_captions, "caption for the matching --image; repeatable");
    grid->add_option("--cell", r_cell, "cell size in pixels")->capture_default_str();
    auto* r_output_opt = grid->add_option("--output", r_output, "output directory")->capture_default_str();
    grid->add_option("--from-manifest", r_manifest, "re-run the job recorded in a manifest.json");

    // defaults --------------------------------------------------------------
    auto* defaults = app.add_subcommand("defaults", "print every config key with its default value");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kUsage;
    }

    auto usage_of = [&](CLI::App* cmd) { return cmd->help(); };

    if (*stylize) {
        return guarded(
            [&]() -> int {
                if (!s_manifest.empty()) {
                    const auto m = load_run_manifest(s_manifest, "stylize");
                    StylizeJob job;
                    job.source_image = require_string(m["inputs"], "source_image", "inputs");
                    job.source_text = require_string(m["inputs"], "source_text", "inputs");
                    job.style_text = require_string(m["inputs"], "style_text", "inputs");
                    job.config = config_from_json(m["config"]);
                    job.output = s_output_opt->count() > 0 ? fs::path(s_output)
                                                           : fs::path(require_string(m, "output_dir", "manifest"));
                    return run_stylize_job(job, out);
                }
                AppConfig cfg = load_config(s_cfg);
                if (s_seed) cfg.train.seed = *s_seed;
                validate_config(cfg, !s_cfg.file.empty());
                if (!s_batch.empty()) {
                    const auto jobs = parse_batch(s_batch, cfg, s_output);
                    if (s_jobs <= 1) {
                        int first_failure = kOk;
                        for (const auto& job : jobs) {
                            const int code = guarded([&] { return run_stylize_job(job, out); }, err);
                            out << "scene " << job.name << ": exit " << code << "\n";
                            if (code != kOk && first_failure == kOk) first_failure = code;
                        }
                        return first_failure;
                    }
                    return run_jobs_forked(jobs, s_jobs, out, err);
                }
                if (s_image.empty() || s_source.empty() || s_style.empty()) {
                    err << usage_of(stylize);
                    throw UsageError("stylize needs --source-image, --source-text and --style-text");
                }
                return run_stylize_job({"", s_image, s_source, s_style, cfg, s_output}, out);
            },
            err);
    }

    if (*ground) {
        return guarded(
            [&]() -> int {
                if (!g_manifest.empty()) {
                    const auto m = load_run_manifest(g_manifest, "ground");
                    GroundJob job{require_string(m["inputs"], "source_image", "inputs"),
                                  require_string(m["inputs"], "source_text", "inputs"), config_from_json(m["config"]),
                                  g_output_opt->count() > 0 ? fs::path(g_output)
                                                            : fs::path(require_string(m, "output_dir", "manifest"))};
                    return run_ground_job(job, out, err);
                }
                AppConfig cfg = load_config(g_cfg);
                if (g_tau) cfg.train.prs.vote_threshold = *g_tau;
                validate_config(cfg, !g_cfg.file.empty());
                if (g_image.empty() || g_source.empty()) {
                    err << usage_of(ground);
                    throw UsageError("ground needs --source-image and --source-text");
                }
                return run_ground_job({g_image, g_source, cfg, g_output}, out, err);
            },
            err);
    }

    if (*evaluate_cmd) {
        return guarded(
            [&]() -> int {
                if (!e_manifest.empty()) {
                    const auto m = load_run_manifest(e_manifest, "evaluate");
                    const auto output = e_output_opt->count() > 0 ? fs::path(e_output)
                                                                  : fs::path(require_string(m, "output_dir", "manifest"));
                    return run_evaluate_job(require_string(m["inputs"], "triples", "inputs"),
                                            config_from_json(m["config"]), output, out, err);
                }
                AppConfig cfg = load_config(e_cfg);
                validate_config(cfg, !e_cfg.file.empty());
                if (e_triples.empty()) {
                    err << usage_of(evaluate_cmd);
                    throw UsageError("evaluate needs --triples");
                }
                return run_evaluate_job(e_triples, cfg, e_output, out, err);
            },
            err);
    }

    if (*grid) {
        return guarded(
            [&]() -> int {
                if (!r_manifest.empty()) {
                    const auto m = load_run_manifest(r_manifest, "grid");
                    const auto& in = m["inputs"];
                    try {
                        const auto output = r_output_opt->count() > 0
                                                ? fs::path(r_output)
                                                : fs::path(require_string(m, "output_dir", "manifest"));
                        return run_grid_job(in.at("images").get<std::vector<std::string>>(),
                                            in.at("captions").get<std::vector<std::string>>(), in.at("cell").get<int>(),
                                            output, out);
                    } catch (const json::exception& e) {
                        throw ManifestError(e.what());
                    }
                }
                if (r_images.empty()) err << usage_of(grid);
                return run_grid_job(r_images, r_captions, r_cell, r_output, out);
            },
            err);
    }

    if (*defaults) {
        out << "# objstyle configuration defaults (key = value)\n";
        for (const auto& [k, v] : default_key_values()) out << k << " = " << v << "\n";
        return kOk;
    }
    return kUsage;
}

}  // namespace objstyle::cli
