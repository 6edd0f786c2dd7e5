// SPDX-License-Identifier: Apache-2.0
#include "objstyle/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "objstyle/error.hpp"

namespace objstyle {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
    throw ConfigError("config key '" + key + "': expected " + expected + ", got '" + value + "'");
}

template <typename T>
T parse_number(const std::string& key, const std::string& value, const char* expected) {
    T out{};
    const auto* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc{} || ptr != end) bad_value(key, value, expected);
    return out;
}

int parse_int(const std::string& k, const std::string& v) { return parse_number<int>(k, v, "an integer"); }
double parse_double(const std::string& k, const std::string& v) { return parse_number<double>(k, v, "a number"); }

bool parse_bool(const std::string& k, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    bad_value(k, v, "a boolean");
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto t = trim(item);
        if (!t.empty()) out.push_back(std::move(t));
    }
    return out;
}

std::vector<int> parse_ints(const std::string& k, const std::string& v) {
    std::vector<int> out;
    for (const auto& s : split_list(v)) out.push_back(parse_int(k, s));
    return out;
}

std::vector<float> parse_floats(const std::string& k, const std::string& v) {
    std::vector<float> out;
    for (const auto& s : split_list(v)) out.push_back(static_cast<float>(parse_double(k, s)));
    return out;
}

std::string fmt(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

template <typename Seq>
std::string join(const Seq& seq) {
    std::string out;
    for (const auto& x : seq) {
        if (!out.empty()) out += ',';
        if constexpr (std::is_same_v<std::decay_t<decltype(x)>, std::string>) out += x;
        else out += fmt(static_cast<double>(x));
    }
    return out;
}

constexpr std::string_view kMockTextPrefix = "mock.text[";

using Setter = std::function<void(AppConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"train.total_iters", [](auto& c, auto& k, auto& v) { c.train.total_iters = parse_int(k, v); }},
        {"train.early_iters", [](auto& c, auto& k, auto& v) { c.train.early_iters = parse_int(k, v); }},
        {"train.lr", [](auto& c, auto& k, auto& v) { c.train.lr = parse_double(k, v); }},
        {"train.lr_halve_at", [](auto& c, auto& k, auto& v) { c.train.lr_halve_at = parse_int(k, v); }},
        {"train.optimizer", [](auto& c, auto&, auto& v) { c.train.optimizer = v; }},
        {"train.seed", [](auto& c, auto& k, auto& v) { c.train.seed = parse_number<std::uint64_t>(k, v, "a seed"); }},
        {"train.resolution",
         [](auto& c, auto& k, auto& v) {
             c.train.resolution = parse_int(k, v);
             c.train.net.input_resolution = c.train.resolution;
         }},
        {"train.base_patch_count", [](auto& c, auto& k, auto& v) { c.train.base_patch_count = parse_int(k, v); }},
        {"train.sample_patch_size", [](auto& c, auto& k, auto& v) { c.train.sample_patch_size = parse_int(k, v); }},
        {"train.n_aug", [](auto& c, auto& k, auto& v) { c.train.n_aug = parse_int(k, v); }},
        {"train.distortion_scale", [](auto& c, auto& k, auto& v) { c.train.distortion_scale = parse_double(k, v); }},
        {"train.independent_tmps", [](auto& c, auto& k, auto& v) { c.train.independent_tmps = parse_bool(k, v); }},
        {"train.content_layers", [](auto& c, auto&, auto& v) { c.train.content_layers = split_list(v); }},
        {"loss.lambda_dir", [](auto& c, auto& k, auto& v) { c.train.weights.dir = parse_double(k, v); }},
        {"loss.lambda_con", [](auto& c, auto& k, auto& v) { c.train.weights.con = parse_double(k, v); }},
        {"loss.lambda_abp", [](auto& c, auto& k, auto& v) { c.train.weights.abp = parse_double(k, v); }},
        {"loss.lambda_c", [](auto& c, auto& k, auto& v) { c.train.weights.content = parse_double(k, v); }},
        {"loss.lambda_tv", [](auto& c, auto& k, auto& v) { c.train.weights.tv = parse_double(k, v); }},
        {"tmps.top_m", [](auto& c, auto& k, auto& v) { c.train.prs.tmps.top_m = parse_int(k, v); }},
        {"tmps.hard_floor", [](auto& c, auto& k, auto& v) { c.train.prs.tmps.hard_floor = parse_double(k, v); }},
        {"prs.grid_side", [](auto& c, auto& k, auto& v) { c.train.prs.grid_side = parse_int(k, v); }},
        {"prs.patch_sizes",
         [](auto& c, auto& k, auto& v) {
             const auto s = parse_ints(k, v);
             if (s.size() != 3) bad_value(k, v, "three comma-separated sizes");
             c.train.prs.patch_sizes = {s[0], s[1], s[2]};
         }},
        {"prs.reference_resolution",
         [](auto& c, auto& k, auto& v) { c.train.prs.reference_resolution = parse_int(k, v); }},
        {"prs.tau", [](auto& c, auto& k, auto& v) { c.train.prs.vote_threshold = parse_int(k, v); }},
        {"net.down_channels", [](auto& c, auto& k, auto& v) { c.train.net.down_channels = parse_ints(k, v); }},
        {"net.up_channels", [](auto& c, auto& k, auto& v) { c.train.net.up_channels = parse_ints(k, v); }},
        {"backend.image", [](auto& c, auto&, auto& v) { c.backends.image_backend = v; }},
        {"backend.perceptual", [](auto& c, auto&, auto& v) { c.backends.perceptual_backend = v; }},
        {"backend.weights_dir", [](auto& c, auto&, auto& v) { c.backends.weights_dir = v; }},
        {"backend.prompt_template",
         [](auto& c, auto&, auto& v) {
             c.backends.prompt_template = v;
             c.backends.mock.prompt_template = v;
         }},
        {"text.parser", [](auto& c, auto&, auto& v) { c.parser = v; }},
        {"text.parser_command", [](auto& c, auto&, auto& v) { c.parser_command = v; }},
    };
    return table;
}

}  // namespace

KeyValues parse_key_values(std::istream& in, const std::string& origin) {
    KeyValues kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view view = line;
        // '#' only opens a comment at the start of a line or after whitespace,
        // so values such as colour codes survive.
        for (size_t i = 0; i < view.size(); ++i) {
            if (view[i] == '#' && (i == 0 || view[i - 1] == ' ' || view[i - 1] == '\t')) {
                view = view.substr(0, i);
                break;
            }
        }
        if (trim(view).empty()) continue;
        const auto eq = view.find('=');
        // A '=' inside a bracketed mock key is part of the key.
        auto key_end = eq;
        if (const auto lb = view.find('['); lb != std::string_view::npos && lb < eq) {
            const auto rb = view.find(']', lb);
            if (rb != std::string_view::npos) key_end = view.find('=', rb);
        }
        if (key_end == std::string_view::npos) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        }
        auto key = trim(view.substr(0, key_end));
        if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
        kv[key] = trim(view.substr(key_end + 1));
    }
    return kv;
}

KeyValues load_key_values(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    return parse_key_values(in, path.string());
}

void apply_key_value(AppConfig& config, const std::string& key, const std::string& value) {
    if (key.starts_with(kMockTextPrefix) && key.ends_with("]")) {
        const auto phrase = normalize_text(key.substr(kMockTextPrefix.size(), key.size() - kMockTextPrefix.size() - 1));
        if (phrase.empty()) throw ConfigError("config key '" + key + "': empty phrase");
        const auto v = parse_floats(key, value);
        if (v.size() == 3) {
            config.backends.mock.text_overrides[phrase] = MockEmbedder::embedding_for_color(v[0], v[1], v[2]);
        } else if (v.size() == static_cast<size_t>(MockEmbedder::kDim)) {
            config.backends.mock.text_overrides[phrase] = v;
        } else {
            bad_value(key, value, "3 colour components or 8 embedding components");
        }
        return;
    }
    const auto& table = setters();
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(config, key, value);
}

void apply_key_values(AppConfig& config, const KeyValues& kv) {
    for (const auto& [k, v] : kv) apply_key_value(config, k, v);
}

KeyValues to_key_values(const AppConfig& c) {
    const auto& t = c.train;
    KeyValues kv = {
        {"train.total_iters", std::to_string(t.total_iters)},
        {"train.early_iters", std::to_string(t.early_iters)},
        {"train.lr", fmt(t.lr)},
        {"train.lr_halve_at", std::to_string(t.lr_halve_at)},
        {"train.optimizer", t.optimizer},
        {"train.seed", std::to_string(t.seed)},
        {"train.resolution", std::to_string(t.resolution)},
        {"train.base_patch_count", std::to_string(t.base_patch_count)},
        {"train.sample_patch_size", std::to_string(t.sample_patch_size)},
        {"train.n_aug", std::to_string(t.n_aug)},
        {"train.distortion_scale", fmt(t.distortion_scale)},
        {"train.independent_tmps", t.independent_tmps ? "true" : "false"},
        {"train.content_layers", join(t.content_layers)},
        {"loss.lambda_dir", fmt(t.weights.dir)},
        {"loss.lambda_con", fmt(t.weights.con)},
        {"loss.lambda_abp", fmt(t.weights.abp)},
        {"loss.lambda_c", fmt(t.weights.content)},
        {"loss.lambda_tv", fmt(t.weights.tv)},
        {"tmps.top_m", std::to_string(t.prs.tmps.top_m)},
        {"tmps.hard_floor", fmt(t.prs.tmps.hard_floor)},
        {"prs.grid_side", std::to_string(t.prs.grid_side)},
        {"prs.patch_sizes", join(t.prs.patch_sizes)},
        {"prs.reference_resolution", std::to_string(t.prs.reference_resolution)},
        {"prs.tau", std::to_string(t.prs.vote_threshold)},
        {"net.down_channels", join(t.net.down_channels)},
        {"net.up_channels", join(t.net.up_channels)},
        {"backend.image", c.backends.image_backend},
        {"backend.perceptual", c.backends.perceptual_backend},
        {"backend.weights_dir", c.backends.weights_dir},
        {"backend.prompt_template", c.backends.prompt_template},
        {"text.parser", c.parser},
        {"text.parser_command", c.parser_command},
    };
    for (const auto& [phrase, vec] : c.backends.mock.text_overrides) {
        kv[std::string(kMockTextPrefix) + phrase + "]"] = join(vec);
    }
    return kv;
}

std::string dump_key_values(const KeyValues& kv) {
    std::string out;
    for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
    return out;
}

std::string config_hash(const AppConfig& config) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : dump_key_values(to_key_values(config))) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<std::pair<std::string, std::string>> default_key_values() {
    const auto kv = to_key_values(AppConfig{});
    return {kv.begin(), kv.end()};
}

}  // namespace objstyle
