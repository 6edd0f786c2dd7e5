// SPDX-License-Identifier: Apache-2.0
#include "objstyle/backends.hpp"

#include <zlib.h>

#include <algorithm>
#include <cctype>
#include <climits>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "objstyle/error.hpp"

namespace objstyle {

namespace fs = std::filesystem;
namespace F = torch::nn::functional;

// ---------------------------------------------------------------------------
// ClipTokenizer
// ---------------------------------------------------------------------------

namespace {

std::string utf8_encode(int cp) {
    std::string out;
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
    return out;
}

std::vector<std::string> read_lines_maybe_gzip(const fs::path& path) {
    gzFile f = gzopen(path.c_str(), "rb");  // transparently reads plain files too
    if (!f) throw BackendLoadError("cannot open " + path.string());
    std::string content;
    char buf[1 << 16];
    int n = 0;
    while ((n = gzread(f, buf, sizeof buf)) > 0) content.append(buf, static_cast<size_t>(n));
    gzclose(f);
    std::vector<std::string> lines;
    std::istringstream ss(content);
    std::string line;
    while (std::getline(ss, line)) lines.push_back(line);
    return lines;
}

bool is_letter_byte(unsigned char c) { return std::isalpha(c) || c >= 0x80; }

// Mirrors the CLIP pre-tokenization regex for ASCII input; non-ASCII bytes count as letters.
std::vector<std::string> pre_tokenize(const std::string& text) {
    static const char* kContractions[] = {"'s", "'t", "'re", "'ve", "'m", "'ll", "'d"};
    static const std::string kSot = "<|startoftext|>";
    static const std::string kEot = "<|endoftext|>";
    std::vector<std::string> out;
    size_t i = 0;
    while (i < text.size()) {
        const auto c = static_cast<unsigned char>(text[i]);
        if (std::isspace(c)) {
            ++i;
            continue;
        }
        if (text.compare(i, kSot.size(), kSot) == 0) {
            out.push_back(kSot);
            i += kSot.size();
            continue;
        }
        if (text.compare(i, kEot.size(), kEot) == 0) {
            out.push_back(kEot);
            i += kEot.size();
            continue;
        }
        bool matched = false;
        for (const char* con : kContractions) {
            const size_t len = std::char_traits<char>::length(con);
            if (text.compare(i, len, con) == 0) {
                out.emplace_back(con);
                i += len;
                matched = true;
                break;
            }
        }
        if (matched) continue;
        if (is_letter_byte(c)) {
            size_t j = i;
            while (j < text.size() && is_letter_byte(static_cast<unsigned char>(text[j]))) ++j;
            out.push_back(text.substr(i, j - i));
            i = j;
        } else if (std::isdigit(c)) {
            out.push_back(text.substr(i, 1));
            ++i;
        } else {
            size_t j = i;
            while (j < text.size()) {
                const auto d = static_cast<unsigned char>(text[j]);
                if (std::isspace(d) || is_letter_byte(d) || std::isdigit(d)) break;
                ++j;
            }
            out.push_back(text.substr(i, j - i));
            i = j;
        }
    }
    return out;
}

}  // namespace

ClipTokenizer::ClipTokenizer(const fs::path& merges_file) {
    auto lines = read_lines_maybe_gzip(merges_file);
    // First line is a version header; CLIP uses the next 49152-256-2 merges.
    constexpr size_t kMerges = 49152 - 256 - 2;
    std::vector<std::string> merges;
    for (size_t i = 1; i < lines.size() && merges.size() < kMerges; ++i) {
        if (!lines[i].empty()) merges.push_back(lines[i]);
    }
    build(merges);
}

ClipTokenizer::ClipTokenizer(const std::vector<std::string>& merges) { build(merges); }

void ClipTokenizer::build(const std::vector<std::string>& merges) {
    std::vector<int> bs;
    for (int b = '!'; b <= '~'; ++b) bs.push_back(b);
    for (int b = 0xA1; b <= 0xAC; ++b) bs.push_back(b);
    for (int b = 0xAE; b <= 0xFF; ++b) bs.push_back(b);
    std::vector<int> cs = bs;
    int n = 0;
    for (int b = 0; b < 256; ++b) {
        if (std::find(bs.begin(), bs.end(), b) == bs.end()) {
            bs.push_back(b);
            cs.push_back(256 + n);
            ++n;
        }
    }
    byte_encoder_.assign(256, {});
    std::vector<std::string> vocab;
    for (size_t i = 0; i < bs.size(); ++i) {
        byte_encoder_[static_cast<size_t>(bs[i])] = utf8_encode(cs[i]);
        vocab.push_back(utf8_encode(cs[i]));
    }
    const size_t base = vocab.size();
    for (size_t i = 0; i < base; ++i) vocab.push_back(vocab[i] + "</w>");
    int rank = 0;
    for (const auto& m : merges) {
        auto sp = m.find(' ');
        if (sp == std::string::npos) throw BackendLoadError("malformed BPE merge line: " + m);
        const std::string a = m.substr(0, sp);
        const std::string b = m.substr(sp + 1);
        vocab.push_back(a + b);
        ranks_.emplace(a + '\x01' + b, rank++);
    }
    vocab.emplace_back("<|startoftext|>");
    vocab.emplace_back("<|endoftext|>");
    for (size_t i = 0; i < vocab.size(); ++i) encoder_.emplace(vocab[i], static_cast<std::int64_t>(i));
    sot_ = encoder_.at("<|startoftext|>");
    eot_ = encoder_.at("<|endoftext|>");
}

std::vector<std::string> ClipTokenizer::bpe(const std::string& token) const {
    std::vector<std::string> word;
    for (unsigned char c : token) word.push_back(byte_encoder_[c]);
    if (word.empty()) return word;
    word.back() += "</w>";
    while (word.size() > 1) {
        int best = INT_MAX;
        size_t best_i = 0;
        for (size_t i = 0; i + 1 < word.size(); ++i) {
            auto it = ranks_.find(word[i] + '\x01' + word[i + 1]);
            if (it != ranks_.end() && it->second < best) {
                best = it->second;
                best_i = i;
            }
        }
        if (best == INT_MAX) break;
        const std::string first = word[best_i];
        const std::string second = word[best_i + 1];
        std::vector<std::string> merged;
        for (size_t i = 0; i < word.size();) {
            if (i + 1 < word.size() && word[i] == first && word[i + 1] == second) {
                merged.push_back(first + second);
                i += 2;
            } else {
                merged.push_back(word[i]);
                ++i;
            }
        }
        word = std::move(merged);
    }
    return word;
}

std::vector<std::int64_t> ClipTokenizer::encode(const std::string& text) const {
    std::vector<std::int64_t> ids;
    for (const auto& tok : pre_tokenize(normalize_text(text))) {
        if (tok == "<|startoftext|>" || tok == "<|endoftext|>") {
            ids.push_back(encoder_.at(tok));
            continue;
        }
        for (const auto& piece : bpe(tok)) {
            auto it = encoder_.find(piece);
            if (it == encoder_.end()) throw RejectedInputError("token piece not in vocabulary: " + piece);
            ids.push_back(it->second);
        }
    }
    return ids;
}

torch::Tensor ClipTokenizer::tokenize(const std::string& text) const {
    auto ids = encode(text);
    if (ids.size() > kContextLength - 2) ids.resize(kContextLength - 2);
    auto out = torch::zeros({1, kContextLength}, torch::kInt64);
    auto acc = out.accessor<std::int64_t, 2>();
    acc[0][0] = sot_;
    for (size_t i = 0; i < ids.size(); ++i) acc[0][static_cast<long>(i) + 1] = ids[i];
    acc[0][static_cast<long>(ids.size()) + 1] = eot_;
    return out;
}

// ---------------------------------------------------------------------------
// CLIP (TorchScript)
// ---------------------------------------------------------------------------

ClipTorchScriptEmbedder::ClipTorchScriptEmbedder(const fs::path& weights_dir, std::string prompt_template)
    : ImageTextEmbedder(std::move(prompt_template)) {
    const auto model_path = weights_dir / "clip-vit-b32.pt";
    fs::path vocab_path = weights_dir / "bpe_simple_vocab_16e6.txt";
    if (!fs::exists(vocab_path)) vocab_path += ".gz";
    if (!fs::exists(model_path)) throw BackendLoadError("CLIP archive not found: " + model_path.string());
    if (!fs::exists(vocab_path)) throw BackendLoadError("CLIP BPE vocabulary not found in " + weights_dir.string());
    try {
        module_ = torch::jit::load(model_path.string());
    } catch (const c10::Error& e) {
        throw BackendLoadError("failed to load " + model_path.string() + ": " + e.what_without_backtrace());
    }
    module_.eval();
    for (auto p : module_.parameters()) p.set_requires_grad(false);
    tokenizer_ = std::make_unique<ClipTokenizer>(vocab_path);
}

BackendDescriptor ClipTorchScriptEmbedder::descriptor() const {
    return {"clip-vit-b32", embed_dim_, kInputSize, true};
}

torch::Tensor ClipTorchScriptEmbedder::preprocess(const torch::Tensor& chw) {
    static const auto mean = torch::tensor({0.48145466, 0.4578275, 0.40821073}).view({3, 1, 1});
    static const auto stdv = torch::tensor({0.26862954, 0.26130258, 0.27577711}).view({3, 1, 1});
    auto resized = F::interpolate(chw.unsqueeze(0), F::InterpolateFuncOptions()
                                                        .size(std::vector<int64_t>{kInputSize, kInputSize})
                                                        .mode(torch::kBicubic)
                                                        .align_corners(false))
                       .squeeze(0);
    return (resized - mean.to(chw.scalar_type())) / stdv.to(chw.scalar_type());
}

torch::Tensor ClipTorchScriptEmbedder::encode_images(const std::vector<torch::Tensor>& images) const {
    if (images.empty()) throw RejectedInputError("encode_images: empty batch");
    std::vector<torch::Tensor> batch;
    batch.reserve(images.size());
    for (const auto& img : images) batch.push_back(preprocess(img.to(torch::kFloat32)));
    auto out = module_.run_method("encode_image", torch::stack(batch)).toTensor();
    return out.to(images.front().scalar_type());
}

torch::Tensor ClipTorchScriptEmbedder::encode_text_impl(const std::string& text) const {
    torch::NoGradGuard no_grad;
    auto tokens = tokenizer_->tokenize(text);
    return module_.run_method("encode_text", tokens).toTensor().squeeze(0).to(torch::kFloat32);
}

// ---------------------------------------------------------------------------
// VGG-19
// ---------------------------------------------------------------------------

Vgg19Features::Vgg19Features() {
    const std::vector<std::vector<int>> blocks = {{64, 64}, {128, 128}, {256, 256, 256, 256}, {512, 512, 512, 512},
                                                  {512, 512, 512, 512}};
    int in_ch = 3;
    for (size_t b = 0; b < blocks.size(); ++b) {
        for (size_t i = 0; i < blocks[b].size(); ++i) {
            const int out_ch = blocks[b][i];
            net_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in_ch, out_ch, 3).padding(1)));
            net_->push_back(torch::nn::ReLU());
            const auto suffix = std::to_string(b + 1) + "_" + std::to_string(i + 1);
            names_.push_back("conv" + suffix);
            names_.push_back("relu" + suffix);
            in_ch = out_ch;
        }
        net_->push_back(torch::nn::MaxPool2d(torch::nn::MaxPool2dOptions(2).stride(2)));
        names_.push_back("pool" + std::to_string(b + 1));
    }
    net_->eval();
    for (auto& p : net_->parameters()) p.set_requires_grad(false);
}

Vgg19Features::Vgg19Features(const fs::path& weights_dir) : Vgg19Features() {
    const auto path = weights_dir / "vgg19.pt";
    if (!fs::exists(path)) throw BackendLoadError("VGG-19 archive not found: " + path.string());
    try {
        load_from(torch::jit::load(path.string()));
    } catch (const c10::Error& e) {
        throw BackendLoadError("failed to load " + path.string() + ": " + e.what_without_backtrace());
    }
}

void Vgg19Features::load_from(const torch::jit::Module& module) {
    torch::NoGradGuard no_grad;
    auto params = net_->named_parameters(true);
    size_t copied = 0;
    for (const auto& p : module.named_parameters(true)) {
        auto* dst = params.find(p.name);
        if (dst == nullptr) continue;
        if (dst->sizes() != p.value.sizes()) throw BackendLoadError("VGG-19 parameter shape mismatch for " + p.name);
        dst->copy_(p.value);
        ++copied;
    }
    if (copied != params.size()) {
        throw BackendLoadError("VGG-19 archive provided " + std::to_string(copied) + " of " +
                               std::to_string(params.size()) + " parameters");
    }
}

PerceptualFeatures Vgg19Features::features(const torch::Tensor& batch, const std::vector<std::string>& layers) const {
    check_layers(layers);
    if (batch.dim() != 4 || batch.size(1) != 3) throw ShapeError("vgg19: expected [N,3,H,W]");
    size_t last = 0;
    for (const auto& l : layers) {
        last = std::max(last, static_cast<size_t>(std::find(names_.begin(), names_.end(), l) - names_.begin()));
    }
    const auto opts = batch.options();
    auto mean = torch::tensor({0.485, 0.456, 0.406}, opts).view({1, 3, 1, 1});
    auto stdv = torch::tensor({0.229, 0.224, 0.225}, opts).view({1, 3, 1, 1});
    auto x = (batch - mean) / stdv;

    PerceptualFeatures out;
    size_t i = 0;
    for (auto it = net_->begin(); it != net_->end() && i <= last && !layers.empty(); ++it, ++i) {
        x = it->forward(x);
        if (std::find(layers.begin(), layers.end(), names_[i]) != layers.end()) out.emplace(names_[i], x);
    }
    return out;
}

// ---------------------------------------------------------------------------
// DISTS
// ---------------------------------------------------------------------------

DistsMetric::DistsMetric(const fs::path& weights_dir) {
    const auto path = weights_dir / "dists.pt";
    if (!fs::exists(path)) throw BackendLoadError("DISTS archive not found: " + path.string());
    try {
        module_ = torch::jit::load(path.string());
    } catch (const c10::Error& e) {
        throw BackendLoadError("failed to load " + path.string() + ": " + e.what_without_backtrace());
    }
    module_.eval();
}

double DistsMetric::operator()(const torch::Tensor& x, const torch::Tensor& y) const {
    torch::NoGradGuard no_grad;
    auto out = module_.forward({x.to(torch::kFloat32), y.to(torch::kFloat32)}).toTensor();
    return out.mean().item<double>();
}

// ---------------------------------------------------------------------------
// factory
// ---------------------------------------------------------------------------

fs::path resolve_weights_dir(const std::string& configured) {
    if (!configured.empty()) return configured;
    if (const char* env = std::getenv("OBJSTYLE_WEIGHTS"); env != nullptr && *env != '\0') return env;
    if (const char* home = std::getenv("HOME"); home != nullptr) return fs::path(home) / ".cache" / "objstyle";
    return fs::path(".cache") / "objstyle";
}

std::shared_ptr<const ImageTextEmbedder> make_embedder(const BackendConfig& config) {
    if (config.image_backend == "mock") {
        auto opts = config.mock;
        if (opts.prompt_template.empty()) opts.prompt_template = config.prompt_template;
        return std::make_shared<MockEmbedder>(std::move(opts));
    }
    if (config.image_backend == "clip-vit-b32") {
        return std::make_shared<ClipTorchScriptEmbedder>(resolve_weights_dir(config.weights_dir),
                                                         config.prompt_template);
    }
    throw ConfigError("unknown image backend '" + config.image_backend + "'");
}

std::shared_ptr<const PerceptualExtractor> make_perceptual(const BackendConfig& config) {
    if (config.perceptual_backend == "mock") return std::make_shared<IdentityFeatures>();
    if (config.perceptual_backend == "vgg19") {
        return std::make_shared<Vgg19Features>(resolve_weights_dir(config.weights_dir));
    }
    throw ConfigError("unknown perceptual backend '" + config.perceptual_backend + "'");
}

std::shared_ptr<const DistsMetric> try_make_dists(const BackendConfig& config) {
    try {
        return std::make_shared<DistsMetric>(resolve_weights_dir(config.weights_dir));
    } catch (const BackendLoadError&) {
        return nullptr;
    }
}

}  // namespace objstyle
