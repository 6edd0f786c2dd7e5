// SPDX-License-Identifier: Apache-2.0
#include "objstyle/stylenet.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "objstyle/error.hpp"

namespace objstyle {

namespace F = torch::nn::functional;

void StyleNetConfig::validate() const {
    if (down_channels.size() != 3 || up_channels.size() != 3) {
        throw ConfigError("stylenet needs exactly 3 downsample and 3 upsample stages");
    }
    for (int c : down_channels) {
        if (c <= 0) throw ConfigError("stylenet channel widths must be positive");
    }
    for (int c : up_channels) {
        if (c <= 0) throw ConfigError("stylenet channel widths must be positive");
    }
    if (input_resolution <= 0 || input_resolution % 8 != 0) {
        throw ConfigError("stylenet input_resolution must be a positive multiple of 8");
    }
}

void check_stylenet_input(int height, int width) {
    if (height % 8 != 0 || width % 8 != 0 || height < 16 || width < 16) {
        throw ShapeError("stylenet input must be at least 16x16 with sides divisible by 8, got " +
                         std::to_string(height) + "x" + std::to_string(width));
    }
}

ConvBlockImpl::ConvBlockImpl(int in_ch, int out_ch, int stride) {
    conv_ = register_module("conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_ch, out_ch, 3).stride(stride).padding(1)));
    norm_ = register_module("norm", torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(out_ch).affine(true)));
}

torch::Tensor ConvBlockImpl::forward(const torch::Tensor& x) {
    return F::leaky_relu(norm_->forward(conv_->forward(x)), F::LeakyReLUFuncOptions().negative_slope(0.2));
}

UNetImpl::UNetImpl(const StyleNetConfig& config) {
    config.validate();
    int in_ch = 3;
    for (size_t k = 0; k < 3; ++k) {
        down_.push_back(register_module("down" + std::to_string(k), ConvBlock(in_ch, config.down_channels[k], 2)));
        in_ch = config.down_channels[k];
    }
    // Skip widths from deepest to shallowest: down[1], down[0], input.
    const int skips[3] = {config.down_channels[1], config.down_channels[0], 3};
    for (size_t k = 0; k < 3; ++k) {
        up_.push_back(register_module("up" + std::to_string(k), ConvBlock(in_ch + skips[k], config.up_channels[k], 1)));
        in_ch = config.up_channels[k];
    }
    head_ = register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_ch, 3, 3).padding(1)));
}

torch::Tensor UNetImpl::forward(const torch::Tensor& x) {
    check_stylenet_input(static_cast<int>(x.size(2)), static_cast<int>(x.size(3)));
    std::vector<torch::Tensor> skips{x};
    auto h = x;
    for (auto& d : down_) {
        h = d->forward(h);
        skips.push_back(h);
    }
    skips.pop_back();  // bottleneck is not a skip
    for (auto& u : up_) {
        h = F::interpolate(h, F::InterpolateFuncOptions()
                                  .scale_factor(std::vector<double>{2.0, 2.0})
                                  .mode(torch::kNearest));
        h = u->forward(torch::cat({h, skips.back()}, 1));
        skips.pop_back();
    }
    // The head predicts a logit-space residual on top of the input image.
    return torch::sigmoid(head_->forward(h) + torch::logit(x, kInputLogitEps));
}

namespace {

// Conv weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); norm affine = (1, 0).
void seeded_init(UNetImpl& net, std::uint64_t seed) {
    torch::NoGradGuard no_grad;
    auto gen = at::detail::createCPUGenerator(seed);
    for (auto& m : net.modules(/*include_self=*/false)) {
        if (auto* conv = m->as<torch::nn::Conv2d>()) {
            const auto& w = conv->weight;
            const double fan_in = static_cast<double>(w.size(1) * w.size(2) * w.size(3));
            const double bound = 1.0 / std::sqrt(fan_in);
            w.copy_(torch::rand(w.sizes(), gen, torch::kFloat32) * (2 * bound) - bound);
            conv->bias.copy_(torch::rand(conv->bias.sizes(), gen, torch::kFloat32) * (2 * bound) - bound);
        } else if (auto* norm = m->as<torch::nn::InstanceNorm2d>()) {
            norm->weight.fill_(1.0);
            norm->bias.fill_(0.0);
        }
    }
}

}  // namespace

StyleNet::StyleNet(const StyleNetConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    net_ = UNet(config_);
    seeded_init(*net_, seed);
}

std::vector<std::pair<std::string, torch::Tensor>> StyleNet::named_parameters() const {
    std::vector<std::pair<std::string, torch::Tensor>> out;
    for (const auto& p : net_->named_parameters(true)) out.emplace_back(p.key(), p.value());
    return out;
}

std::int64_t StyleNet::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& p : net_->parameters()) n += p.numel();
    return n;
}

torch::Tensor StyleNet::forward(const torch::Tensor& chw) const {
    if (chw.dim() != 3 || chw.size(0) != 3) throw ShapeError("stylenet forward expects [3,H,W]");
    return net_->forward(chw.unsqueeze(0)).squeeze(0);
}

Image StyleNet::stylize(const Image& img) const {
    torch::NoGradGuard no_grad;
    return Image(forward(img.tensor()));
}

StyleNet StyleNet::clone() const {
    StyleNet copy(config_, 0);
    torch::NoGradGuard no_grad;
    auto dst = copy.net_->named_parameters(true);
    for (const auto& p : net_->named_parameters(true)) dst[p.key()].copy_(p.value());
    copy.step_ = step_;
    return copy;
}

// ---------------------------------------------------------------------------
// checkpoint
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'O', 'B', 'J', 'S', 'T', 'Y', 'L', 'E'};
constexpr std::uint32_t kVersion = 1;

class Fnv1a {
public:
    void update(const void* data, size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < n; ++i) {
            h_ ^= p[i];
            h_ *= 0x100000001b3ULL;
        }
    }
    std::uint64_t value() const { return h_; }

private:
    std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

class Writer {
public:
    explicit Writer(std::ostream& os) : os_(os) {}
    void raw(const void* p, size_t n) {
        os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        hash_.update(p, n);
    }
    template <typename T>
    void pod(T v) { raw(&v, sizeof v); }
    void str(const std::string& s) {
        pod(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
    std::uint64_t checksum() const { return hash_.value(); }

private:
    std::ostream& os_;
    Fnv1a hash_;
};

class Reader {
public:
    Reader(std::istream& is, std::string path) : is_(is), path_(std::move(path)) {}
    void raw(void* p, size_t n) {
        is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<size_t>(is_.gcount()) != n) throw CheckpointError("truncated checkpoint: " + path_);
        hash_.update(p, n);
    }
    template <typename T>
    T pod() {
        T v{};
        raw(&v, sizeof v);
        return v;
    }
    std::string str(std::uint32_t limit = 1u << 20) {
        auto n = pod<std::uint32_t>();
        if (n > limit) throw CheckpointError("corrupt checkpoint (string length): " + path_);
        std::string s(n, '\0');
        raw(s.data(), n);
        return s;
    }
    std::uint64_t checksum() const { return hash_.value(); }

private:
    std::istream& is_;
    std::string path_;
    Fnv1a hash_;
};

std::string join_ints(const std::vector<int>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

std::vector<int> split_ints(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
    return out;
}

std::string config_echo(const StyleNetConfig& c) {
    return "down_channels=" + join_ints(c.down_channels) + "\nup_channels=" + join_ints(c.up_channels) +
           "\ninput_resolution=" + std::to_string(c.input_resolution) + "\n";
}

StyleNetConfig parse_config_echo(const std::string& text, const std::string& path) {
    StyleNetConfig c;
    std::istringstream ss(text);
    std::string line;
    try {
        while (std::getline(ss, line)) {
            auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            auto key = line.substr(0, eq);
            auto val = line.substr(eq + 1);
            if (key == "down_channels") c.down_channels = split_ints(val);
            else if (key == "up_channels") c.up_channels = split_ints(val);
            else if (key == "input_resolution") c.input_resolution = std::stoi(val);
        }
        c.validate();
    } catch (const std::exception& e) {
        throw CheckpointError("corrupt checkpoint config in " + path + ": " + e.what());
    }
    return c;
}

}  // namespace

void save_checkpoint(const StyleNet& net, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError("cannot write checkpoint: " + path.string());
    Writer w(os);
    w.raw(kMagic, sizeof kMagic);
    w.pod(kVersion);
    w.str(config_echo(net.config()));
    w.pod(static_cast<std::int64_t>(net.step()));
    const auto params = net.named_parameters();
    w.pod(static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, t] : params) {
        auto c = t.detach().to(torch::kCPU, torch::kFloat32).contiguous();
        w.str(name);
        w.pod(static_cast<std::uint32_t>(c.dim()));
        for (auto d : c.sizes()) w.pod(static_cast<std::int64_t>(d));
        w.raw(c.data_ptr<float>(), static_cast<size_t>(c.numel()) * sizeof(float));
    }
    const std::uint64_t sum = w.checksum();
    os.write(reinterpret_cast<const char*>(&sum), sizeof sum);
    if (!os) throw CheckpointError("failed writing checkpoint: " + path.string());
}

StyleNet load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot open checkpoint: " + path.string());
    Reader r(is, path.string());
    char magic[sizeof kMagic];
    r.raw(magic, sizeof magic);
    if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw CheckpointError("not a checkpoint: " + path.string());
    const auto version = r.pod<std::uint32_t>();
    if (version != kVersion) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + ": " + path.string());
    }
    StyleNet net(parse_config_echo(r.str(), path.string()), 0);
    net.set_step(r.pod<std::int64_t>());

    auto params = net.module()->named_parameters(true);
    const auto count = r.pod<std::uint32_t>();
    if (count != params.size()) throw CheckpointError("parameter count mismatch in " + path.string());
    torch::NoGradGuard no_grad;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name = r.str();
        auto* dst = params.find(name);
        if (dst == nullptr) throw CheckpointError("unknown parameter '" + name + "' in " + path.string());
        const auto ndim = r.pod<std::uint32_t>();
        if (ndim > 8) throw CheckpointError("corrupt checkpoint (rank): " + path.string());
        std::vector<std::int64_t> dims(ndim);
        for (auto& d : dims) d = r.pod<std::int64_t>();
        if (torch::IntArrayRef(dims) != dst->sizes()) {
            throw CheckpointError("shape mismatch for '" + name + "' in " + path.string());
        }
        auto buf = torch::empty(dims, torch::kFloat32);
        r.raw(buf.data_ptr<float>(), static_cast<size_t>(buf.numel()) * sizeof(float));
        dst->copy_(buf);
    }
    const std::uint64_t expected = r.checksum();
    std::uint64_t stored = 0;
    is.read(reinterpret_cast<char*>(&stored), sizeof stored);
    if (static_cast<size_t>(is.gcount()) != sizeof stored || stored != expected) {
        throw CheckpointError("checksum mismatch: " + path.string());
    }
    return net;
}

}  // namespace objstyle
