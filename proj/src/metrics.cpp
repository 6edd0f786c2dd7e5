// SPDX-License-Identifier: Apache-2.0
#include "objstyle/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "objstyle/error.hpp"
#include "objstyle/kernels.hpp"

namespace objstyle {

namespace {

kernels::PlanarDims dims_of(const Image& img) { return {3, img.height(), img.width()}; }

void require_nonempty(const BinaryMask& m, const char* what) {
    if (!m.any()) throw DegenerateInputError(std::string("degenerate mask: ") + what + " region is empty");
}

torch::Tensor masked_batch(const Image& img, const BinaryMask& m) { return apply_mask(img, m).tensor().unsqueeze(0); }

double feature_distance(const Image& a, const Image& b, const BinaryMask& m, const PerceptualExtractor& perceptual,
                        const std::vector<std::string>& layers) {
    torch::NoGradGuard no_grad;
    const auto fa = perceptual.features(masked_batch(a, m), layers);
    const auto fb = perceptual.features(masked_batch(b, m), layers);
    double total = 0.0;
    for (const auto& l : layers) {
        total += torch::mse_loss(fa.at(l).to(torch::kFloat64), fb.at(l).to(torch::kFloat64)).item<double>();
    }
    return total;
}

std::pair<torch::Tensor, torch::Tensor> mean_std(const torch::Tensor& f) {
    const auto flat = f.to(torch::kFloat64).flatten(2);  // [N,C,HW]
    const auto mu = flat.mean(-1);
    const auto var = (flat - mu.unsqueeze(-1)).pow(2).mean(-1);
    return {mu, (var + kStyleStdEps).sqrt()};
}

}  // namespace

void EvalTriple::validate() const {
    if (source.empty() || stylized.empty()) throw RejectedInputError("evaluation images must not be empty");
    if (source.height() != stylized.height() || source.width() != stylized.width()) {
        throw ShapeError("source and stylized images differ in size");
    }
    if (fg_gt.height() != source.height() || fg_gt.width() != source.width()) {
        throw ShapeError("ground-truth mask does not match the image size");
    }
    source.require_finite("source image");
    stylized.require_finite("stylized image");
}

double sim_f(const EvalTriple& t, const ImageTextEmbedder& embedder) {
    t.validate();
    require_nonempty(t.fg_gt, "foreground");
    return cosine_similarity(embedder.embed_text(t.target_text), embedder.embed_image(apply_mask(t.stylized, t.fg_gt)));
}

double l1_b(const EvalTriple& t) {
    t.validate();
    const auto bg = t.background();
    require_nonempty(bg, "background");
    const double sum = kernels::masked_abs_diff_sum(t.source.data(), t.stylized.data(), bg.values(), dims_of(t.source));
    return sum / (3.0 * static_cast<double>(bg.count()));
}

double psnr_b(const EvalTriple& t) {
    t.validate();
    const auto bg = t.background();
    require_nonempty(bg, "background");
    const double sum = kernels::masked_sq_diff_sum(t.source.data(), t.stylized.data(), bg.values(), dims_of(t.source));
    const double mse = sum / (3.0 * static_cast<double>(bg.count()));
    if (mse <= 0.0) return kPsnrCapDb;
    return std::min(kPsnrCapDb, 10.0 * std::log10(1.0 / mse));
}

double ssim_b(const EvalTriple& t) {
    t.validate();
    const auto bg = t.background();
    require_nonempty(bg, "background");
    const auto a = apply_mask(t.source, bg);
    const auto b = apply_mask(t.stylized, bg);
    return kernels::ssim_mean(a.data(), b.data(), dims_of(a), {});
}

std::optional<double> dists_b(const EvalTriple& t, const DistsMetric* dists) {
    t.validate();
    const auto bg = t.background();
    require_nonempty(bg, "background");
    if (dists == nullptr) return std::nullopt;
    torch::NoGradGuard no_grad;
    return (*dists)(masked_batch(t.source, bg), masked_batch(t.stylized, bg));
}

double con_b(const EvalTriple& t, const PerceptualExtractor& perceptual) {
    t.validate();
    const auto bg = t.background();
    require_nonempty(bg, "background");
    return feature_distance(t.stylized, t.source, bg, perceptual, perceptual.content_layers());
}

double con_f(const EvalTriple& t, const PerceptualExtractor& perceptual) {
    t.validate();
    require_nonempty(t.fg_gt, "foreground");
    return feature_distance(t.stylized, t.source, t.fg_gt, perceptual, perceptual.content_layers());
}

double sty_b(const EvalTriple& t, const PerceptualExtractor& perceptual) {
    t.validate();
    const auto bg = t.background();
    require_nonempty(bg, "background");
    torch::NoGradGuard no_grad;
    const auto layers = perceptual.style_layers();
    const auto fa = perceptual.features(masked_batch(t.stylized, bg), layers);
    const auto fb = perceptual.features(masked_batch(t.source, bg), layers);
    double total = 0.0;
    for (const auto& l : layers) {
        const auto [ma, sa] = mean_std(fa.at(l));
        const auto [mb, sb] = mean_std(fb.at(l));
        total += torch::mse_loss(ma, mb).item<double>() + torch::mse_loss(sa, sb).item<double>();
    }
    return total;
}

MetricReport evaluate(const EvalTriple& t, const MetricBackends& backends) {
    if (backends.embedder == nullptr || backends.perceptual == nullptr) {
        throw ConfigError("evaluation needs an embedder and a perceptual backend");
    }
    MetricReport r;
    r.sim_f = sim_f(t, *backends.embedder);
    r.con_f = con_f(t, *backends.perceptual);
    r.l1_b = l1_b(t);
    r.con_b = con_b(t, *backends.perceptual);
    r.sty_b = sty_b(t, *backends.perceptual);
    r.ssim_b = ssim_b(t);
    r.dists_b = dists_b(t, backends.dists);
    r.psnr_b = psnr_b(t);
    return r;
}

BatchEvaluation summarize(std::vector<EvalRow> rows) {
    BatchEvaluation out;
    out.rows = std::move(rows);
    MetricReport sum;
    double dists_sum = 0.0;
    for (const auto& row : out.rows) {
        if (!row.report) continue;
        const auto& r = *row.report;
        ++out.valid_rows;
        sum.sim_f += r.sim_f;
        sum.con_f += r.con_f;
        sum.l1_b += r.l1_b;
        sum.con_b += r.con_b;
        sum.sty_b += r.sty_b;
        sum.ssim_b += r.ssim_b;
        sum.psnr_b += r.psnr_b;
        if (r.dists_b) {
            dists_sum += *r.dists_b;
            ++out.dists_rows;
        }
    }
    if (out.valid_rows > 0) {
        const double n = out.valid_rows;
        out.mean = {sum.sim_f / n, sum.con_f / n, sum.l1_b / n, sum.con_b / n,
                    sum.sty_b / n, sum.ssim_b / n, std::nullopt, sum.psnr_b / n};
        if (out.dists_rows > 0) out.mean.dists_b = dists_sum / out.dists_rows;
    }
    return out;
}

BatchEvaluation evaluate_batch(const std::vector<EvalTriple>& triples, const MetricBackends& backends) {
    if (triples.empty()) throw RejectedInputError("evaluate_batch: no triples");
    std::vector<EvalRow> rows;
    rows.reserve(triples.size());
    for (const auto& t : triples) {
        EvalRow row{t.id, t.target_text, std::nullopt, {}};
        try {
            row.report = evaluate(t, backends);
        } catch (const Error& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return summarize(std::move(rows));
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    return out + "\"";
}

nlohmann::json report_json(const MetricReport& r) {
    nlohmann::json j{{"sim_f", r.sim_f}, {"con_f", r.con_f}, {"l1_b", r.l1_b},     {"con_b", r.con_b},
                     {"sty_b", r.sty_b}, {"ssim_b", r.ssim_b}, {"psnr_b", r.psnr_b}};
    j["dists_b"] = r.dists_b ? nlohmann::json(*r.dists_b) : nlohmann::json("skipped");
    return j;
}

}  // namespace

std::string BatchEvaluation::to_csv() const {
    std::ostringstream os;
    os << std::setprecision(10);
    os << "id,target_text,status,sim_f,con_f,l1_b,con_b,sty_b,ssim_b,dists_b,psnr_b,error\n";
    for (const auto& row : rows) {
        os << csv_field(row.id) << ',' << csv_field(row.target_text) << ',';
        if (row.report) {
            const auto& r = *row.report;
            os << "ok," << r.sim_f << ',' << r.con_f << ',' << r.l1_b << ',' << r.con_b << ',' << r.sty_b << ','
               << r.ssim_b << ',';
            if (r.dists_b) os << *r.dists_b;
            else os << "skipped";
            os << ',' << r.psnr_b << ",\n";
        } else {
            os << "error,,,,,,,,," << csv_field(row.error) << '\n';
        }
    }
    return os.str();
}

std::string BatchEvaluation::to_json() const {
    nlohmann::json j;
    j["rows_total"] = rows.size();
    j["rows_valid"] = valid_rows;
    j["rows_failed"] = static_cast<int>(rows.size()) - valid_rows;
    j["dists_rows"] = dists_rows;
    j["mean"] = valid_rows > 0 ? report_json(mean) : nlohmann::json(nullptr);
    auto& failures = j["failures"] = nlohmann::json::array();
    for (const auto& row : rows) {
        if (!row.report) failures.push_back({{"id", row.id}, {"error", row.error}});
    }
    return j.dump(2);
}

}  // namespace objstyle
