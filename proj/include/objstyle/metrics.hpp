// SPDX-License-Identifier: Apache-2.0
#pragma once

// Masked foreground/background evaluation. Every metric multiplies its inputs
// by the relevant mask (zero fill) before measuring anything.

#include <optional>
#include <string>
#include <vector>

#include "objstyle/backends.hpp"
#include "objstyle/embedding.hpp"
#include "objstyle/image.hpp"

namespace objstyle {

struct EvalTriple {
    std::string id;
    Image source;
    Image stylized;
    BinaryMask fg_gt;
    std::string target_text;

    void validate() const;
    BinaryMask background() const { return fg_gt.complement(); }
};

struct MetricBackends {
    const ImageTextEmbedder* embedder = nullptr;
    const PerceptualExtractor* perceptual = nullptr;
    const DistsMetric* dists = nullptr;  // optional
};

struct MetricReport {
    double sim_f = 0.0;
    double con_f = 0.0;
    double l1_b = 0.0;
    double con_b = 0.0;
    double sty_b = 0.0;
    double ssim_b = 0.0;
    std::optional<double> dists_b;  // nullopt: skipped (no weights)
    double psnr_b = 0.0;
};

inline constexpr double kPsnrCapDb = 100.0;

/// cos(E_T(target), E_I(stylized ⊙ fg)). Throws DegenerateInputError for an empty fg.
double sim_f(const EvalTriple& t, const ImageTextEmbedder& embedder);

/// Σ|src⊙bg − out⊙bg| / (3 · |bg|) with pixels in [0,1], i.e. the 0–255
/// formula divided by 255.
double l1_b(const EvalTriple& t);

/// 10·log10(1 / MSE) over the 3·|bg| background samples, capped at 100 dB.
double psnr_b(const EvalTriple& t);

/// Gaussian-window SSIM (11, σ=1.5) between the zero-filled background images.
double ssim_b(const EvalTriple& t);

/// DISTS between the zero-filled background images; nullopt without weights.
std::optional<double> dists_b(const EvalTriple& t, const DistsMetric* dists);

/// Sum over the backend's content layers of the feature MSE between masked images.
double con_b(const EvalTriple& t, const PerceptualExtractor& perceptual);
double con_f(const EvalTriple& t, const PerceptualExtractor& perceptual);

/// Sum over style layers of MSE(μ) + MSE(σ), where μ and σ are per-channel
/// spatial means and standard deviations, σ = sqrt(population variance + 1e-5).
double sty_b(const EvalTriple& t, const PerceptualExtractor& perceptual);

inline constexpr double kStyleStdEps = 1e-5;

MetricReport evaluate(const EvalTriple& t, const MetricBackends& backends);

struct EvalRow {
    std::string id;
    std::string target_text;
    std::optional<MetricReport> report;
    std::string error;  // set when report is empty
};

struct BatchEvaluation {
    std::vector<EvalRow> rows;
    MetricReport mean;  // over rows with a report
    int valid_rows = 0;
    int dists_rows = 0;  // rows contributing to mean.dists_b

    std::string to_csv() const;
    std::string to_json() const;
};

/// Rows that throw are recorded with their error and excluded from the means.
/// Throws RejectedInputError for an empty list.
BatchEvaluation evaluate_batch(const std::vector<EvalTriple>& triples, const MetricBackends& backends);
/// Appends rows that failed before evaluation (e.g. unreadable files).
BatchEvaluation summarize(std::vector<EvalRow> rows);

}  // namespace objstyle
