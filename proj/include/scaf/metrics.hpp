#pragma once

#include <string>
#include <vector>

#include "scaf/model.hpp"

namespace scaf {

struct Sample;

struct EvalResult {
    std::vector<std::pair<std::string, double>> per_image_f1;
    double mean_f1 = 0.0;
    double threshold = 0.5;
    std::string dataset;
    int warnings = 0; // samples skipped for missing dense masks
};

// fixed-threshold pixel F1: 2TP / (2TP + FP + FN); both-empty convention = 1
double f1_at_threshold(const Tensor& probs, const Tensor& gt,
                       double threshold = 0.5);

Tensor sigmoid_map(const Tensor& logits);

// sigmoid(M1) scored per image against dense masks; deterministic, id order
EvalResult evaluate(ScafModel& model, const ManipulatedDiscriminator& md,
                    const std::vector<Sample>& dataset, int image_size,
                    const std::string& dataset_name);

// probability map for one image (full pipeline, at the image's own size)
Tensor predict_probs(ScafModel& model, const ManipulatedDiscriminator& md,
                     const Tensor& image, int image_size);

struct RobustnessRow {
    int quality = 0;
    double mean_f1 = 0.0;
};

// re-encode every image at each JPEG quality, re-evaluate
std::vector<RobustnessRow> robustness_sweep(ScafModel& model,
                                            const ManipulatedDiscriminator& md,
                                            const std::vector<Sample>& dataset,
                                            int image_size,
                                            const std::vector<int>& qualities);

void write_eval_report(const std::string& path, const EvalResult& r);
EvalResult read_eval_report(const std::string& path);
void write_robustness_table(const std::string& path,
                            const std::vector<RobustnessRow>& rows);
void write_robustness_plot(const std::string& svg_path,
                           const std::vector<RobustnessRow>& rows);
void write_f1_bar_chart(const std::string& svg_path,
                        const std::vector<std::pair<std::string, double>>& bars);

} // namespace scaf
