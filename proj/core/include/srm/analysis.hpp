#pragma once

#include <optional>
#include <string>
#include <vector>

#include "srm/dataset.hpp"
#include "srm/model.hpp"

namespace srm {

// Pearson correlation across the common index of two equal-length vectors.
// Empty if either side has zero variance.
std::optional<double> pearson(const std::vector<double>& a,
                              const std::vector<double>& b);

// Position-embedding correlation study. For every object in every example,
// correlates the projected position embedding (W_pos p, H dims) with (a) the
// object's post-LN input visual embedding and (b) the final [CLS] state,
// across hidden dimensions; reports the means. The *_per_dim alternates
// correlate per hidden dimension across objects instead and average.
struct CorrelationReport {
    int n_samples = 0;
    int objects_used = 0;
    int objects_skipped = 0;  // zero-variance vectors
    double input_corr = 0.0;
    double output_corr = 0.0;
    double input_corr_per_dim = 0.0;
    double output_corr_per_dim = 0.0;
};

CorrelationReport correlation_report(const ModelConfig& config,
                                     const ParamStore& params,
                                     const Vocabulary& vocab,
                                     const std::vector<Example>& examples);

struct CorrelationRow {
    std::string run_id;
    std::string task_set;
    CorrelationReport report;
};

// Schema: run_id,task_set,n_samples,input_corr,output_corr,
//         input_corr_per_dim,output_corr_per_dim
void write_correlation_csv(const std::string& path,
                           const std::vector<CorrelationRow>& rows);

// Text-to-object attention extraction. One entry per (layer, head); head -1
// is the head average. Matrix rows are text slots, columns visual slots.
struct AttentionEntry {
    std::string example_id;
    std::vector<std::string> tokens;
    std::vector<std::string> objects;
    int layer = 0;
    int head = -1;
    std::vector<std::vector<double>> matrix;
};

std::vector<AttentionEntry> attention_report(const ModelConfig& config,
                                             const ParamStore& params,
                                             const Vocabulary& vocab,
                                             const Example& example,
                                             const std::string& example_id,
                                             const std::vector<int>& layers);

void write_attention_json(const std::string& path,
                          const std::vector<AttentionEntry>& entries);

}  // namespace srm
