#pragma once

#include <optional>
#include <vector>

#include "srm/dataset.hpp"
#include "srm/tensor.hpp"
#include "srm/text.hpp"

namespace srm {

struct ModelConfig {
    int hidden_size = 64;
    int num_layers = 2;
    int num_heads = 4;
    int ffn_size = 256;
    int vocab_size = 0;       // set from the vocabulary
    int num_categories = 16;
    int feature_dim = 16;
    int max_text_len = 64;
    int max_visual_len = 16;
    double dropout = 0.1;

    int head_dim() const { return hidden_size / num_heads; }
    void validate() const;
};

enum class TaskKind { OPR, SRC, MLM, MRC, MRFR };

std::string task_name(TaskKind task);
TaskKind task_from_name(const std::string& name);

struct SrcPairTarget {
    int slot_i = 0;  // sequence slots, both visual
    int slot_j = 0;
    int label = 0;      // relation class; -1 for the regression variant
    double value = 0.0; // raw metric value (IoU regression target)
};

// Per-step masking decisions. Exactly one task's sets are populated.
struct MaskPlan {
    TaskKind task = TaskKind::MLM;
    std::vector<int> mlm_slots;          // text slots replaced by [MASK]
    std::vector<int> mlm_targets;        // original token ids, parallel to mlm_slots
    std::vector<int> feature_masked_slots;  // MRC/MRFR: visual slots with zeroed features
    std::vector<int> opr_masked_slots;      // visual slots with position term dropped
    std::vector<SrcPairTarget> src_pairs;

    bool empty() const;
};

struct LayerTrace {
    Tensor x_in;        // S x H, block input
    Tensor n1;          // LN1 output
    Tensor ln1_mean, ln1_rstd;
    Tensor q, k, v;     // S x H
    std::vector<Tensor> attn;  // per head, S x S row-stochastic
    Tensor ctx;         // S x H, heads concatenated
    Tensor attn_out;    // S x H, after output projection, pre-dropout
    Tensor attn_dropmask;
    Tensor x_mid;
    Tensor n2;
    Tensor ln2_mean, ln2_rstd;
    Tensor ffn_pre;     // S x F
    Tensor ffn_act;     // S x F
    Tensor ffn_out;     // S x H, pre-dropout
    Tensor ffn_dropmask;
    Tensor x_out;
};

struct ForwardTrace {
    TokenSequence seq;
    MaskPlan plan;
    std::vector<int> effective_ids;     // ids after [MASK] substitution, -1 on visual
    Tensor vis_features;                // S x d_v, rows zero on non-visual slots
    Tensor vis_positions;               // S x 5
    std::vector<std::uint8_t> position_included;
    Tensor embed_pre;                   // S x H, pre-LN aggregated embeddings
    Tensor embed_mean, embed_rstd;
    Tensor x0;                          // post embed-LN
    std::vector<LayerTrace> layers;
    Tensor final_mean, final_rstd;
    Tensor hidden;                      // S x H, final states

    int length() const { return seq.length(); }
};

ParamStore init_parameters(const ModelConfig& config, Rng& rng);

// Full forward pass. `plan` may be null (no masking); `dropout_rng` may be
// null (dropout disabled, deterministic evaluation).
ForwardTrace forward(const ModelConfig& config, const ParamStore& params,
                     const TokenSequence& seq, const Scene& scene,
                     const MaskPlan* plan = nullptr, Rng* dropout_rng = nullptr);

// Gradients of a scalar loss w.r.t. every parameter, given d(loss)/d(hidden).
// Accumulates into `grads`.
void backward(const ModelConfig& config, const ParamStore& params,
              const ForwardTrace& trace, const Tensor& d_hidden,
              ParamStore& grads);

// ---- Prediction heads over the final hidden states ----

std::vector<double> mlm_logits(const ModelConfig&, const ParamStore&,
                               const ForwardTrace&, int slot);
std::vector<double> mrc_logits(const ModelConfig&, const ParamStore&,
                               const ForwardTrace&, int slot);
std::vector<double> mrfr_predict(const ModelConfig&, const ParamStore&,
                                 const ForwardTrace&, int slot);
std::vector<double> opr_predict(const ModelConfig&, const ParamStore&,
                                const ForwardTrace&, int slot);
std::vector<double> src_logits(const ModelConfig&, const ParamStore&,
                               const ForwardTrace&, int slot_i, int slot_j);
double matching_score(const ModelConfig&, const ParamStore&,
                      const ForwardTrace&);

// Head backward passes: accumulate head-parameter gradients into `grads` and
// the upstream gradient into `d_hidden` (S x H).
void mlm_backward(const ModelConfig&, const ParamStore&, const ForwardTrace&,
                  int slot, const std::vector<double>& d_logits, ParamStore& grads,
                  Tensor& d_hidden);
void mrc_backward(const ModelConfig&, const ParamStore&, const ForwardTrace&,
                  int slot, const std::vector<double>& d_logits, ParamStore& grads,
                  Tensor& d_hidden);
void mrfr_backward(const ModelConfig&, const ParamStore&, const ForwardTrace&,
                   int slot, const std::vector<double>& d_pred, ParamStore& grads,
                   Tensor& d_hidden);
void opr_backward(const ModelConfig&, const ParamStore&, const ForwardTrace&,
                  int slot, const std::vector<double>& d_pred, ParamStore& grads,
                  Tensor& d_hidden);
void src_backward(const ModelConfig&, const ParamStore&, const ForwardTrace&,
                  int slot_i, int slot_j, const std::vector<double>& d_logits,
                  ParamStore& grads, Tensor& d_hidden);
void matching_backward(const ModelConfig&, const ParamStore&, const ForwardTrace&,
                       double d_score, ParamStore& grads, Tensor& d_hidden);

}  // namespace srm
