#pragma once

#include <optional>
#include <string>
#include <vector>

#include "srm/dataset.hpp"
#include "srm/model.hpp"
#include "srm/relation_graph.hpp"

namespace srm {

// Masking rates: 15% of text tokens (MLM), 15% of region features (MRC/MRFR),
// 50% of eligible region positions (OPR).
struct MaskRates {
    double mlm = 0.15;
    double mrc = 0.15;
    double opr = 0.50;
};

// Draws the mask sets for one task over one encoded example. A draw that
// selects nothing is repeated up to 16 times; the returned plan may still be
// empty (e.g. no OPR-eligible object exists), which callers must handle.
MaskPlan make_mask_plan(const TokenSequence& seq, const Scene& scene,
                        TaskKind task, RelationMetric metric, int src_pair_count,
                        Rng& rng, const MaskRates& rates = {});

// One Bernoulli pass over the candidate slots, no redraw; may select nothing.
// This is the primitive whose empirical rates match the configured ones.
MaskPlan draw_mask_plan_once(const TokenSequence& seq, const Scene& scene,
                             TaskKind task, RelationMetric metric,
                             int src_pair_count, Rng& rng,
                             const MaskRates& rates = {});

// ---- Loss functions (batch-pooled means over masked items) ----

double opr_loss(const std::vector<std::vector<double>>& predictions,
                const std::vector<std::vector<double>>& targets);
double src_loss(const std::vector<std::vector<double>>& logits,
                const std::vector<int>& labels);
double mlm_loss(const std::vector<std::vector<double>>& logits,
                const std::vector<int>& token_ids);
// KL(target || softmax(logits)); `literal_direction` flips to KL(P || target).
double mrc_loss(const std::vector<std::vector<double>>& logits,
                const std::vector<std::vector<double>>& targets,
                bool literal_direction = false);
double mrfr_loss(const std::vector<std::vector<double>>& predictions,
                 const std::vector<std::vector<double>>& targets);

// ---- Task schedule ----

// Per-cycle slot counts: OPR 1, SRC 1, MLM 10, MRC 1 (MRFR 1 when enabled).
// Dropping a task removes its slots; the cycle shortens, the rest keep their
// absolute counts.
int task_cycle_slots(TaskKind task);

struct TaskSchedule {
    std::vector<TaskKind> steps;
    int cycle_length = 0;

    int count(TaskKind task) const;
};

TaskSchedule build_schedule(const std::vector<TaskKind>& tasks, int total_steps,
                            std::uint64_t seed);

// "MLM+MRC+SRC+OPR" etc.; order-insensitive, canonicalized.
std::vector<TaskKind> parse_task_arm(const std::string& arm);
std::string task_arm_name(const std::vector<TaskKind>& tasks);

// Linear warmup over the first 10% of steps, then linear decay to zero.
// `step` is 1-based.
double learning_rate(int step, int total_steps, double peak);

class AdamW {
public:
    explicit AdamW(const ParamStore& params, double weight_decay = 1e-2);

    void step(ParamStore& params, const ParamStore& grads, double lr);
    long step_count() const { return t_; }

private:
    ParamStore m_;
    ParamStore v_;
    long t_ = 0;
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    double weight_decay_;
};

// ---- Training loops ----

struct StepLog {
    int step = 0;
    TaskKind task = TaskKind::MLM;
    double loss = 0.0;
    double lr = 0.0;
};

void write_loss_csv(const std::string& path, const std::vector<StepLog>& log);

struct PretrainOptions {
    std::vector<TaskKind> tasks = {TaskKind::OPR, TaskKind::SRC, TaskKind::MLM,
                                   TaskKind::MRC};
    int total_steps = 13000;
    int batch_size = 16;
    double peak_lr = 3e-4;
    RelationMetric metric = RelationMetric::IoUClass10;
    std::uint64_t seed = 0;
    bool mrc_literal_kl = false;
    bool verbose = false;
};

struct PretrainResult {
    std::vector<StepLog> log;
    int skipped_steps = 0;
};

PretrainResult pretrain(const ModelConfig& config, ParamStore& params,
                        const Vocabulary& vocab,
                        const std::vector<Example>& train,
                        const PretrainOptions& options);

struct FinetuneOptions {
    int steps = 800;
    int batch_size = 16;
    double peak_lr = 1e-4;
    std::uint64_t seed = 0;
    bool verbose = false;
};

struct FinetuneResult {
    std::vector<StepLog> log;
    double val_accuracy = 0.0;
    int val_count = 0;
};

FinetuneResult finetune(const ModelConfig& config, ParamStore& params,
                        const Vocabulary& vocab,
                        const std::vector<Example>& train,
                        const std::vector<Example>& val,
                        const FinetuneOptions& options);

// 4-way choice accuracy with the matching head, dropout disabled.
double evaluate(const ModelConfig& config, const ParamStore& params,
                const Vocabulary& vocab, const std::vector<Example>& examples);

}  // namespace srm
