#include "srm/training.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

namespace srm {

namespace {

constexpr int kMaxRedraws = 16;

std::vector<double> log_softmax(const std::vector<double>& logits) {
    double maxv = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    for (double l : logits) denom += std::exp(l - maxv);
    double log_denom = std::log(denom) + maxv;
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - log_denom;
    return out;
}

int slot_of_object(const TokenSequence& seq, int object_idx) {
    for (int s = 0; s < seq.length(); ++s) {
        if (seq.object_index[s] == object_idx) return s;
    }
    throw ValidationError("object index not present in sequence");
}

void check_distribution(const std::vector<double>& target) {
    double sum = 0.0;
    for (double p : target) {
        if (p < 0.0) throw ValidationError("target distribution has negative entry");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ValidationError("target distribution does not sum to 1");
    }
}

}  // namespace

MaskPlan draw_mask_plan_once(const TokenSequence& seq, const Scene& scene,
                             TaskKind task, RelationMetric metric,
                             int src_pair_count, Rng& rng,
                             const MaskRates& rates) {
    MaskPlan plan;
    plan.task = task;
    switch (task) {
        case TaskKind::MLM: {
            for (int s : seq.word_slots()) {
                if (rng.bernoulli(rates.mlm)) {
                    plan.mlm_slots.push_back(s);
                    plan.mlm_targets.push_back(seq.ids[s]);
                }
            }
            return plan;
        }
        case TaskKind::MRC:
        case TaskKind::MRFR: {
            for (int s : seq.visual_slots()) {
                if (rng.bernoulli(rates.mrc)) plan.feature_masked_slots.push_back(s);
            }
            return plan;
        }
        case TaskKind::OPR: {
            for (int obj : eligible_opr_nodes(scene)) {
                if (rng.bernoulli(rates.opr)) {
                    plan.opr_masked_slots.push_back(slot_of_object(seq, obj));
                }
            }
            return plan;
        }
        case TaskKind::SRC: {
            if (scene.objects.size() < 2) return plan;
            SpatialRelationGraph graph = build_graph(scene, metric);
            int k = src_pair_count > 0 ? src_pair_count
                                       : static_cast<int>(scene.objects.size());
            for (const SampledPair& p : sample_src_pairs(graph, k, rng)) {
                SrcPairTarget t;
                t.slot_i = slot_of_object(seq, p.i);
                t.slot_j = slot_of_object(seq, p.j);
                t.label = p.label.category;
                t.value = p.label.value;
                plan.src_pairs.push_back(t);
            }
            return plan;
        }
    }
    throw ValidationError("unknown task in make_mask_plan");
}

MaskPlan make_mask_plan(const TokenSequence& seq, const Scene& scene,
                        TaskKind task, RelationMetric metric, int src_pair_count,
                        Rng& rng, const MaskRates& rates) {
    if (task == TaskKind::OPR && eligible_opr_nodes(scene).empty()) {
        MaskPlan plan;
        plan.task = task;
        return plan;
    }
    if (task == TaskKind::SRC && scene.objects.size() < 2) {
        MaskPlan plan;
        plan.task = task;
        return plan;
    }
    MaskPlan plan;
    for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
        plan = draw_mask_plan_once(seq, scene, task, metric, src_pair_count, rng,
                                   rates);
        if (!plan.empty()) break;
    }
    return plan;
}

double opr_loss(const std::vector<std::vector<double>>& predictions,
                const std::vector<std::vector<double>>& targets) {
    if (predictions.empty() || predictions.size() != targets.size()) {
        throw ValidationError("OPR loss needs a non-empty matched prediction/target set");
    }
    double total = 0.0;
    for (std::size_t s = 0; s < predictions.size(); ++s) {
        if (predictions[s].size() != targets[s].size()) {
            throw ValidationError("OPR prediction/target length mismatch");
        }
        for (std::size_t d = 0; d < predictions[s].size(); ++d) {
            double diff = predictions[s][d] - targets[s][d];
            total += diff * diff;
        }
    }
    return total / static_cast<double>(predictions.size());
}

double src_loss(const std::vector<std::vector<double>>& logits,
                const std::vector<int>& labels) {
    if (logits.empty() || logits.size() != labels.size()) {
        throw ValidationError("SRC loss needs a non-empty matched logits/label set");
    }
    double total = 0.0;
    for (std::size_t s = 0; s < logits.size(); ++s) {
        if (labels[s] < 0 || labels[s] >= static_cast<int>(logits[s].size())) {
            throw ValidationError("SRC label outside logit range");
        }
        total -= log_softmax(logits[s])[labels[s]];
    }
    return total / static_cast<double>(logits.size());
}

double mlm_loss(const std::vector<std::vector<double>>& logits,
                const std::vector<int>& token_ids) {
    return src_loss(logits, token_ids);  // same categorical cross-entropy shape
}

double mrc_loss(const std::vector<std::vector<double>>& logits,
                const std::vector<std::vector<double>>& targets,
                bool literal_direction) {
    if (logits.empty() || logits.size() != targets.size()) {
        throw ValidationError("MRC loss needs a non-empty matched logits/target set");
    }
    double total = 0.0;
    for (std::size_t s = 0; s < logits.size(); ++s) {
        check_distribution(targets[s]);
        std::vector<double> lsm = log_softmax(logits[s]);
        if (!literal_direction) {
            // KL(target || P)
            for (std::size_t c = 0; c < lsm.size(); ++c) {
                double t = targets[s][c];
                if (t > 0.0) total += t * (std::log(t) - lsm[c]);
            }
        } else {
            // KL(P || target), the direction as written
            for (std::size_t c = 0; c < lsm.size(); ++c) {
                double p = std::exp(lsm[c]);
                if (p > 0.0) {
                    double t = targets[s][c];
                    if (t <= 0.0) throw ValidationError("literal KL needs positive target");
                    total += p * (lsm[c] - std::log(t));
                }
            }
        }
    }
    return total / static_cast<double>(logits.size());
}

double mrfr_loss(const std::vector<std::vector<double>>& predictions,
                 const std::vector<std::vector<double>>& targets) {
    if (predictions.empty() || predictions.size() != targets.size()) {
        throw ValidationError("MRFR loss needs a non-empty matched prediction/target set");
    }
    double total = 0.0;
    for (std::size_t s = 0; s < predictions.size(); ++s) {
        if (predictions[s].size() != targets[s].size()) {
            throw ValidationError("MRFR prediction/target length mismatch");
        }
        double slot = 0.0;
        for (std::size_t d = 0; d < predictions[s].size(); ++d) {
            double diff = predictions[s][d] - targets[s][d];
            slot += diff * diff;
        }
        total += slot / static_cast<double>(predictions[s].size());
    }
    return total / static_cast<double>(predictions.size());
}

int task_cycle_slots(TaskKind task) {
    switch (task) {
        case TaskKind::MLM: return 10;
        case TaskKind::OPR:
        case TaskKind::SRC:
        case TaskKind::MRC:
        case TaskKind::MRFR: return 1;
    }
    throw ValidationError("unknown task");
}

int TaskSchedule::count(TaskKind task) const {
    return static_cast<int>(std::count(steps.begin(), steps.end(), task));
}

TaskSchedule build_schedule(const std::vector<TaskKind>& tasks, int total_steps,
                            std::uint64_t seed) {
    if (tasks.empty()) throw ValidationError("schedule needs at least one task");
    if (total_steps < 1) throw ValidationError("schedule needs at least one step");
    std::vector<TaskKind> cycle;
    for (TaskKind t : tasks) {
        for (int i = 0; i < task_cycle_slots(t); ++i) cycle.push_back(t);
    }
    TaskSchedule schedule;
    schedule.cycle_length = static_cast<int>(cycle.size());
    Rng base(seed);
    int cycle_idx = 0;
    while (static_cast<int>(schedule.steps.size()) < total_steps) {
        std::vector<TaskKind> shuffled = cycle;
        Rng rng = base.fork(static_cast<std::uint64_t>(cycle_idx++));
        rng.shuffle(shuffled);
        for (TaskKind t : shuffled) {
            if (static_cast<int>(schedule.steps.size()) >= total_steps) break;
            schedule.steps.push_back(t);
        }
    }
    return schedule;
}

std::vector<TaskKind> parse_task_arm(const std::string& arm) {
    std::vector<TaskKind> tasks;
    std::string token;
    std::istringstream is(arm);
    while (std::getline(is, token, '+')) {
        if (token.empty()) continue;
        TaskKind t = task_from_name(token);
        if (std::find(tasks.begin(), tasks.end(), t) != tasks.end()) {
            throw ValidationError("task listed twice in arm: " + token);
        }
        tasks.push_back(t);
    }
    if (tasks.empty()) throw ValidationError("empty task arm");
    // canonical order: OPR, SRC, MLM, MRC, MRFR
    std::vector<TaskKind> canonical = {TaskKind::OPR, TaskKind::SRC, TaskKind::MLM,
                                       TaskKind::MRC, TaskKind::MRFR};
    std::vector<TaskKind> out;
    for (TaskKind t : canonical) {
        if (std::find(tasks.begin(), tasks.end(), t) != tasks.end()) out.push_back(t);
    }
    return out;
}

std::string task_arm_name(const std::vector<TaskKind>& tasks) {
    std::string out;
    for (TaskKind t : tasks) {
        if (!out.empty()) out += '+';
        out += task_name(t);
    }
    return out;
}

double learning_rate(int step, int total_steps, double peak) {
    if (step < 1 || step > total_steps) {
        throw ValidationError("learning rate step outside schedule");
    }
    int warmup = std::max<int>(1, static_cast<int>(std::llround(0.10 * total_steps)));
    if (step <= warmup) {
        return peak * static_cast<double>(step) / warmup;
    }
    if (total_steps == warmup) return 0.0;
    return peak * static_cast<double>(total_steps - step) / (total_steps - warmup);
}

AdamW::AdamW(const ParamStore& params, double weight_decay)
    : m_(ParamStore::zeros_like(params)),
      v_(ParamStore::zeros_like(params)),
      weight_decay_(weight_decay) {}

void AdamW::step(ParamStore& params, const ParamStore& grads, double lr) {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t e = 0; e < params.entries().size(); ++e) {
        Tensor& p = params.entries()[e].tensor;
        const Tensor& g = grads.entries()[e].tensor;
        Tensor& m = m_.entries()[e].tensor;
        Tensor& v = v_.entries()[e].tensor;
        if (!p.same_shape(g)) {
            throw ValidationError("gradient shape mismatch for parameter " +
                                  params.entries()[e].name);
        }
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
            p[i] -= lr * weight_decay_ * p[i];
        }
    }
}

void write_loss_csv(const std::string& path, const std::vector<StepLog>& log) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open loss CSV for writing: " + path);
    out.precision(17);
    out << "step,task,loss,lr\n";
    for (const auto& row : log) {
        out << row.step << ',' << task_name(row.task) << ',' << row.loss << ','
            << row.lr << '\n';
    }
    if (!out) throw IoError("write failed for loss CSV: " + path);
}

namespace {

int plan_item_count(const MaskPlan& plan) {
    switch (plan.task) {
        case TaskKind::MLM: return static_cast<int>(plan.mlm_slots.size());
        case TaskKind::MRC:
        case TaskKind::MRFR: return static_cast<int>(plan.feature_masked_slots.size());
        case TaskKind::OPR: return static_cast<int>(plan.opr_masked_slots.size());
        case TaskKind::SRC: return static_cast<int>(plan.src_pairs.size());
    }
    return 0;
}

// Computes the summed (unnormalized) loss of one example under its plan and
// accumulates gradients scaled by `inv_count`.
double task_loss_and_backward(const ModelConfig& cfg, const ParamStore& params,
                              const ForwardTrace& trace, const Example& ex,
                              double inv_count, bool mrc_literal_kl,
                              ParamStore& grads) {
    const MaskPlan& plan = trace.plan;
    Tensor d_hidden(trace.length(), cfg.hidden_size);
    double loss_sum = 0.0;

    switch (plan.task) {
        case TaskKind::MLM: {
            for (std::size_t m = 0; m < plan.mlm_slots.size(); ++m) {
                int slot = plan.mlm_slots[m];
                int target = plan.mlm_targets[m];
                std::vector<double> logits = mlm_logits(cfg, params, trace, slot);
                std::vector<double> lsm = log_softmax(logits);
                loss_sum -= lsm[target];
                std::vector<double> d(logits.size());
                for (std::size_t c = 0; c < d.size(); ++c) {
                    d[c] = std::exp(lsm[c]) * inv_count;
                }
                d[target] -= inv_count;
                mlm_backward(cfg, params, trace, slot, d, grads, d_hidden);
            }
            break;
        }
        case TaskKind::MRC: {
            for (int slot : plan.feature_masked_slots) {
                const auto& target =
                    ex.scene.objects[trace.seq.object_index[slot]].category_distribution;
                if (static_cast<int>(target.size()) != cfg.num_categories) {
                    throw ValidationError("category distribution size mismatch");
                }
                check_distribution(target);
                std::vector<double> logits = mrc_logits(cfg, params, trace, slot);
                std::vector<double> lsm = log_softmax(logits);
                std::vector<double> d(logits.size());
                if (!mrc_literal_kl) {
                    for (std::size_t c = 0; c < lsm.size(); ++c) {
                        double t = target[c];
                        if (t > 0.0) loss_sum += t * (std::log(t) - lsm[c]);
                        d[c] = (std::exp(lsm[c]) - t) * inv_count;
                    }
                } else {
                    double item = 0.0;
                    for (std::size_t c = 0; c < lsm.size(); ++c) {
                        double p = std::exp(lsm[c]);
                        item += p * (lsm[c] - std::log(target[c]));
                    }
                    loss_sum += item;
                    for (std::size_t c = 0; c < lsm.size(); ++c) {
                        double p = std::exp(lsm[c]);
                        d[c] = p * ((lsm[c] - std::log(target[c])) - item) * inv_count;
                    }
                }
                mrc_backward(cfg, params, trace, slot, d, grads, d_hidden);
            }
            break;
        }
        case TaskKind::MRFR: {
            for (int slot : plan.feature_masked_slots) {
                const auto& target = ex.scene.objects[trace.seq.object_index[slot]].feature;
                std::vector<double> pred = mrfr_predict(cfg, params, trace, slot);
                std::vector<double> d(pred.size());
                double inv_dim = 1.0 / static_cast<double>(pred.size());
                for (std::size_t k = 0; k < pred.size(); ++k) {
                    double diff = pred[k] - target[k];
                    loss_sum += diff * diff * inv_dim;
                    d[k] = 2.0 * diff * inv_dim * inv_count;
                }
                mrfr_backward(cfg, params, trace, slot, d, grads, d_hidden);
            }
            break;
        }
        case TaskKind::OPR: {
            for (int slot : plan.opr_masked_slots) {
                const double* target = trace.vis_positions.row(slot);
                std::vector<double> pred = opr_predict(cfg, params, trace, slot);
                std::vector<double> d(5);
                for (int k = 0; k < 5; ++k) {
                    double diff = pred[k] - target[k];
                    loss_sum += diff * diff;
                    d[k] = 2.0 * diff * inv_count;
                }
                opr_backward(cfg, params, trace, slot, d, grads, d_hidden);
            }
            break;
        }
        case TaskKind::SRC: {
            for (const SrcPairTarget& pair : plan.src_pairs) {
                std::vector<double> logits =
                    src_logits(cfg, params, trace, pair.slot_i, pair.slot_j);
                std::vector<double> d(logits.size(), 0.0);
                if (pair.label >= 0) {
                    if (pair.label >= static_cast<int>(logits.size())) {
                        throw ValidationError("SRC label outside logit range");
                    }
                    std::vector<double> lsm = log_softmax(logits);
                    loss_sum -= lsm[pair.label];
                    for (std::size_t c = 0; c < d.size(); ++c) {
                        d[c] = std::exp(lsm[c]) * inv_count;
                    }
                    d[pair.label] -= inv_count;
                } else {
                    // regression variant: first logit predicts the raw value
                    double diff = logits[0] - pair.value;
                    loss_sum += diff * diff;
                    d[0] = 2.0 * diff * inv_count;
                }
                src_backward(cfg, params, trace, pair.slot_i, pair.slot_j, d, grads,
                             d_hidden);
            }
            break;
        }
    }
    backward(cfg, params, trace, d_hidden, grads);
    return loss_sum;
}

}  // namespace

PretrainResult pretrain(const ModelConfig& cfg, ParamStore& params,
                        const Vocabulary& vocab, const std::vector<Example>& train,
                        const PretrainOptions& opt) {
    cfg.validate();
    if (train.empty()) throw ValidationError("pretraining needs a non-empty dataset");
    if (opt.batch_size < 1) throw ValidationError("batch size must be >= 1");

    TaskSchedule schedule = build_schedule(opt.tasks, opt.total_steps,
                                           opt.seed ^ 0x5C4ED01EULL);
    SequenceLimits limits{cfg.max_text_len, cfg.max_visual_len};
    Rng root(opt.seed);
    AdamW optimizer(params);
    ParamStore grads = ParamStore::zeros_like(params);

    PretrainResult result;
    result.log.reserve(opt.total_steps);

    for (int step = 1; step <= opt.total_steps; ++step) {
        TaskKind task = schedule.steps[step - 1];
        Rng step_rng = root.fork(static_cast<std::uint64_t>(step));
        Rng dropout_rng = step_rng.fork(0xD0);

        std::vector<ForwardTrace> traces;
        std::vector<const Example*> sources;
        int items = 0;
        for (int b = 0; b < opt.batch_size; ++b) {
            for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
                const Example& ex =
                    train[step_rng.uniform_int(0, static_cast<int>(train.size()) - 1)];
                TokenSequence seq = encode_sequence(
                    vocab, vocab.tokenize(ex.question),
                    vocab.tokenize(ex.candidates[ex.correct]), ex.scene, limits);
                MaskPlan plan =
                    make_mask_plan(seq, ex.scene, task, opt.metric,
                                   static_cast<int>(ex.scene.objects.size()), step_rng);
                if (plan.empty()) continue;
                traces.push_back(forward(cfg, params, seq, ex.scene, &plan,
                                         cfg.dropout > 0.0 ? &dropout_rng : nullptr));
                sources.push_back(&ex);
                items += plan_item_count(plan);
                break;
            }
        }

        double lr = learning_rate(step, opt.total_steps, opt.peak_lr);
        if (traces.empty()) {
            std::cerr << "warning: step " << step << " (" << task_name(task)
                      << ") skipped, no maskable targets after " << kMaxRedraws
                      << " draws\n";
            ++result.skipped_steps;
            result.log.push_back(
                {step, task, std::numeric_limits<double>::quiet_NaN(), lr});
            continue;
        }

        grads.zero();
        double inv = 1.0 / static_cast<double>(items);
        double loss_sum = 0.0;
        for (std::size_t t = 0; t < traces.size(); ++t) {
            loss_sum += task_loss_and_backward(cfg, params, traces[t], *sources[t],
                                               inv, opt.mrc_literal_kl, grads);
        }
        double loss = loss_sum * inv;
        if (!std::isfinite(loss)) {
            throw NumericError("non-finite loss at step " + std::to_string(step) +
                               " task " + task_name(task));
        }
        optimizer.step(params, grads, lr);
        result.log.push_back({step, task, loss, lr});
        if (opt.verbose && step % 100 == 0) {
            std::cerr << "pretrain step " << step << "/" << opt.total_steps << " "
                      << task_name(task) << " loss " << loss << "\n";
        }
    }
    return result;
}

FinetuneResult finetune(const ModelConfig& cfg, ParamStore& params,
                        const Vocabulary& vocab, const std::vector<Example>& train,
                        const std::vector<Example>& val,
                        const FinetuneOptions& opt) {
    cfg.validate();
    if (train.empty()) throw ValidationError("fine-tuning needs a non-empty train split");
    SequenceLimits limits{cfg.max_text_len, cfg.max_visual_len};
    Rng root(opt.seed);
    AdamW optimizer(params);
    ParamStore grads = ParamStore::zeros_like(params);

    FinetuneResult result;
    result.log.reserve(opt.steps);

    for (int step = 1; step <= opt.steps; ++step) {
        Rng step_rng = root.fork(0xF17E0000ULL + static_cast<std::uint64_t>(step));
        Rng dropout_rng = step_rng.fork(0xD0);
        grads.zero();
        double loss_sum = 0.0;
        int count = 0;
        for (int b = 0; b < opt.batch_size; ++b) {
            const Example& ex =
                train[step_rng.uniform_int(0, static_cast<int>(train.size()) - 1)];
            std::vector<int> qids = vocab.tokenize(ex.question);
            std::array<ForwardTrace, 4> traces;
            std::array<double, 4> scores;
            for (int k = 0; k < 4; ++k) {
                TokenSequence seq = encode_sequence(
                    vocab, qids, vocab.tokenize(ex.candidates[k]), ex.scene, limits);
                traces[k] = forward(cfg, params, seq, ex.scene, nullptr,
                                    cfg.dropout > 0.0 ? &dropout_rng : nullptr);
                scores[k] = matching_score(cfg, params, traces[k]);
            }
            double maxv = *std::max_element(scores.begin(), scores.end());
            double denom = 0.0;
            for (double s : scores) denom += std::exp(s - maxv);
            double log_denom = std::log(denom) + maxv;
            loss_sum += log_denom - scores[ex.correct];
            ++count;
            for (int k = 0; k < 4; ++k) {
                double p = std::exp(scores[k] - log_denom);
                double d = (p - (k == ex.correct ? 1.0 : 0.0));
                Tensor d_hidden(traces[k].length(), cfg.hidden_size);
                matching_backward(cfg, params, traces[k], d, grads, d_hidden);
                backward(cfg, params, traces[k], d_hidden, grads);
            }
        }
        // scale: mean over examples
        double inv = 1.0 / static_cast<double>(count);
        for (auto& e : grads.entries()) {
            for (std::size_t i = 0; i < e.tensor.size(); ++i) e.tensor[i] *= inv;
        }
        double loss = loss_sum * inv;
        if (!std::isfinite(loss)) {
            throw NumericError("non-finite loss at fine-tune step " +
                               std::to_string(step));
        }
        double lr = learning_rate(step, opt.steps, opt.peak_lr);
        optimizer.step(params, grads, lr);
        result.log.push_back({step, TaskKind::MLM, loss, lr});
        if (opt.verbose && step % 50 == 0) {
            std::cerr << "finetune step " << step << "/" << opt.steps << " loss "
                      << loss << "\n";
        }
    }
    result.val_accuracy = val.empty() ? 0.0 : evaluate(cfg, params, vocab, val);
    result.val_count = static_cast<int>(val.size());
    return result;
}

double evaluate(const ModelConfig& cfg, const ParamStore& params,
                const Vocabulary& vocab, const std::vector<Example>& examples) {
    if (examples.empty()) throw ValidationError("evaluation needs examples");
    SequenceLimits limits{cfg.max_text_len, cfg.max_visual_len};
    int correct = 0;
    for (const Example& ex : examples) {
        std::vector<int> qids = vocab.tokenize(ex.question);
        int best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < 4; ++k) {
            TokenSequence seq = encode_sequence(vocab, qids,
                                                vocab.tokenize(ex.candidates[k]),
                                                ex.scene, limits);
            ForwardTrace trace = forward(cfg, params, seq, ex.scene);
            double score = matching_score(cfg, params, trace);
            if (score > best_score) {
                best_score = score;
                best = k;
            }
        }
        if (best == ex.correct) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(examples.size());
}

}  // namespace srm
