#include "srm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "srm/dataset.hpp"
#include "srm/geometry.hpp"
#include "srm/relation_graph.hpp"

namespace srm {

namespace {

constexpr double kFdStep = 1e-5;
constexpr double kDenomFloor = 1e-3;

double& coord(ParamStore& params, std::size_t global) {
    for (auto& e : params.entries()) {
        if (global < e.tensor.size()) return e.tensor[global];
        global -= e.tensor.size();
    }
    throw ValidationError("parameter coordinate out of range");
}

std::vector<double> log_softmax(const std::vector<double>& logits) {
    double maxv = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    for (double l : logits) denom += std::exp(l - maxv);
    double log_denom = std::log(denom) + maxv;
    std::vector<double> out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - log_denom;
    return out;
}

struct Fixture {
    ModelConfig cfg;
    Vocabulary vocab;
    Scene scene;
    TokenSequence seq;
    MaskPlan mlm_plan, mrc_plan, opr_plan, src_plan, full_plan;
    std::vector<int> mlm_targets;
    std::vector<std::vector<double>> mrc_targets;  // by masked-slot order
    ParamStore params;
};

Fixture make_fixture(std::uint64_t seed) {
    Fixture f;
    f.cfg.hidden_size = 16;
    f.cfg.num_layers = 2;
    f.cfg.num_heads = 2;
    f.cfg.ffn_size = 32;
    f.cfg.num_categories = 6;
    f.cfg.feature_dim = 8;
    f.cfg.max_text_len = 16;
    f.cfg.max_visual_len = 8;
    f.cfg.dropout = 0.0;  // finite differences need a deterministic forward
    f.vocab = build_vocabulary(f.cfg.num_categories);
    f.cfg.vocab_size = f.vocab.size();

    Rng rng(seed);
    f.scene.width = 64.0;
    f.scene.height = 64.0;
    for (int i = 0; i < 3; ++i) {
        SceneObject obj;
        obj.box.x1 = rng.uniform(0.0, 35.0);
        obj.box.y1 = rng.uniform(0.0, 35.0);
        obj.box.x2 = obj.box.x1 + rng.uniform(6.0, 24.0);
        obj.box.y2 = obj.box.y1 + rng.uniform(6.0, 24.0);
        obj.feature.resize(f.cfg.feature_dim);
        for (double& v : obj.feature) v = rng.normal(0.0, 1.0);
        int cat = rng.uniform_int(0, f.cfg.num_categories - 1);
        obj.category_distribution.assign(f.cfg.num_categories,
                                         0.05 / (f.cfg.num_categories - 1));
        obj.category_distribution[cat] = 0.95;
        obj.confidence = (i == 2) ? 0.3 : 0.9;
        obj.is_ground_truth = (i == 0);
        f.scene.objects.push_back(std::move(obj));
    }
    f.scene.validate(f.cfg.feature_dim);

    std::vector<int> qids, aids;
    for (int i = 0; i < 3; ++i) {
        qids.push_back(rng.uniform_int(Vocabulary::kReservedCount, f.cfg.vocab_size - 1));
    }
    for (int i = 0; i < 2; ++i) {
        aids.push_back(rng.uniform_int(Vocabulary::kReservedCount, f.cfg.vocab_size - 1));
    }
    f.seq = encode_sequence(f.vocab, qids, aids, f.scene,
                            {f.cfg.max_text_len, f.cfg.max_visual_len});

    std::vector<int> words = f.seq.word_slots();
    f.mlm_plan.task = TaskKind::MLM;
    f.mlm_plan.mlm_slots = {words[0], words[2]};
    for (int s : f.mlm_plan.mlm_slots) f.mlm_targets.push_back(f.seq.ids[s]);
    f.mlm_plan.mlm_targets = f.mlm_targets;

    std::vector<int> visual = f.seq.visual_slots();
    f.mrc_plan.task = TaskKind::MRC;
    f.mrc_plan.feature_masked_slots = {visual[1]};
    for (int s : f.mrc_plan.feature_masked_slots) {
        f.mrc_targets.push_back(
            f.scene.objects[f.seq.object_index[s]].category_distribution);
    }

    f.opr_plan.task = TaskKind::OPR;
    f.opr_plan.opr_masked_slots = {visual[0]};

    SpatialRelationGraph graph = build_graph(f.scene, RelationMetric::IoUClass10);
    f.src_plan.task = TaskKind::SRC;
    for (auto [i, j] : {std::pair{0, 1}, std::pair{1, 2}}) {
        RelationLabel lab = graph.label(i, j);
        f.src_plan.src_pairs.push_back(
            {visual[i], visual[j], lab.category, lab.value});
    }

    f.full_plan = f.mlm_plan;
    f.full_plan.feature_masked_slots = f.mrc_plan.feature_masked_slots;
    f.full_plan.opr_masked_slots = f.opr_plan.opr_masked_slots;
    f.full_plan.src_pairs = f.src_plan.src_pairs;

    Rng init_rng = rng.fork(0x1217);
    f.params = init_parameters(f.cfg, init_rng);
    return f;
}

// Per-head scalar losses plus their analytic backward passes. These are the
// production forward/backward code paths; the finite-difference side only
// ever re-evaluates the loss value.
struct HeadCheck {
    std::string name;
    const MaskPlan* plan;  // null for the matching head
    std::function<double(const Fixture&, const ForwardTrace&)> loss;
    std::function<void(const Fixture&, const ForwardTrace&, ParamStore&, Tensor&)>
        backward_fn;
};

double mlm_head_loss(const Fixture& f, const ForwardTrace& tr) {
    double total = 0.0;
    for (std::size_t m = 0; m < f.mlm_plan.mlm_slots.size(); ++m) {
        std::vector<double> lsm = log_softmax(
            mlm_logits(f.cfg, f.params, tr, f.mlm_plan.mlm_slots[m]));
        total -= lsm[f.mlm_targets[m]];
    }
    return total;
}

void mlm_head_backward(const Fixture& f, const ForwardTrace& tr, ParamStore& grads,
                       Tensor& d_hidden) {
    for (std::size_t m = 0; m < f.mlm_plan.mlm_slots.size(); ++m) {
        int slot = f.mlm_plan.mlm_slots[m];
        std::vector<double> lsm = log_softmax(mlm_logits(f.cfg, f.params, tr, slot));
        std::vector<double> d(lsm.size());
        for (std::size_t c = 0; c < d.size(); ++c) d[c] = std::exp(lsm[c]);
        d[f.mlm_targets[m]] -= 1.0;
        mlm_backward(f.cfg, f.params, tr, slot, d, grads, d_hidden);
    }
}

double mrc_head_loss(const Fixture& f, const ForwardTrace& tr) {
    double total = 0.0;
    for (std::size_t m = 0; m < f.mrc_plan.feature_masked_slots.size(); ++m) {
        std::vector<double> lsm = log_softmax(
            mrc_logits(f.cfg, f.params, tr, f.mrc_plan.feature_masked_slots[m]));
        for (std::size_t c = 0; c < lsm.size(); ++c) {
            double t = f.mrc_targets[m][c];
            if (t > 0.0) total += t * (std::log(t) - lsm[c]);
        }
    }
    return total;
}

void mrc_head_backward(const Fixture& f, const ForwardTrace& tr, ParamStore& grads,
                       Tensor& d_hidden) {
    for (std::size_t m = 0; m < f.mrc_plan.feature_masked_slots.size(); ++m) {
        int slot = f.mrc_plan.feature_masked_slots[m];
        std::vector<double> lsm = log_softmax(mrc_logits(f.cfg, f.params, tr, slot));
        std::vector<double> d(lsm.size());
        for (std::size_t c = 0; c < d.size(); ++c) {
            d[c] = std::exp(lsm[c]) - f.mrc_targets[m][c];
        }
        mrc_backward(f.cfg, f.params, tr, slot, d, grads, d_hidden);
    }
}

double mrfr_head_loss(const Fixture& f, const ForwardTrace& tr) {
    double total = 0.0;
    for (int slot : f.mrc_plan.feature_masked_slots) {
        std::vector<double> pred = mrfr_predict(f.cfg, f.params, tr, slot);
        const auto& target = f.scene.objects[f.seq.object_index[slot]].feature;
        for (std::size_t k = 0; k < pred.size(); ++k) {
            double diff = pred[k] - target[k];
            total += diff * diff / static_cast<double>(pred.size());
        }
    }
    return total;
}

void mrfr_head_backward(const Fixture& f, const ForwardTrace& tr, ParamStore& grads,
                        Tensor& d_hidden) {
    for (int slot : f.mrc_plan.feature_masked_slots) {
        std::vector<double> pred = mrfr_predict(f.cfg, f.params, tr, slot);
        const auto& target = f.scene.objects[f.seq.object_index[slot]].feature;
        std::vector<double> d(pred.size());
        for (std::size_t k = 0; k < pred.size(); ++k) {
            d[k] = 2.0 * (pred[k] - target[k]) / static_cast<double>(pred.size());
        }
        mrfr_backward(f.cfg, f.params, tr, slot, d, grads, d_hidden);
    }
}

double opr_head_loss(const Fixture& f, const ForwardTrace& tr) {
    double total = 0.0;
    for (int slot : f.opr_plan.opr_masked_slots) {
        std::vector<double> pred = opr_predict(f.cfg, f.params, tr, slot);
        for (int k = 0; k < 5; ++k) {
            double diff = pred[k] - tr.vis_positions(slot, k);
            total += diff * diff;
        }
    }
    return total;
}

void opr_head_backward(const Fixture& f, const ForwardTrace& tr, ParamStore& grads,
                       Tensor& d_hidden) {
    for (int slot : f.opr_plan.opr_masked_slots) {
        std::vector<double> pred = opr_predict(f.cfg, f.params, tr, slot);
        std::vector<double> d(5);
        for (int k = 0; k < 5; ++k) d[k] = 2.0 * (pred[k] - tr.vis_positions(slot, k));
        opr_backward(f.cfg, f.params, tr, slot, d, grads, d_hidden);
    }
}

double src_head_loss(const Fixture& f, const ForwardTrace& tr) {
    double total = 0.0;
    for (const SrcPairTarget& p : f.src_plan.src_pairs) {
        std::vector<double> lsm = log_softmax(
            src_logits(f.cfg, f.params, tr, p.slot_i, p.slot_j));
        total -= lsm[p.label];
    }
    return total;
}

void src_head_backward(const Fixture& f, const ForwardTrace& tr, ParamStore& grads,
                       Tensor& d_hidden) {
    for (const SrcPairTarget& p : f.src_plan.src_pairs) {
        std::vector<double> lsm = log_softmax(
            src_logits(f.cfg, f.params, tr, p.slot_i, p.slot_j));
        std::vector<double> d(lsm.size());
        for (std::size_t c = 0; c < d.size(); ++c) d[c] = std::exp(lsm[c]);
        d[p.label] -= 1.0;
        src_backward(f.cfg, f.params, tr, p.slot_i, p.slot_j, d, grads, d_hidden);
    }
}

double matching_head_loss(const Fixture& f, const ForwardTrace& tr) {
    // softplus keeps the scalar loss curved so the check exercises second-order
    // finite-difference cancellation too
    double s = matching_score(f.cfg, f.params, tr);
    return std::log1p(std::exp(s));
}

void matching_head_backward(const Fixture& f, const ForwardTrace& tr,
                            ParamStore& grads, Tensor& d_hidden) {
    double s = matching_score(f.cfg, f.params, tr);
    double d = 1.0 / (1.0 + std::exp(-s));
    matching_backward(f.cfg, f.params, tr, d, grads, d_hidden);
}

GradCheckResult run_one(Fixture& f, const HeadCheck& check, double tolerance,
                        double corruption, int min_coords, Rng& rng) {
    auto eval_loss = [&]() {
        ForwardTrace tr = forward(f.cfg, f.params, f.seq, f.scene, check.plan);
        return check.loss(f, tr);
    };

    ForwardTrace tr = forward(f.cfg, f.params, f.seq, f.scene, check.plan);
    ParamStore grads = ParamStore::zeros_like(f.params);
    Tensor d_hidden(tr.length(), f.cfg.hidden_size);
    check.backward_fn(f, tr, grads, d_hidden);
    backward(f.cfg, f.params, tr, d_hidden, grads);

    // flatten analytic gradient and pick the best-conditioned coordinates
    std::vector<double> flat;
    for (const auto& e : grads.entries()) {
        flat.insert(flat.end(), e.tensor.data(), e.tensor.data() + e.tensor.size());
    }
    std::vector<std::size_t> order(flat.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(flat[a]) > std::abs(flat[b]);
    });
    int n_check = std::min<int>(min_coords, static_cast<int>(order.size()));

    GradCheckResult result;
    result.name = check.name;
    result.coords_checked = n_check;
    for (int c = 0; c < n_check; ++c) {
        std::size_t idx = order[c];
        double analytic = flat[idx];
        if (c == 0) analytic += corruption;
        double& p = coord(f.params, idx);
        double saved = p;
        p = saved + kFdStep;
        double lp = eval_loss();
        p = saved - kFdStep;
        double lm = eval_loss();
        p = saved;
        double fd = (lp - lm) / (2.0 * kFdStep);
        double rel = std::abs(fd - analytic) /
                     std::max({std::abs(fd), std::abs(analytic), kDenomFloor});
        result.max_rel_error = std::max(result.max_rel_error, rel);
    }
    result.passed = result.max_rel_error < tolerance;
    return result;
}

}  // namespace

std::vector<GradCheckResult> run_gradient_checks(std::uint64_t seed,
                                                 double tolerance,
                                                 double corruption,
                                                 int min_coords) {
    Fixture f = make_fixture(seed);
    Rng rng(seed ^ 0x6D4CULL);

    std::vector<HeadCheck> checks = {
        {"opr", &f.opr_plan, opr_head_loss, opr_head_backward},
        {"src", &f.src_plan, src_head_loss, src_head_backward},
        {"mlm", &f.mlm_plan, mlm_head_loss, mlm_head_backward},
        {"mrc", &f.mrc_plan, mrc_head_loss, mrc_head_backward},
        {"mrfr", &f.mrc_plan, mrfr_head_loss, mrfr_head_backward},
        {"matching", nullptr, matching_head_loss, matching_head_backward},
        {"full_model", &f.full_plan,
         [](const Fixture& fx, const ForwardTrace& tr) {
             return mlm_head_loss(fx, tr) + mrc_head_loss(fx, tr) +
                    mrfr_head_loss(fx, tr) + opr_head_loss(fx, tr) +
                    src_head_loss(fx, tr) + matching_head_loss(fx, tr);
         },
         [](const Fixture& fx, const ForwardTrace& tr, ParamStore& grads,
            Tensor& d_hidden) {
             mlm_head_backward(fx, tr, grads, d_hidden);
             mrc_head_backward(fx, tr, grads, d_hidden);
             mrfr_head_backward(fx, tr, grads, d_hidden);
             opr_head_backward(fx, tr, grads, d_hidden);
             src_head_backward(fx, tr, grads, d_hidden);
             matching_head_backward(fx, tr, grads, d_hidden);
         }},
    };

    std::vector<GradCheckResult> results;
    for (const HeadCheck& check : checks) {
        results.push_back(run_one(f, check, tolerance, corruption, min_coords, rng));
    }
    return results;
}

bool all_passed(const std::vector<GradCheckResult>& results) {
    for (const auto& r : results) {
        if (!r.passed) return false;
    }
    return true;
}

}  // namespace srm
