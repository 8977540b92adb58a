#include "srm/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace srm {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kMaskedScore = -1e30;

std::string layer_param(int layer, const char* name) {
    return "layer" + std::to_string(layer) + "." + name;
}

double gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475244));
}

double gelu_grad(double x) {
    constexpr double inv_sqrt_2pi = 0.3989422804014326779;
    return 0.5 * (1.0 + std::erf(x * 0.7071067811865475244)) +
           x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

// y(s,:) = W * x(s,:) + b, W is (out x in) row-major.
void linear_rows(const Tensor& x, const Tensor& w, const Tensor* b, Tensor& y) {
    int s_count = x.rows();
    int in = x.cols();
    int out = w.rows();
    for (int s = 0; s < s_count; ++s) {
        const double* xs = x.row(s);
        double* ys = y.row(s);
        for (int o = 0; o < out; ++o) {
            const double* wo = w.row(o);
            double acc = b ? (*b)(o) : 0.0;
            for (int i = 0; i < in; ++i) acc += wo[i] * xs[i];
            ys[o] = acc;
        }
    }
}

// Backward of linear_rows: accumulates dW, db and writes dx.
void linear_rows_backward(const Tensor& x, const Tensor& w, const Tensor& dy,
                          Tensor& dw, Tensor* db, Tensor& dx) {
    int s_count = x.rows();
    int in = x.cols();
    int out = w.rows();
    dx.fill(0.0);
    for (int s = 0; s < s_count; ++s) {
        const double* xs = x.row(s);
        const double* dys = dy.row(s);
        double* dxs = dx.row(s);
        for (int o = 0; o < out; ++o) {
            double g = dys[o];
            if (g == 0.0) continue;
            double* dwo = dw.row(o);
            const double* wo = w.row(o);
            for (int i = 0; i < in; ++i) {
                dwo[i] += g * xs[i];
                dxs[i] += g * wo[i];
            }
            if (db) (*db)(o) += g;
        }
    }
}

void layer_norm(const Tensor& x, const Tensor& g, const Tensor& b, Tensor& y,
                Tensor& mean, Tensor& rstd) {
    int s_count = x.rows();
    int h = x.cols();
    for (int s = 0; s < s_count; ++s) {
        const double* xs = x.row(s);
        double mu = 0.0;
        for (int i = 0; i < h; ++i) mu += xs[i];
        mu /= h;
        double var = 0.0;
        for (int i = 0; i < h; ++i) {
            double d = xs[i] - mu;
            var += d * d;
        }
        var /= h;
        double r = 1.0 / std::sqrt(var + kLnEps);
        mean(s) = mu;
        rstd(s) = r;
        double* ys = y.row(s);
        for (int i = 0; i < h; ++i) {
            ys[i] = g(i) * (xs[i] - mu) * r + b(i);
        }
    }
}

// Accumulates dg, db; adds dx into `dx_accum`.
void layer_norm_backward(const Tensor& x, const Tensor& g, const Tensor& mean,
                         const Tensor& rstd, const Tensor& dy, Tensor& dg,
                         Tensor& db, Tensor& dx_accum) {
    int s_count = x.rows();
    int h = x.cols();
    for (int s = 0; s < s_count; ++s) {
        const double* xs = x.row(s);
        const double* dys = dy.row(s);
        double mu = mean(s);
        double r = rstd(s);
        double sum_dxhat = 0.0;
        double sum_dxhat_xhat = 0.0;
        for (int i = 0; i < h; ++i) {
            double xhat = (xs[i] - mu) * r;
            double dxhat = dys[i] * g(i);
            dg(i) += dys[i] * xhat;
            db(i) += dys[i];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
        }
        sum_dxhat /= h;
        sum_dxhat_xhat /= h;
        double* dxs = dx_accum.row(s);
        for (int i = 0; i < h; ++i) {
            double xhat = (xs[i] - mu) * r;
            double dxhat = dys[i] * g(i);
            dxs[i] += r * (dxhat - sum_dxhat - xhat * sum_dxhat_xhat);
        }
    }
}

void apply_dropout(Tensor& x, double rate, Rng* rng, Tensor& mask_out) {
    if (rng == nullptr || rate <= 0.0) return;
    double keep = 1.0 - rate;
    mask_out = Tensor(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) {
        double m = rng->bernoulli(rate) ? 0.0 : 1.0 / keep;
        mask_out[i] = m;
        x[i] *= m;
    }
}

bool contains(const std::vector<int>& xs, int v) {
    return std::find(xs.begin(), xs.end(), v) != xs.end();
}

void require_visual(const ForwardTrace& trace, int slot, const char* head) {
    if (slot < 0 || slot >= trace.length() || !trace.seq.is_visual[slot]) {
        std::ostringstream os;
        os << head << " head requires a visual slot, got slot " << slot;
        throw ValidationError(os.str());
    }
}

void require_text(const ForwardTrace& trace, int slot, const char* head) {
    if (slot < 0 || slot >= trace.length() || trace.seq.is_visual[slot]) {
        std::ostringstream os;
        os << head << " head requires a text slot, got slot " << slot;
        throw ValidationError(os.str());
    }
}

std::vector<double> hidden_row(const ForwardTrace& trace, int slot) {
    const double* y = trace.hidden.row(slot);
    return std::vector<double>(y, y + trace.hidden.cols());
}

// Two-layer MLP head: out = W2 * gelu(W1 * x + b1) + b2.
std::vector<double> mlp_head(const ParamStore& params, const char* w1,
                             const char* b1, const char* w2, const char* b2,
                             const std::vector<double>& x) {
    const Tensor& W1 = params.at(w1);
    const Tensor& B1 = params.at(b1);
    const Tensor& W2 = params.at(w2);
    const Tensor& B2 = params.at(b2);
    std::vector<double> h(W1.rows());
    for (int o = 0; o < W1.rows(); ++o) {
        double acc = B1(o);
        const double* row = W1.row(o);
        for (int i = 0; i < W1.cols(); ++i) acc += row[i] * x[i];
        h[o] = gelu(acc);
    }
    std::vector<double> out(W2.rows());
    for (int o = 0; o < W2.rows(); ++o) {
        double acc = B2(o);
        const double* row = W2.row(o);
        for (int i = 0; i < W2.cols(); ++i) acc += row[i] * h[i];
        out[o] = acc;
    }
    return out;
}

// Backward of mlp_head; returns dx.
std::vector<double> mlp_head_backward(const ParamStore& params, const char* w1n,
                                      const char* b1n, const char* w2n,
                                      const char* b2n, const std::vector<double>& x,
                                      const std::vector<double>& d_out,
                                      ParamStore& grads) {
    const Tensor& W1 = params.at(w1n);
    const Tensor& B1 = params.at(b1n);
    const Tensor& W2 = params.at(w2n);
    Tensor& dW1 = grads.at(w1n);
    Tensor& dB1 = grads.at(b1n);
    Tensor& dW2 = grads.at(w2n);
    Tensor& dB2 = grads.at(b2n);

    std::vector<double> pre(W1.rows()), act(W1.rows());
    for (int o = 0; o < W1.rows(); ++o) {
        double acc = B1(o);
        const double* row = W1.row(o);
        for (int i = 0; i < W1.cols(); ++i) acc += row[i] * x[i];
        pre[o] = acc;
        act[o] = gelu(acc);
    }
    std::vector<double> d_act(W1.rows(), 0.0);
    for (int o = 0; o < W2.rows(); ++o) {
        double g = d_out[o];
        dB2(o) += g;
        double* drow = dW2.row(o);
        const double* row = W2.row(o);
        for (int i = 0; i < W2.cols(); ++i) {
            drow[i] += g * act[i];
            d_act[i] += g * row[i];
        }
    }
    std::vector<double> dx(W1.cols(), 0.0);
    for (int o = 0; o < W1.rows(); ++o) {
        double g = d_act[o] * gelu_grad(pre[o]);
        dB1(o) += g;
        double* drow = dW1.row(o);
        const double* row = W1.row(o);
        for (int i = 0; i < W1.cols(); ++i) {
            drow[i] += g * x[i];
            dx[i] += g * row[i];
        }
    }
    return dx;
}

}  // namespace

void ModelConfig::validate() const {
    if (hidden_size < 1 || num_layers < 1 || num_heads < 1 || ffn_size < 1 ||
        vocab_size < 1 || num_categories < 1 || feature_dim < 1 ||
        max_text_len < 1 || max_visual_len < 1) {
        throw ValidationError("model config: all sizes must be >= 1");
    }
    if (hidden_size % num_heads != 0) {
        throw ValidationError("model config: hidden_size must be divisible by num_heads");
    }
    if (dropout < 0.0 || dropout >= 1.0) {
        throw ValidationError("model config: dropout outside [0,1)");
    }
}

std::string task_name(TaskKind task) {
    switch (task) {
        case TaskKind::OPR: return "OPR";
        case TaskKind::SRC: return "SRC";
        case TaskKind::MLM: return "MLM";
        case TaskKind::MRC: return "MRC";
        case TaskKind::MRFR: return "MRFR";
    }
    throw ValidationError("unknown task");
}

TaskKind task_from_name(const std::string& name) {
    if (name == "OPR") return TaskKind::OPR;
    if (name == "SRC") return TaskKind::SRC;
    if (name == "MLM") return TaskKind::MLM;
    if (name == "MRC") return TaskKind::MRC;
    if (name == "MRFR") return TaskKind::MRFR;
    throw ValidationError("unknown task name: " + name +
                          " (expected OPR|SRC|MLM|MRC|MRFR)");
}

bool MaskPlan::empty() const {
    return mlm_slots.empty() && feature_masked_slots.empty() &&
           opr_masked_slots.empty() && src_pairs.empty();
}

ParamStore init_parameters(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    ParamStore p;
    const double scale = 0.02;
    auto matrix = [&](const std::string& name, int rows, int cols) {
        Tensor& t = p.add(name, rows, cols);
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
    };
    auto bias = [&](const std::string& name, int n) { p.add(name, n); };
    auto ln = [&](const std::string& prefix) {
        p.add(prefix + "_g", cfg.hidden_size).fill(1.0);
        p.add(prefix + "_b", cfg.hidden_size);
    };

    int positions = cfg.max_text_len + 3;  // [CLS], [IMG], [SEP]
    matrix("tok_emb", cfg.vocab_size, cfg.hidden_size);
    matrix("pos_emb", positions, cfg.hidden_size);
    matrix("type_emb", 3, cfg.hidden_size);
    matrix("vis_feat_w", cfg.hidden_size, cfg.feature_dim);
    bias("vis_feat_b", cfg.hidden_size);
    {
        // The position projection has only 5 input dimensions, all in [0, 1].
        // With the global 0.02 init its contribution to the embedding is
        // negligible next to the feature and type pathways, and geometry is
        // never picked up during training. Variance-preserving fan-in init
        // (std = 1/sqrt(5)) keeps the position pathway comparable in
        // magnitude to the other embedding terms.
        Tensor& t = p.add("vis_pos_w", cfg.hidden_size, 5);
        const double pos_scale = 1.0 / std::sqrt(5.0);
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = pos_scale * rng.normal();
    }
    ln("embed_ln");

    for (int l = 0; l < cfg.num_layers; ++l) {
        ln(layer_param(l, "ln1"));
        matrix(layer_param(l, "attn_wq"), cfg.hidden_size, cfg.hidden_size);
        bias(layer_param(l, "attn_bq"), cfg.hidden_size);
        matrix(layer_param(l, "attn_wk"), cfg.hidden_size, cfg.hidden_size);
        bias(layer_param(l, "attn_bk"), cfg.hidden_size);
        matrix(layer_param(l, "attn_wv"), cfg.hidden_size, cfg.hidden_size);
        bias(layer_param(l, "attn_bv"), cfg.hidden_size);
        matrix(layer_param(l, "attn_wo"), cfg.hidden_size, cfg.hidden_size);
        bias(layer_param(l, "attn_bo"), cfg.hidden_size);
        ln(layer_param(l, "ln2"));
        matrix(layer_param(l, "ffn_w1"), cfg.ffn_size, cfg.hidden_size);
        bias(layer_param(l, "ffn_b1"), cfg.ffn_size);
        matrix(layer_param(l, "ffn_w2"), cfg.hidden_size, cfg.ffn_size);
        bias(layer_param(l, "ffn_b2"), cfg.hidden_size);
    }
    ln("final_ln");

    bias("mlm_b", cfg.vocab_size);  // MLM projection is tied to tok_emb
    matrix("mrc_w", cfg.num_categories, cfg.hidden_size);
    bias("mrc_b", cfg.num_categories);
    matrix("mrfr_w", cfg.feature_dim, cfg.hidden_size);
    bias("mrfr_b", cfg.feature_dim);
    matrix("opr_w1", cfg.hidden_size, cfg.hidden_size);
    bias("opr_b1", cfg.hidden_size);
    matrix("opr_w2", 5, cfg.hidden_size);
    bias("opr_b2", 5);
    matrix("src_w1", cfg.hidden_size, 2 * cfg.hidden_size);
    bias("src_b1", cfg.hidden_size);
    matrix("src_w2", 10, cfg.hidden_size);
    bias("src_b2", 10);
    matrix("match_w", 1, cfg.hidden_size);
    bias("match_b", 1);
    return p;
}

ForwardTrace forward(const ModelConfig& cfg, const ParamStore& params,
                     const TokenSequence& seq, const Scene& scene,
                     const MaskPlan* plan, Rng* dropout_rng) {
    cfg.validate();
    int s_count = seq.length();
    int h = cfg.hidden_size;

    ForwardTrace trace;
    trace.seq = seq;
    if (plan) trace.plan = *plan;
    trace.effective_ids.assign(s_count, -1);
    trace.vis_features = Tensor(s_count, cfg.feature_dim);
    trace.vis_positions = Tensor(s_count, 5);
    trace.position_included.assign(s_count, 0);
    trace.embed_pre = Tensor(s_count, h);

    const Tensor& tok_emb = params.at("tok_emb");
    const Tensor& pos_emb = params.at("pos_emb");
    const Tensor& type_emb = params.at("type_emb");
    const Tensor& feat_w = params.at("vis_feat_w");
    const Tensor& feat_b = params.at("vis_feat_b");
    const Tensor& pos_w = params.at("vis_pos_w");

    for (int s = 0; s < s_count; ++s) {
        double* e = trace.embed_pre.row(s);
        int type = seq.type_ids[s];
        if (type < 0 || type > 2) throw ValidationError("type id out of range");
        if (!seq.is_visual[s]) {
            int id = seq.ids[s];
            if (plan && contains(plan->mlm_slots, s)) id = Vocabulary::kMask;
            if (id < 0 || id >= cfg.vocab_size) {
                throw ValidationError("token id out of range: " + std::to_string(id));
            }
            int pos = seq.text_positions[s];
            if (pos < 0 || pos >= pos_emb.rows()) {
                throw ValidationError("sequence position out of range");
            }
            trace.effective_ids[s] = id;
            const double* te = tok_emb.row(id);
            const double* pe = pos_emb.row(pos);
            const double* ty = type_emb.row(type);
            for (int i = 0; i < h; ++i) e[i] = te[i] + pe[i] + ty[i];
        } else {
            int obj_idx = seq.object_index[s];
            if (obj_idx < 0 || obj_idx >= static_cast<int>(scene.objects.size())) {
                throw ValidationError("visual slot object index out of range");
            }
            const SceneObject& obj = scene.objects[obj_idx];
            if (static_cast<int>(obj.feature.size()) != cfg.feature_dim) {
                throw ValidationError("object feature dimension mismatch");
            }
            bool feature_masked = plan && contains(plan->feature_masked_slots, s);
            bool position_masked = plan && contains(plan->opr_masked_slots, s);
            double* feat = trace.vis_features.row(s);
            for (int d = 0; d < cfg.feature_dim; ++d) {
                feat[d] = feature_masked ? 0.0 : obj.feature[d];
            }
            PositionVector p5 = position_vector(obj.box, scene.width, scene.height);
            double* pv = trace.vis_positions.row(s);
            for (int d = 0; d < 5; ++d) pv[d] = p5[d];
            trace.position_included[s] = position_masked ? 0 : 1;

            const double* ty = type_emb.row(type);
            for (int i = 0; i < h; ++i) {
                double acc = feat_b(i) + ty[i];
                const double* fw = feat_w.row(i);
                for (int d = 0; d < cfg.feature_dim; ++d) acc += fw[d] * feat[d];
                if (!position_masked) {
                    const double* pw = pos_w.row(i);
                    for (int d = 0; d < 5; ++d) acc += pw[d] * pv[d];
                }
                e[i] = acc;
            }
        }
    }

    trace.embed_mean = Tensor(s_count);
    trace.embed_rstd = Tensor(s_count);
    trace.x0 = Tensor(s_count, h);
    layer_norm(trace.embed_pre, params.at("embed_ln_g"), params.at("embed_ln_b"),
               trace.x0, trace.embed_mean, trace.embed_rstd);

    int heads = cfg.num_heads;
    int hd = cfg.head_dim();
    double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    Tensor x = trace.x0;
    trace.layers.resize(cfg.num_layers);
    for (int l = 0; l < cfg.num_layers; ++l) {
        LayerTrace& lt = trace.layers[l];
        lt.x_in = x;

        lt.n1 = Tensor(s_count, h);
        lt.ln1_mean = Tensor(s_count);
        lt.ln1_rstd = Tensor(s_count);
        layer_norm(lt.x_in, params.at(layer_param(l, "ln1_g")),
                   params.at(layer_param(l, "ln1_b")), lt.n1, lt.ln1_mean,
                   lt.ln1_rstd);

        lt.q = Tensor(s_count, h);
        lt.k = Tensor(s_count, h);
        lt.v = Tensor(s_count, h);
        const Tensor& bq = params.at(layer_param(l, "attn_bq"));
        const Tensor& bk = params.at(layer_param(l, "attn_bk"));
        const Tensor& bv = params.at(layer_param(l, "attn_bv"));
        linear_rows(lt.n1, params.at(layer_param(l, "attn_wq")), &bq, lt.q);
        linear_rows(lt.n1, params.at(layer_param(l, "attn_wk")), &bk, lt.k);
        linear_rows(lt.n1, params.at(layer_param(l, "attn_wv")), &bv, lt.v);

        lt.attn.assign(heads, Tensor(s_count, s_count));
        lt.ctx = Tensor(s_count, h);
        std::vector<double> scores(s_count);
        for (int head = 0; head < heads; ++head) {
            int off = head * hd;
            Tensor& attn = lt.attn[head];
            for (int i = 0; i < s_count; ++i) {
                double maxv = kMaskedScore;
                for (int j = 0; j < s_count; ++j) {
                    if (!seq.attend[j]) {
                        scores[j] = kMaskedScore;
                        continue;
                    }
                    const double* qi = lt.q.row(i) + off;
                    const double* kj = lt.k.row(j) + off;
                    double acc = 0.0;
                    for (int d = 0; d < hd; ++d) acc += qi[d] * kj[d];
                    scores[j] = acc * scale;
                    maxv = std::max(maxv, scores[j]);
                }
                double denom = 0.0;
                for (int j = 0; j < s_count; ++j) {
                    double p = seq.attend[j] ? std::exp(scores[j] - maxv) : 0.0;
                    attn(i, j) = p;
                    denom += p;
                }
                double* ci = lt.ctx.row(i) + off;
                for (int j = 0; j < s_count; ++j) {
                    attn(i, j) /= denom;
                }
                for (int d = 0; d < hd; ++d) {
                    double acc = 0.0;
                    for (int j = 0; j < s_count; ++j) {
                        acc += attn(i, j) * lt.v(j, off + d);
                    }
                    ci[d] = acc;
                }
            }
        }

        lt.attn_out = Tensor(s_count, h);
        const Tensor& bo = params.at(layer_param(l, "attn_bo"));
        linear_rows(lt.ctx, params.at(layer_param(l, "attn_wo")), &bo, lt.attn_out);

        Tensor dropped = lt.attn_out;
        apply_dropout(dropped, cfg.dropout, dropout_rng, lt.attn_dropmask);
        lt.x_mid = Tensor(s_count, h);
        for (std::size_t i = 0; i < lt.x_mid.size(); ++i) {
            lt.x_mid[i] = lt.x_in[i] + dropped[i];
        }

        lt.n2 = Tensor(s_count, h);
        lt.ln2_mean = Tensor(s_count);
        lt.ln2_rstd = Tensor(s_count);
        layer_norm(lt.x_mid, params.at(layer_param(l, "ln2_g")),
                   params.at(layer_param(l, "ln2_b")), lt.n2, lt.ln2_mean,
                   lt.ln2_rstd);

        lt.ffn_pre = Tensor(s_count, cfg.ffn_size);
        const Tensor& fb1 = params.at(layer_param(l, "ffn_b1"));
        linear_rows(lt.n2, params.at(layer_param(l, "ffn_w1")), &fb1, lt.ffn_pre);
        lt.ffn_act = Tensor(s_count, cfg.ffn_size);
        for (std::size_t i = 0; i < lt.ffn_pre.size(); ++i) {
            lt.ffn_act[i] = gelu(lt.ffn_pre[i]);
        }
        lt.ffn_out = Tensor(s_count, h);
        const Tensor& fb2 = params.at(layer_param(l, "ffn_b2"));
        linear_rows(lt.ffn_act, params.at(layer_param(l, "ffn_w2")), &fb2, lt.ffn_out);

        Tensor dropped2 = lt.ffn_out;
        apply_dropout(dropped2, cfg.dropout, dropout_rng, lt.ffn_dropmask);
        lt.x_out = Tensor(s_count, h);
        for (std::size_t i = 0; i < lt.x_out.size(); ++i) {
            lt.x_out[i] = lt.x_mid[i] + dropped2[i];
        }
        if (!lt.x_out.all_finite()) {
            throw NumericError("non-finite activations in transformer layer " +
                               std::to_string(l));
        }
        x = lt.x_out;
    }

    trace.final_mean = Tensor(s_count);
    trace.final_rstd = Tensor(s_count);
    trace.hidden = Tensor(s_count, h);
    layer_norm(x, params.at("final_ln_g"), params.at("final_ln_b"), trace.hidden,
               trace.final_mean, trace.final_rstd);
    if (!trace.hidden.all_finite()) {
        throw NumericError("non-finite activations in final layer norm");
    }
    return trace;
}

void backward(const ModelConfig& cfg, const ParamStore& params,
              const ForwardTrace& trace, const Tensor& d_hidden,
              ParamStore& grads) {
    int s_count = trace.length();
    int h = cfg.hidden_size;
    if (d_hidden.rows() != s_count || d_hidden.cols() != h) {
        throw ValidationError("d_hidden shape mismatch in backward");
    }

    // Final layer norm.
    const Tensor& x_last =
        cfg.num_layers > 0 ? trace.layers.back().x_out : trace.x0;
    Tensor dx(s_count, h);
    layer_norm_backward(x_last, params.at("final_ln_g"), trace.final_mean,
                        trace.final_rstd, d_hidden, grads.at("final_ln_g"),
                        grads.at("final_ln_b"), dx);

    int heads = cfg.num_heads;
    int hd = cfg.head_dim();
    double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    for (int l = cfg.num_layers - 1; l >= 0; --l) {
        const LayerTrace& lt = trace.layers[l];
        // dx holds d(x_out).
        Tensor d_ffn_out = dx;
        if (!lt.ffn_dropmask.empty()) {
            for (std::size_t i = 0; i < d_ffn_out.size(); ++i) {
                d_ffn_out[i] *= lt.ffn_dropmask[i];
            }
        }
        Tensor d_act(s_count, cfg.ffn_size);
        linear_rows_backward(lt.ffn_act, params.at(layer_param(l, "ffn_w2")),
                             d_ffn_out, grads.at(layer_param(l, "ffn_w2")),
                             &grads.at(layer_param(l, "ffn_b2")), d_act);
        for (std::size_t i = 0; i < d_act.size(); ++i) {
            d_act[i] *= gelu_grad(lt.ffn_pre[i]);
        }
        Tensor d_n2(s_count, h);
        linear_rows_backward(lt.n2, params.at(layer_param(l, "ffn_w1")), d_act,
                             grads.at(layer_param(l, "ffn_w1")),
                             &grads.at(layer_param(l, "ffn_b1")), d_n2);
        Tensor d_mid = dx;  // residual branch
        layer_norm_backward(lt.x_mid, params.at(layer_param(l, "ln2_g")),
                            lt.ln2_mean, lt.ln2_rstd, d_n2,
                            grads.at(layer_param(l, "ln2_g")),
                            grads.at(layer_param(l, "ln2_b")), d_mid);

        Tensor d_attn_out = d_mid;
        if (!lt.attn_dropmask.empty()) {
            for (std::size_t i = 0; i < d_attn_out.size(); ++i) {
                d_attn_out[i] *= lt.attn_dropmask[i];
            }
        }
        Tensor d_ctx(s_count, h);
        linear_rows_backward(lt.ctx, params.at(layer_param(l, "attn_wo")),
                             d_attn_out, grads.at(layer_param(l, "attn_wo")),
                             &grads.at(layer_param(l, "attn_bo")), d_ctx);

        Tensor dq(s_count, h), dk(s_count, h), dv(s_count, h);
        std::vector<double> dp(s_count), ds(s_count);
        for (int head = 0; head < heads; ++head) {
            int off = head * hd;
            const Tensor& attn = lt.attn[head];
            for (int i = 0; i < s_count; ++i) {
                const double* dci = d_ctx.row(i) + off;
                double dot = 0.0;
                for (int j = 0; j < s_count; ++j) {
                    double p = attn(i, j);
                    double acc = 0.0;
                    const double* vj = lt.v.row(j) + off;
                    for (int d = 0; d < hd; ++d) acc += dci[d] * vj[d];
                    dp[j] = acc;
                    dot += acc * p;
                    double* dvj = dv.row(j) + off;
                    for (int d = 0; d < hd; ++d) dvj[d] += p * dci[d];
                }
                double* dqi = dq.row(i) + off;
                for (int j = 0; j < s_count; ++j) {
                    double p = attn(i, j);
                    if (p == 0.0) continue;
                    double dsij = p * (dp[j] - dot) * scale;
                    const double* kj = lt.k.row(j) + off;
                    double* dkj = dk.row(j) + off;
                    const double* qi = lt.q.row(i) + off;
                    for (int d = 0; d < hd; ++d) {
                        dqi[d] += dsij * kj[d];
                        dkj[d] += dsij * qi[d];
                    }
                }
            }
        }

        Tensor d_n1(s_count, h), tmp(s_count, h);
        linear_rows_backward(lt.n1, params.at(layer_param(l, "attn_wq")), dq,
                             grads.at(layer_param(l, "attn_wq")),
                             &grads.at(layer_param(l, "attn_bq")), d_n1);
        linear_rows_backward(lt.n1, params.at(layer_param(l, "attn_wk")), dk,
                             grads.at(layer_param(l, "attn_wk")),
                             &grads.at(layer_param(l, "attn_bk")), tmp);
        for (std::size_t i = 0; i < d_n1.size(); ++i) d_n1[i] += tmp[i];
        linear_rows_backward(lt.n1, params.at(layer_param(l, "attn_wv")), dv,
                             grads.at(layer_param(l, "attn_wv")),
                             &grads.at(layer_param(l, "attn_bv")), tmp);
        for (std::size_t i = 0; i < d_n1.size(); ++i) d_n1[i] += tmp[i];

        Tensor d_in = d_mid;  // residual branch
        layer_norm_backward(lt.x_in, params.at(layer_param(l, "ln1_g")),
                            lt.ln1_mean, lt.ln1_rstd, d_n1,
                            grads.at(layer_param(l, "ln1_g")),
                            grads.at(layer_param(l, "ln1_b")), d_in);
        dx = std::move(d_in);
    }

    // Embedding layer norm.
    Tensor d_embed(s_count, h);
    layer_norm_backward(trace.embed_pre, params.at("embed_ln_g"), trace.embed_mean,
                        trace.embed_rstd, dx, grads.at("embed_ln_g"),
                        grads.at("embed_ln_b"), d_embed);

    Tensor& d_tok = grads.at("tok_emb");
    Tensor& d_pos = grads.at("pos_emb");
    Tensor& d_type = grads.at("type_emb");
    Tensor& d_feat_w = grads.at("vis_feat_w");
    Tensor& d_feat_b = grads.at("vis_feat_b");
    Tensor& d_pos_w = grads.at("vis_pos_w");

    for (int s = 0; s < s_count; ++s) {
        const double* de = d_embed.row(s);
        int type = trace.seq.type_ids[s];
        double* dty = d_type.row(type);
        for (int i = 0; i < h; ++i) dty[i] += de[i];
        if (!trace.seq.is_visual[s]) {
            double* dt = d_tok.row(trace.effective_ids[s]);
            double* dpo = d_pos.row(trace.seq.text_positions[s]);
            for (int i = 0; i < h; ++i) {
                dt[i] += de[i];
                dpo[i] += de[i];
            }
        } else {
            const double* feat = trace.vis_features.row(s);
            const double* pv = trace.vis_positions.row(s);
            bool with_pos = trace.position_included[s] != 0;
            for (int i = 0; i < h; ++i) {
                double g = de[i];
                d_feat_b(i) += g;
                double* dfw = d_feat_w.row(i);
                for (int d = 0; d < cfg.feature_dim; ++d) dfw[d] += g * feat[d];
                if (with_pos) {
                    double* dpw = d_pos_w.row(i);
                    for (int d = 0; d < 5; ++d) dpw[d] += g * pv[d];
                }
            }
        }
    }
}

std::vector<double> mlm_logits(const ModelConfig& cfg, const ParamStore& params,
                               const ForwardTrace& trace, int slot) {
    require_text(trace, slot, "MLM");
    const Tensor& tok_emb = params.at("tok_emb");
    const Tensor& b = params.at("mlm_b");
    const double* y = trace.hidden.row(slot);
    std::vector<double> logits(cfg.vocab_size);
    for (int v = 0; v < cfg.vocab_size; ++v) {
        const double* row = tok_emb.row(v);
        double acc = b(v);
        for (int i = 0; i < cfg.hidden_size; ++i) acc += row[i] * y[i];
        logits[v] = acc;
    }
    return logits;
}

void mlm_backward(const ModelConfig& cfg, const ParamStore& params,
                  const ForwardTrace& trace, int slot,
                  const std::vector<double>& d_logits, ParamStore& grads,
                  Tensor& d_hidden) {
    require_text(trace, slot, "MLM");
    const Tensor& tok_emb = params.at("tok_emb");
    Tensor& d_tok = grads.at("tok_emb");
    Tensor& d_b = grads.at("mlm_b");
    const double* y = trace.hidden.row(slot);
    double* dy = d_hidden.row(slot);
    for (int v = 0; v < cfg.vocab_size; ++v) {
        double g = d_logits[v];
        if (g == 0.0) continue;
        d_b(v) += g;
        const double* row = tok_emb.row(v);
        double* drow = d_tok.row(v);
        for (int i = 0; i < cfg.hidden_size; ++i) {
            drow[i] += g * y[i];
            dy[i] += g * row[i];
        }
    }
}

std::vector<double> mrc_logits(const ModelConfig& cfg, const ParamStore& params,
                               const ForwardTrace& trace, int slot) {
    require_visual(trace, slot, "MRC");
    const Tensor& w = params.at("mrc_w");
    const Tensor& b = params.at("mrc_b");
    const double* y = trace.hidden.row(slot);
    std::vector<double> logits(cfg.num_categories);
    for (int c = 0; c < cfg.num_categories; ++c) {
        const double* row = w.row(c);
        double acc = b(c);
        for (int i = 0; i < cfg.hidden_size; ++i) acc += row[i] * y[i];
        logits[c] = acc;
    }
    return logits;
}

void mrc_backward(const ModelConfig& cfg, const ParamStore& params,
                  const ForwardTrace& trace, int slot,
                  const std::vector<double>& d_logits, ParamStore& grads,
                  Tensor& d_hidden) {
    require_visual(trace, slot, "MRC");
    const Tensor& w = params.at("mrc_w");
    Tensor& dw = grads.at("mrc_w");
    Tensor& db = grads.at("mrc_b");
    const double* y = trace.hidden.row(slot);
    double* dy = d_hidden.row(slot);
    for (int c = 0; c < cfg.num_categories; ++c) {
        double g = d_logits[c];
        db(c) += g;
        const double* row = w.row(c);
        double* drow = dw.row(c);
        for (int i = 0; i < cfg.hidden_size; ++i) {
            drow[i] += g * y[i];
            dy[i] += g * row[i];
        }
    }
}

std::vector<double> mrfr_predict(const ModelConfig& cfg, const ParamStore& params,
                                 const ForwardTrace& trace, int slot) {
    require_visual(trace, slot, "MRFR");
    const Tensor& w = params.at("mrfr_w");
    const Tensor& b = params.at("mrfr_b");
    const double* y = trace.hidden.row(slot);
    std::vector<double> out(cfg.feature_dim);
    for (int d = 0; d < cfg.feature_dim; ++d) {
        const double* row = w.row(d);
        double acc = b(d);
        for (int i = 0; i < cfg.hidden_size; ++i) acc += row[i] * y[i];
        out[d] = acc;
    }
    return out;
}

void mrfr_backward(const ModelConfig& cfg, const ParamStore& params,
                   const ForwardTrace& trace, int slot,
                   const std::vector<double>& d_pred, ParamStore& grads,
                   Tensor& d_hidden) {
    require_visual(trace, slot, "MRFR");
    const Tensor& w = params.at("mrfr_w");
    Tensor& dw = grads.at("mrfr_w");
    Tensor& db = grads.at("mrfr_b");
    const double* y = trace.hidden.row(slot);
    double* dy = d_hidden.row(slot);
    for (int d = 0; d < cfg.feature_dim; ++d) {
        double g = d_pred[d];
        db(d) += g;
        const double* row = w.row(d);
        double* drow = dw.row(d);
        for (int i = 0; i < cfg.hidden_size; ++i) {
            drow[i] += g * y[i];
            dy[i] += g * row[i];
        }
    }
}

std::vector<double> opr_predict(const ModelConfig& cfg, const ParamStore& params,
                                const ForwardTrace& trace, int slot) {
    (void)cfg;
    require_visual(trace, slot, "OPR");
    return mlp_head(params, "opr_w1", "opr_b1", "opr_w2", "opr_b2",
                    hidden_row(trace, slot));
}

void opr_backward(const ModelConfig& cfg, const ParamStore& params,
                  const ForwardTrace& trace, int slot,
                  const std::vector<double>& d_pred, ParamStore& grads,
                  Tensor& d_hidden) {
    require_visual(trace, slot, "OPR");
    std::vector<double> dx =
        mlp_head_backward(params, "opr_w1", "opr_b1", "opr_w2", "opr_b2",
                          hidden_row(trace, slot), d_pred, grads);
    double* dy = d_hidden.row(slot);
    for (int i = 0; i < cfg.hidden_size; ++i) dy[i] += dx[i];
}

std::vector<double> src_logits(const ModelConfig& cfg, const ParamStore& params,
                               const ForwardTrace& trace, int slot_i, int slot_j) {
    require_visual(trace, slot_i, "SRC");
    require_visual(trace, slot_j, "SRC");
    if (slot_i == slot_j) {
        throw ValidationError("SRC head requires two distinct visual slots");
    }
    std::vector<double> x = hidden_row(trace, slot_i);
    std::vector<double> xj = hidden_row(trace, slot_j);
    x.insert(x.end(), xj.begin(), xj.end());
    (void)cfg;
    return mlp_head(params, "src_w1", "src_b1", "src_w2", "src_b2", x);
}

void src_backward(const ModelConfig& cfg, const ParamStore& params,
                  const ForwardTrace& trace, int slot_i, int slot_j,
                  const std::vector<double>& d_logits, ParamStore& grads,
                  Tensor& d_hidden) {
    require_visual(trace, slot_i, "SRC");
    require_visual(trace, slot_j, "SRC");
    if (slot_i == slot_j) {
        throw ValidationError("SRC head requires two distinct visual slots");
    }
    std::vector<double> x = hidden_row(trace, slot_i);
    std::vector<double> xj = hidden_row(trace, slot_j);
    x.insert(x.end(), xj.begin(), xj.end());
    std::vector<double> dx = mlp_head_backward(params, "src_w1", "src_b1", "src_w2",
                                               "src_b2", x, d_logits, grads);
    double* dyi = d_hidden.row(slot_i);
    double* dyj = d_hidden.row(slot_j);
    for (int i = 0; i < cfg.hidden_size; ++i) {
        dyi[i] += dx[i];
        dyj[i] += dx[cfg.hidden_size + i];
    }
}

double matching_score(const ModelConfig& cfg, const ParamStore& params,
                      const ForwardTrace& trace) {
    const Tensor& w = params.at("match_w");
    const double* y_cls = trace.hidden.row(0);
    const double* y_img = trace.hidden.row(trace.seq.img_slot);
    double acc = params.at("match_b")(0);
    const double* wr = w.row(0);
    for (int i = 0; i < cfg.hidden_size; ++i) acc += wr[i] * y_cls[i] * y_img[i];
    return acc;
}

void matching_backward(const ModelConfig& cfg, const ParamStore& params,
                       const ForwardTrace& trace, double d_score,
                       ParamStore& grads, Tensor& d_hidden) {
    const Tensor& w = params.at("match_w");
    Tensor& dw = grads.at("match_w");
    grads.at("match_b")(0) += d_score;
    const double* y_cls = trace.hidden.row(0);
    const double* y_img = trace.hidden.row(trace.seq.img_slot);
    double* d_cls = d_hidden.row(0);
    double* d_img = d_hidden.row(trace.seq.img_slot);
    const double* wr = w.row(0);
    double* dwr = dw.row(0);
    for (int i = 0; i < cfg.hidden_size; ++i) {
        dwr[i] += d_score * y_cls[i] * y_img[i];
        d_cls[i] += d_score * wr[i] * y_img[i];
        d_img[i] += d_score * wr[i] * y_cls[i];
    }
}

}  // namespace srm
