#include "srm/analysis.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

namespace srm {

std::optional<double> pearson(const std::vector<double>& a,
                              const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) {
        throw ValidationError("pearson needs two equal-length vectors (n >= 2)");
    }
    double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double da = a[i] - ma;
        double db = b[i] - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if (va == 0.0 || vb == 0.0) return std::nullopt;
    return cov / std::sqrt(va * vb);
}

CorrelationReport correlation_report(const ModelConfig& cfg,
                                     const ParamStore& params,
                                     const Vocabulary& vocab,
                                     const std::vector<Example>& examples) {
    if (examples.size() < 2) {
        throw ValidationError("correlation report needs at least 2 examples");
    }
    const Tensor& w_pos = params.at("vis_pos_w");
    SequenceLimits limits{cfg.max_text_len, cfg.max_visual_len};
    int H = cfg.hidden_size;

    CorrelationReport rep;
    rep.n_samples = static_cast<int>(examples.size());
    double input_sum = 0.0, output_sum = 0.0;
    // per-object vectors for the per-dimension alternates
    std::vector<std::vector<double>> pos_vecs, in_vecs, out_vecs;

    for (const Example& ex : examples) {
        TokenSequence seq = encode_sequence(vocab, vocab.tokenize(ex.question),
                                            vocab.tokenize(ex.candidates[ex.correct]),
                                            ex.scene, limits);
        ForwardTrace trace = forward(cfg, params, seq, ex.scene);
        std::vector<double> cls(trace.hidden.row(0), trace.hidden.row(0) + H);
        for (int s : seq.visual_slots()) {
            std::vector<double> pos(H, 0.0);
            for (int h = 0; h < H; ++h) {
                for (int k = 0; k < 5; ++k) {
                    pos[h] += w_pos(h, k) * trace.vis_positions(s, k);
                }
            }
            std::vector<double> in(trace.x0.row(s), trace.x0.row(s) + H);
            auto ci = pearson(pos, in);
            auto co = pearson(pos, cls);
            if (!ci || !co) {
                ++rep.objects_skipped;
                continue;
            }
            input_sum += *ci;
            output_sum += *co;
            ++rep.objects_used;
            pos_vecs.push_back(std::move(pos));
            in_vecs.push_back(std::move(in));
            out_vecs.push_back(cls);
        }
    }
    if (rep.objects_used == 0) {
        throw ValidationError("all objects skipped in correlation report");
    }
    rep.input_corr = input_sum / rep.objects_used;
    rep.output_corr = output_sum / rep.objects_used;

    if (rep.objects_used >= 2) {
        double in_dim_sum = 0.0, out_dim_sum = 0.0;
        int in_dims = 0, out_dims = 0;
        std::vector<double> pcol(pos_vecs.size()), icol(pos_vecs.size()),
            ocol(pos_vecs.size());
        for (int h = 0; h < H; ++h) {
            for (std::size_t o = 0; o < pos_vecs.size(); ++o) {
                pcol[o] = pos_vecs[o][h];
                icol[o] = in_vecs[o][h];
                ocol[o] = out_vecs[o][h];
            }
            if (auto c = pearson(pcol, icol)) {
                in_dim_sum += *c;
                ++in_dims;
            }
            if (auto c = pearson(pcol, ocol)) {
                out_dim_sum += *c;
                ++out_dims;
            }
        }
        rep.input_corr_per_dim = in_dims > 0 ? in_dim_sum / in_dims : 0.0;
        rep.output_corr_per_dim = out_dims > 0 ? out_dim_sum / out_dims : 0.0;
    }
    return rep;
}

void write_correlation_csv(const std::string& path,
                           const std::vector<CorrelationRow>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open correlation CSV for writing: " + path);
    out.precision(17);
    out << "run_id,task_set,n_samples,input_corr,output_corr,"
           "input_corr_per_dim,output_corr_per_dim\n";
    for (const auto& row : rows) {
        out << row.run_id << ',' << row.task_set << ',' << row.report.n_samples
            << ',' << row.report.input_corr << ',' << row.report.output_corr << ','
            << row.report.input_corr_per_dim << ','
            << row.report.output_corr_per_dim << '\n';
    }
    if (!out) throw IoError("write failed for correlation CSV: " + path);
}

std::vector<AttentionEntry> attention_report(const ModelConfig& cfg,
                                             const ParamStore& params,
                                             const Vocabulary& vocab,
                                             const Example& ex,
                                             const std::string& example_id,
                                             const std::vector<int>& layers) {
    for (int l : layers) {
        if (l < 0 || l >= cfg.num_layers) {
            throw ValidationError("attention layer index out of range: " +
                                  std::to_string(l));
        }
    }
    SequenceLimits limits{cfg.max_text_len, cfg.max_visual_len};
    TokenSequence seq = encode_sequence(vocab, vocab.tokenize(ex.question),
                                        vocab.tokenize(ex.candidates[ex.correct]),
                                        ex.scene, limits);
    ForwardTrace trace = forward(cfg, params, seq, ex.scene);

    std::vector<int> text_slots;
    for (int s = 0; s < seq.length(); ++s) {
        if (!seq.is_visual[s] && seq.attend[s]) text_slots.push_back(s);
    }
    std::vector<int> visual_slots = seq.visual_slots();

    std::vector<std::string> tokens;
    for (int s : text_slots) tokens.push_back(vocab.word(seq.ids[s]));
    std::vector<std::string> objects;
    for (int s : visual_slots) {
        objects.push_back(category_name(ex.scene.objects[seq.object_index[s]].category()));
    }

    auto extract = [&](const Tensor& attn) {
        std::vector<std::vector<double>> matrix;
        for (int t : text_slots) {
            std::vector<double> row;
            for (int v : visual_slots) row.push_back(attn(t, v));
            matrix.push_back(std::move(row));
        }
        return matrix;
    };

    std::vector<AttentionEntry> entries;
    for (int l : layers) {
        const LayerTrace& lt = trace.layers[l];
        Tensor avg(seq.length(), seq.length());
        for (int h = 0; h < cfg.num_heads; ++h) {
            entries.push_back({example_id, tokens, objects, l, h, extract(lt.attn[h])});
            for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += lt.attn[h][i];
        }
        for (std::size_t i = 0; i < avg.size(); ++i) avg[i] /= cfg.num_heads;
        entries.push_back({example_id, tokens, objects, l, -1, extract(avg)});
    }
    return entries;
}

void write_attention_json(const std::string& path,
                          const std::vector<AttentionEntry>& entries) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : entries) {
        arr.push_back({{"example_id", e.example_id},
                       {"tokens", e.tokens},
                       {"objects", e.objects},
                       {"layer", e.layer},
                       {"head", e.head},
                       {"matrix", e.matrix}});
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot open attention JSON for writing: " + path);
    out << arr.dump(2) << '\n';
    if (!out) throw IoError("write failed for attention JSON: " + path);
}

}  // namespace srm
