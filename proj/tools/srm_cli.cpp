// srm: command-line driver for the spatial-relations pre-training workbench.
//
// Subcommands: gen-data, pretrain, finetune, eval, grad-check, analyze.
// Exit codes: 0 success, 1 validation/usage error, 2 numeric failure, 3 I/O.

#include <cstdlib>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "srm/analysis.hpp"
#include "srm/checkpoint.hpp"
#include "srm/config.hpp"
#include "srm/dataset.hpp"
#include "srm/gradcheck.hpp"
#include "srm/training.hpp"

namespace {

const char* kValidArms =
    "MLM+MRC, MLM+MRC+MRFR, MLM+MRC+OPR, MLM+MRC+SRC, MLM+MRC+SRC+OPR";

bool log_verbose() {
    const char* v = std::getenv("SRM_LOG");
    if (!v) return false;
    std::string s(v);
    return s == "debug" || s == "info" || s == "1";
}

std::vector<srm::TaskKind> parse_arm_or_usage(const std::string& arm) {
    try {
        return srm::parse_task_arm(arm);
    } catch (const srm::ValidationError& e) {
        throw srm::ValidationError(std::string(e.what()) +
                                   "; valid arms: " + kValidArms);
    }
}

srm::Config load_config(const std::string& path) {
    if (path.empty()) return srm::Config{};
    return srm::Config::load(path);
}

struct LoadedRun {
    srm::Dataset data;
    srm::Vocabulary vocab;
    srm::ModelConfig model;
};

LoadedRun load_run(const srm::Config& cfg, const std::string& data_path) {
    LoadedRun run{srm::read_dataset(data_path), srm::Vocabulary{}, {}};
    run.vocab = srm::build_vocabulary(run.data.spec.num_categories);
    run.model = srm::model_config_from(cfg);
    run.model.num_categories = run.data.spec.num_categories;
    run.model.feature_dim = run.data.spec.feature_dim;
    run.model.vocab_size = run.vocab.size();
    run.model.validate();
    return run;
}

void emit_manifest(const std::string& out_prefix, const std::string& command,
                   const std::string& config_path, std::uint64_t seed,
                   std::uint64_t config_hash,
                   std::vector<std::pair<std::string, std::string>> inputs,
                   std::vector<std::pair<std::string, std::string>> outputs) {
    srm::RunManifest m;
    m.command = command;
    m.config_path = config_path;
    m.seed = seed;
    m.inputs = std::move(inputs);
    m.outputs = std::move(outputs);
    m.timestamp = srm::utc_timestamp();
    m.config_hash = config_hash;
    srm::write_run_manifest(out_prefix + ".run.json", m);
}

int cmd_gen_data(const std::string& config_path, const std::string& out,
                 std::uint64_t seed, bool seed_given, int count,
                 double val_fraction) {
    srm::Config cfg = load_config(config_path);
    srm::SyntheticSpec spec = srm::synthetic_spec_from(cfg);
    if (seed_given) spec.seed = seed;
    spec.validate();
    if (count <= 0) throw srm::ValidationError("example count must be positive");
    std::vector<srm::Example> examples = srm::generate_dataset(spec, count, val_fraction);
    srm::write_dataset(out, spec, examples);

    std::size_t objects = 0;
    std::map<std::string, int> kinds;
    int train = 0;
    for (const auto& ex : examples) {
        objects += ex.scene.objects.size();
        ++kinds[ex.question.front()];  // templates start with a distinct word
        if (ex.split == "train") ++train;
    }
    std::cout << "wrote " << examples.size() << " examples (" << train
              << " train, " << examples.size() - train << " val) to " << out
              << "\n";
    std::cout << "objects total " << objects << ", mean "
              << static_cast<double>(objects) / examples.size() << " per scene\n";
    for (const auto& [word, n] : kinds) {
        std::cout << "question type '" << word << "': " << n << "\n";
    }
    emit_manifest(out, "gen-data", config_path, spec.seed, cfg.hash(), {},
                  {{"dataset", out}});
    return 0;
}

int cmd_pretrain(const std::string& config_path, const std::string& data_path,
                 const std::string& out, const std::string& tasks,
                 std::uint64_t seed, int steps, int batch, double lr,
                 const std::string& metric, bool mrc_literal) {
    srm::Config cfg = load_config(config_path);
    LoadedRun run = load_run(cfg, data_path);

    srm::PretrainOptions opt;
    opt.tasks = parse_arm_or_usage(tasks);
    opt.total_steps = steps > 0 ? steps : cfg.get_int("train.total_steps", 13000);
    opt.batch_size = batch > 0 ? batch : cfg.get_int("train.batch_size", 16);
    opt.peak_lr = lr > 0 ? lr : cfg.get_double("train.peak_lr", 3e-4);
    opt.metric = srm::metric_from_name(
        metric.empty() ? cfg.get_string("train.src_metric", "iou10") : metric);
    opt.seed = seed;
    opt.mrc_literal_kl = mrc_literal || cfg.get_bool("train.mrc_literal_kl", false);
    opt.verbose = log_verbose();

    srm::Rng init_rng = srm::Rng(seed).fork(0x1A17);
    srm::ParamStore params = srm::init_parameters(run.model, init_rng);
    std::vector<srm::Example> train = run.data.split("train");
    srm::PretrainResult result =
        srm::pretrain(run.model, params, run.vocab, train, opt);

    srm::save_checkpoint(run.model, params, out);
    srm::write_loss_csv(out + "_loss.csv", result.log);
    std::cout << "pretrained " << srm::task_arm_name(opt.tasks) << " for "
              << opt.total_steps << " steps (" << result.skipped_steps
              << " skipped), checkpoint " << out << ".{manifest,bin}\n";
    emit_manifest(out, "pretrain", config_path, seed, cfg.hash(),
                  {{"dataset", data_path}},
                  {{"checkpoint", out}, {"loss_csv", out + "_loss.csv"}});
    return 0;
}

int cmd_finetune(const std::string& config_path, const std::string& data_path,
                 const std::string& checkpoint, const std::string& out,
                 std::uint64_t seed, int steps, int batch, double lr) {
    srm::Config cfg = load_config(config_path);
    auto [model, params] = srm::load_checkpoint(checkpoint);
    srm::Dataset data = srm::read_dataset(data_path);
    srm::Vocabulary vocab = srm::build_vocabulary(data.spec.num_categories);
    if (model.vocab_size != vocab.size()) {
        throw srm::ValidationError("checkpoint vocabulary size does not match dataset");
    }

    srm::FinetuneOptions opt;
    opt.steps = steps > 0 ? steps : cfg.get_int("finetune.steps", 800);
    opt.batch_size = batch > 0 ? batch : cfg.get_int("finetune.batch_size", 16);
    opt.peak_lr = lr > 0 ? lr : cfg.get_double("finetune.peak_lr", 1e-4);
    opt.seed = seed;
    opt.verbose = log_verbose();

    srm::FinetuneResult result = srm::finetune(
        model, params, vocab, data.split("train"), data.split("val"), opt);
    srm::save_checkpoint(model, params, out);
    srm::write_loss_csv(out + "_loss.csv", result.log);
    std::cout << "fine-tuned for " << opt.steps << " steps; val accuracy "
              << result.val_accuracy << " ("
              << static_cast<int>(result.val_accuracy * result.val_count + 0.5)
              << "/" << result.val_count << ")\n";
    emit_manifest(out, "finetune", config_path, seed, cfg.hash(),
                  {{"dataset", data_path}, {"checkpoint_in", checkpoint}},
                  {{"checkpoint", out}, {"loss_csv", out + "_loss.csv"}});
    return 0;
}

int cmd_eval(const std::string& data_path, const std::string& checkpoint,
             const std::string& split) {
    auto [model, params] = srm::load_checkpoint(checkpoint);
    srm::Dataset data = srm::read_dataset(data_path);
    srm::Vocabulary vocab = srm::build_vocabulary(data.spec.num_categories);
    if (model.vocab_size != vocab.size()) {
        throw srm::ValidationError("checkpoint vocabulary size does not match dataset");
    }
    std::vector<srm::Example> examples = data.split(split);
    double acc = srm::evaluate(model, params, vocab, examples);
    std::cout << "accuracy " << acc << " ("
              << static_cast<int>(acc * examples.size() + 0.5) << "/"
              << examples.size() << ") on split " << split << "\n";
    return 0;
}

int cmd_grad_check(std::uint64_t seed, double tolerance) {
    std::vector<srm::GradCheckResult> results =
        srm::run_gradient_checks(seed, tolerance);
    for (const auto& r : results) {
        std::cout << (r.passed ? "PASS" : "FAIL") << " " << r.name
                  << " max_rel_error " << r.max_rel_error << " over "
                  << r.coords_checked << " coordinates\n";
    }
    if (!srm::all_passed(results)) {
        std::cerr << "gradient verification failed\n";
        return 2;
    }
    return 0;
}

int cmd_analyze(const std::string& config_path, const std::string& data_path,
                const std::string& checkpoint, const std::string& compare,
                const std::string& out, std::uint64_t seed, int samples,
                std::vector<int> layers, const std::string& label,
                const std::string& compare_label) {
    srm::Config cfg = load_config(config_path);
    srm::Dataset data = srm::read_dataset(data_path);
    srm::Vocabulary vocab = srm::build_vocabulary(data.spec.num_categories);

    // fixed-seed subsample shared by both checkpoints
    std::vector<srm::Example> pool = data.examples;
    srm::Rng rng(seed);
    rng.shuffle(pool);
    if (static_cast<int>(pool.size()) > samples) pool.resize(samples);

    auto analyze_one = [&](const std::string& path) {
        auto [model, params] = srm::load_checkpoint(path);
        if (model.vocab_size != vocab.size()) {
            throw srm::ValidationError(
                "checkpoint vocabulary size does not match dataset: " + path);
        }
        return std::pair{model, std::move(params)};
    };

    auto [model_a, params_a] = analyze_one(checkpoint);
    srm::CorrelationReport rep_a =
        srm::correlation_report(model_a, params_a, vocab, pool);
    std::vector<srm::CorrelationRow> rows = {{"a", label, rep_a}};

    if (!compare.empty()) {
        auto [model_b, params_b] = analyze_one(compare);
        srm::CorrelationReport rep_b =
            srm::correlation_report(model_b, params_b, vocab, pool);
        rows.push_back({"b", compare_label, rep_b});
        srm::CorrelationReport delta = rep_a;
        delta.input_corr -= rep_b.input_corr;
        delta.output_corr -= rep_b.output_corr;
        delta.input_corr_per_dim -= rep_b.input_corr_per_dim;
        delta.output_corr_per_dim -= rep_b.output_corr_per_dim;
        delta.objects_used = rep_a.objects_used;
        rows.push_back({"delta", label + "-" + compare_label, delta});
    }
    srm::write_correlation_csv(out + "_correlation.csv", rows);

    if (layers.empty()) layers = {model_a.num_layers - 1};
    std::vector<srm::AttentionEntry> entries;
    int n_attn = std::min<int>(4, static_cast<int>(pool.size()));
    for (int i = 0; i < n_attn; ++i) {
        auto per_example = srm::attention_report(model_a, params_a, vocab, pool[i],
                                                 "sample-" + std::to_string(i),
                                                 layers);
        entries.insert(entries.end(), per_example.begin(), per_example.end());
    }
    srm::write_attention_json(out + "_attention.json", entries);

    for (const auto& row : rows) {
        std::cout << row.run_id << " (" << row.task_set << "): input_corr "
                  << row.report.input_corr << ", output_corr "
                  << row.report.output_corr << " over " << row.report.n_samples
                  << " samples\n";
    }
    std::vector<std::pair<std::string, std::string>> inputs = {
        {"dataset", data_path}, {"checkpoint", checkpoint}};
    if (!compare.empty()) inputs.emplace_back("compare_checkpoint", compare);
    emit_manifest(out, "analyze", config_path, seed, cfg.hash(), std::move(inputs),
                  {{"correlation_csv", out + "_correlation.csv"},
                   {"attention_json", out + "_attention.json"}});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spatial-relations vision-language pre-training workbench"};
    app.require_subcommand(1);

    std::string config_path, data_path, out, checkpoint, compare_checkpoint;
    std::string tasks = "MLM+MRC+SRC+OPR";
    std::string metric, split = "val";
    std::string label = "a", compare_label = "b";
    std::uint64_t seed = 0;
    int steps = 0, batch = 0, count = 2000, samples = 100;
    double lr = 0.0, val_fraction = 0.1, tolerance = 1e-4;
    bool mrc_literal = false;
    std::vector<int> layers;

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic scene/QA dataset");
    gen->add_option("--config", config_path, "key=value config file");
    gen->add_option("--out", out, "output dataset path (JSON lines)")->required();
    auto* gen_seed = gen->add_option("--seed", seed, "generation seed");
    gen->add_option("--count", count, "number of examples");
    gen->add_option("--val-fraction", val_fraction, "validation fraction");

    auto* pre = app.add_subcommand("pretrain", "Run the alternating pre-training schedule");
    pre->add_option("--config", config_path, "key=value config file");
    pre->add_option("--data", data_path, "dataset path")->required();
    pre->add_option("--out", out, "checkpoint prefix")->required();
    pre->add_option("--tasks", tasks,
                    "task arm, e.g. MLM+MRC+SRC+OPR; dropped tasks shorten the "
                    "cycle, remaining tasks keep their per-cycle slot counts");
    pre->add_option("--seed", seed, "training seed");
    pre->add_option("--steps", steps, "total steps (overrides config)");
    pre->add_option("--batch", batch, "batch size (overrides config)");
    pre->add_option("--lr", lr, "peak learning rate (overrides config)");
    pre->add_option("--metric", metric,
                    "pair relation metric: direction4|overlap|iou|iou10|giou10");
    pre->add_flag("--mrc-literal-kl", mrc_literal,
                  "use the literal KL(prediction||target) direction");

    auto* fin = app.add_subcommand("finetune", "Fine-tune the 4-way answer matcher");
    fin->add_option("--config", config_path, "key=value config file");
    fin->add_option("--data", data_path, "dataset path")->required();
    fin->add_option("--checkpoint", checkpoint, "input checkpoint prefix")->required();
    fin->add_option("--out", out, "output checkpoint prefix")->required();
    fin->add_option("--seed", seed, "training seed");
    fin->add_option("--steps", steps, "fine-tuning steps");
    fin->add_option("--batch", batch, "batch size");
    fin->add_option("--lr", lr, "peak learning rate");

    auto* ev = app.add_subcommand("eval", "Evaluate multiple-choice accuracy");
    ev->add_option("--data", data_path, "dataset path")->required();
    ev->add_option("--checkpoint", checkpoint, "checkpoint prefix")->required();
    ev->add_option("--split", split, "dataset split (train|val)");

    auto* gc = app.add_subcommand("grad-check",
                                  "Finite-difference verification of all heads");
    gc->add_option("--seed", seed, "fixture seed");
    gc->add_option("--tol", tolerance, "relative error tolerance");

    auto* an = app.add_subcommand("analyze",
                                  "Correlation study and attention extraction");
    an->add_option("--config", config_path, "key=value config file");
    an->add_option("--data", data_path, "dataset path")->required();
    an->add_option("--checkpoint", checkpoint, "checkpoint prefix")->required();
    an->add_option("--compare-checkpoint", compare_checkpoint,
                   "second checkpoint for a paired comparison row");
    an->add_option("--out", out, "output prefix")->required();
    an->add_option("--seed", seed, "sampling seed");
    an->add_option("--samples", samples, "number of sampled examples");
    an->add_option("--layers", layers, "layer indices (default: last layer)");
    an->add_option("--tasks", label, "task-set label for the first checkpoint");
    an->add_option("--compare-tasks", compare_label,
                   "task-set label for the comparison checkpoint");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) {
            return cmd_gen_data(config_path, out, seed, gen_seed->count() > 0,
                                count, val_fraction);
        }
        if (pre->parsed()) {
            return cmd_pretrain(config_path, data_path, out, tasks, seed, steps,
                                batch, lr, metric, mrc_literal);
        }
        if (fin->parsed()) {
            return cmd_finetune(config_path, data_path, checkpoint, out, seed,
                                steps, batch, lr);
        }
        if (ev->parsed()) return cmd_eval(data_path, checkpoint, split);
        if (gc->parsed()) return cmd_grad_check(seed, tolerance);
        if (an->parsed()) {
            return cmd_analyze(config_path, data_path, checkpoint,
                               compare_checkpoint, out, seed, samples, layers,
                               label, compare_label);
        }
    } catch (const srm::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const srm::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 2;
    } catch (const srm::IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return 3;
    }
    return 1;
}
