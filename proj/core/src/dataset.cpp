#include "srm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace srm {

using nlohmann::json;

void SyntheticSpec::validate() const {
    if (!(image_width > 0.0) || !(image_height > 0.0)) {
        throw ValidationError("spec: image dimensions must be positive");
    }
    if (num_categories < 2) throw ValidationError("spec: need at least 2 categories");
    if (feature_dim < 4) throw ValidationError("spec: feature_dim must be >= 4");
    if (min_objects < 2 || max_objects > 100 || min_objects > max_objects) {
        throw ValidationError("spec: object count range must lie within [2,100]");
    }
    if (max_objects > num_categories) {
        throw ValidationError(
            "spec: max_objects must not exceed num_categories "
            "(scene categories are drawn without replacement)");
    }
    if (feature_noise < 0.0) throw ValidationError("spec: negative feature noise");
    if (ground_truth_fraction < 0.0 || ground_truth_fraction > 1.0) {
        throw ValidationError("spec: ground_truth_fraction outside [0,1]");
    }
    if (confidence_min < 0.0 || confidence_max > 1.0 ||
        confidence_min > confidence_max) {
        throw ValidationError("spec: bad confidence range");
    }
    if (label_smoothing < 0.0 || label_smoothing >= 1.0) {
        throw ValidationError("spec: label_smoothing outside [0,1)");
    }
}

std::string category_name(int category) {
    std::ostringstream os;
    os << "cat" << (category < 10 ? "0" : "") << category;
    return os.str();
}

std::vector<std::vector<double>> category_embeddings(const SyntheticSpec& spec) {
    spec.validate();
    Rng base(spec.seed);
    Rng rng = base.fork(0xCA7E);
    std::vector<std::vector<double>> table(spec.num_categories);
    for (auto& row : table) {
        row.resize(spec.feature_dim);
        for (auto& v : row) v = rng.normal();
    }
    return table;
}

Scene generate_scene(const SyntheticSpec& spec, Rng& rng) {
    spec.validate();
    auto embeddings = category_embeddings(spec);

    Scene scene;
    scene.width = spec.image_width;
    scene.height = spec.image_height;
    int count = rng.uniform_int(spec.min_objects, spec.max_objects);

    std::vector<int> categories(spec.num_categories);
    for (int c = 0; c < spec.num_categories; ++c) categories[c] = c;
    rng.shuffle(categories);
    categories.resize(count);

    for (int i = 0; i < count; ++i) {
        SceneObject obj;
        double w = rng.uniform(0.10, 0.55) * spec.image_width;
        double h = rng.uniform(0.10, 0.55) * spec.image_height;
        double x1 = rng.uniform(0.0, spec.image_width - w);
        double y1 = rng.uniform(0.0, spec.image_height - h);
        obj.box = {x1, y1, x1 + w, y1 + h};

        int cat = categories[i];
        obj.feature.resize(spec.feature_dim);
        for (int d = 0; d < spec.feature_dim; ++d) {
            obj.feature[d] = embeddings[cat][d] + spec.feature_noise * rng.normal();
        }
        obj.category_distribution.assign(
            spec.num_categories, spec.label_smoothing / spec.num_categories);
        obj.category_distribution[cat] +=
            1.0 - spec.label_smoothing;

        obj.is_ground_truth = rng.bernoulli(spec.ground_truth_fraction);
        obj.confidence = obj.is_ground_truth
                             ? 1.0
                             : rng.uniform(spec.confidence_min, spec.confidence_max);
        scene.objects.push_back(std::move(obj));
    }
    return scene;
}

namespace {

const std::array<std::array<const char*, 2>, 4> kDirectionAnswers = {{
    {"left", "above"},
    {"right", "above"},
    {"left", "below"},
    {"right", "below"},
}};

const std::array<std::array<const char*, 2>, 4> kOverlapAnswers = {{
    {"overlap", "yes"},
    {"overlap", "no"},
    {"overlap", "partial"},
    {"overlap", "unknown"},
}};

}  // namespace

Example generate_qa(const SyntheticSpec& spec, const Scene& scene, Rng& rng) {
    if (scene.objects.size() < 2) {
        throw ValidationError("question generation needs at least 2 objects");
    }
    int n = static_cast<int>(scene.objects.size());
    int i = rng.uniform_int(0, n - 1);
    int j = rng.uniform_int(0, n - 2);
    if (j >= i) ++j;

    const std::string ci = category_name(scene.objects[i].category());
    const std::string cj = category_name(scene.objects[j].category());

    Example ex;
    ex.scene = scene;

    bool direction_question = rng.bernoulli(0.5);
    int true_base;  // index into the canonical answer table
    const std::array<std::array<const char*, 2>, 4>* answers;
    if (direction_question) {
        ex.question = {"where", "is", "the", ci, "relative", "to", "the", cj};
        true_base = direction_label(scene.objects[i].box, scene.objects[j].box);
        answers = &kDirectionAnswers;
    } else {
        ex.question = {"do", "the", ci, "and", "the", cj, "overlap"};
        true_base = overlap_flag(scene.objects[i].box, scene.objects[j].box) ? 0 : 1;
        answers = &kOverlapAnswers;
    }

    std::vector<int> perm = {0, 1, 2, 3};
    rng.shuffle(perm);
    for (int slot = 0; slot < 4; ++slot) {
        ex.candidates[slot] = {(*answers)[perm[slot]][0], (*answers)[perm[slot]][1]};
        if (perm[slot] == true_base) ex.correct = slot;
    }
    return ex;
}

std::vector<Example> generate_dataset(const SyntheticSpec& spec, int count,
                                      double val_fraction) {
    spec.validate();
    if (count < 0) throw ValidationError("dataset size must be >= 0");
    if (val_fraction < 0.0 || val_fraction >= 1.0) {
        throw ValidationError("val_fraction outside [0,1)");
    }
    Rng base(spec.seed);
    std::vector<Example> out;
    out.reserve(count);
    int train_count = static_cast<int>(std::llround(count * (1.0 - val_fraction)));
    for (int i = 0; i < count; ++i) {
        Rng rng = base.fork(static_cast<std::uint64_t>(i));
        Scene scene = generate_scene(spec, rng);
        Example ex = generate_qa(spec, scene, rng);
        ex.split = i < train_count ? "train" : "val";
        out.push_back(std::move(ex));
    }
    return out;
}

Vocabulary build_vocabulary(int num_categories) {
    Vocabulary vocab;
    for (const char* w :
         {"where", "is", "the", "relative", "to", "do", "and", "overlap", "left",
          "right", "above", "below", "yes", "no", "partial", "unknown"}) {
        vocab.add(w);
    }
    for (int c = 0; c < num_categories; ++c) vocab.add(category_name(c));
    return vocab;
}

namespace {

json spec_to_json(const SyntheticSpec& s) {
    return json{{"image_width", s.image_width},
                {"image_height", s.image_height},
                {"min_objects", s.min_objects},
                {"max_objects", s.max_objects},
                {"num_categories", s.num_categories},
                {"feature_dim", s.feature_dim},
                {"feature_noise", s.feature_noise},
                {"ground_truth_fraction", s.ground_truth_fraction},
                {"confidence_min", s.confidence_min},
                {"confidence_max", s.confidence_max},
                {"label_smoothing", s.label_smoothing},
                {"seed", s.seed}};
}

SyntheticSpec spec_from_json(const json& j) {
    SyntheticSpec s;
    s.image_width = j.at("image_width").get<double>();
    s.image_height = j.at("image_height").get<double>();
    s.min_objects = j.at("min_objects").get<int>();
    s.max_objects = j.at("max_objects").get<int>();
    s.num_categories = j.at("num_categories").get<int>();
    s.feature_dim = j.at("feature_dim").get<int>();
    s.feature_noise = j.at("feature_noise").get<double>();
    s.ground_truth_fraction = j.at("ground_truth_fraction").get<double>();
    s.confidence_min = j.at("confidence_min").get<double>();
    s.confidence_max = j.at("confidence_max").get<double>();
    s.label_smoothing = j.at("label_smoothing").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    return s;
}

json example_to_json(const Example& ex) {
    json objects = json::array();
    for (const auto& obj : ex.scene.objects) {
        objects.push_back(
            {{"box", {obj.box.x1, obj.box.y1, obj.box.x2, obj.box.y2}},
             {"feature", obj.feature},
             {"category_distribution", obj.category_distribution},
             {"confidence", obj.confidence},
             {"ground_truth", obj.is_ground_truth}});
    }
    return json{{"scene",
                 {{"width", ex.scene.width},
                  {"height", ex.scene.height},
                  {"objects", objects}}},
                {"question", ex.question},
                {"candidates", ex.candidates},
                {"correct", ex.correct},
                {"split", ex.split}};
}

Example example_from_json(const json& j) {
    Example ex;
    const json& scene = j.at("scene");
    ex.scene.width = scene.at("width").get<double>();
    ex.scene.height = scene.at("height").get<double>();
    for (const auto& o : scene.at("objects")) {
        SceneObject obj;
        const auto& b = o.at("box");
        obj.box = {b.at(0).get<double>(), b.at(1).get<double>(),
                   b.at(2).get<double>(), b.at(3).get<double>()};
        obj.feature = o.at("feature").get<std::vector<double>>();
        obj.category_distribution =
            o.at("category_distribution").get<std::vector<double>>();
        obj.confidence = o.at("confidence").get<double>();
        obj.is_ground_truth = o.at("ground_truth").get<bool>();
        ex.scene.objects.push_back(std::move(obj));
    }
    ex.question = j.at("question").get<std::vector<std::string>>();
    const auto& cands = j.at("candidates");
    if (cands.size() != 4) throw ValidationError("record needs exactly 4 candidates");
    for (int k = 0; k < 4; ++k) {
        ex.candidates[k] = cands.at(k).get<std::vector<std::string>>();
    }
    ex.correct = j.at("correct").get<int>();
    ex.split = j.at("split").get<std::string>();
    return ex;
}

}  // namespace

void write_dataset(const std::string& path, const SyntheticSpec& spec,
                   const std::vector<Example>& examples) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open dataset file for writing: " + path);
    json header{{"format", "srm-dataset"}, {"version", 1}, {"spec", spec_to_json(spec)}};
    out << header.dump() << '\n';
    for (const auto& ex : examples) {
        out << example_to_json(ex).dump() << '\n';
    }
    if (!out) throw IoError("write failed for dataset file: " + path);
}

Dataset read_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset file: " + path);
    Dataset ds;
    std::string line;
    int line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ValidationError("dataset line " + std::to_string(line_no) +
                                  ": malformed JSON: " + e.what());
        }
        try {
            if (!have_header) {
                if (j.value("format", "") != "srm-dataset") {
                    throw ValidationError("missing srm-dataset header");
                }
                if (j.at("version").get<int>() != 1) {
                    throw ValidationError("unsupported dataset version");
                }
                ds.spec = spec_from_json(j.at("spec"));
                have_header = true;
            } else {
                ds.examples.push_back(example_from_json(j));
            }
        } catch (const json::exception& e) {
            throw ValidationError("dataset line " + std::to_string(line_no) + ": " +
                                  e.what());
        } catch (const ValidationError& e) {
            throw ValidationError("dataset line " + std::to_string(line_no) + ": " +
                                  e.what());
        }
    }
    if (!have_header) {
        throw ValidationError("dataset file " + path + " has no header line");
    }
    return ds;
}

std::vector<Example> Dataset::split(const std::string& tag) const {
    std::vector<Example> out;
    for (const auto& ex : examples) {
        if (ex.split == tag) out.push_back(ex);
    }
    return out;
}

int consistent_candidate(const Example& example) {
    // Recover the two referenced objects from the category names in the question.
    std::vector<int> referenced;
    for (const auto& word : example.question) {
        if (word.rfind("cat", 0) != 0) continue;
        for (int idx = 0; idx < static_cast<int>(example.scene.objects.size()); ++idx) {
            if (category_name(example.scene.objects[idx].category()) == word) {
                referenced.push_back(idx);
                break;
            }
        }
    }
    if (referenced.size() != 2) return -1;
    const BoundingBox& a = example.scene.objects[referenced[0]].box;
    const BoundingBox& b = example.scene.objects[referenced[1]].box;

    int consistent = -1;
    for (int k = 0; k < 4; ++k) {
        const auto& cand = example.candidates[k];
        if (cand.size() != 2) return -1;
        bool ok = false;
        if (cand[0] == "overlap") {
            int flag = overlap_flag(a, b);
            ok = (flag == 1 && cand[1] == "yes") || (flag == 0 && cand[1] == "no");
        } else {
            int label = direction_label(a, b);
            int lr = cand[0] == "left" ? 0 : (cand[0] == "right" ? 1 : -1);
            int ab = cand[1] == "above" ? 0 : (cand[1] == "below" ? 1 : -1);
            ok = lr >= 0 && ab >= 0 && label == 2 * ab + lr;
        }
        if (ok) {
            if (consistent >= 0) return -1;  // not unique
            consistent = k;
        }
    }
    return consistent;
}

}  // namespace srm
