#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "srm/relation_graph.hpp"
#include "srm/rng.hpp"
#include "srm/text.hpp"

namespace srm {

// Generation recipe for the synthetic scene/question corpus.
struct SyntheticSpec {
    double image_width = 256.0;
    double image_height = 256.0;
    int min_objects = 2;
    int max_objects = 4;
    int num_categories = 16;
    int feature_dim = 16;
    double feature_noise = 0.1;       // sigma of the Gaussian added to category embeddings
    double ground_truth_fraction = 0.5;
    double confidence_min = 0.2;      // detector-like objects: Uniform(min, max)
    double confidence_max = 1.0;
    double label_smoothing = 0.05;
    std::uint64_t seed = 0;

    void validate() const;
};

// One VCR-style multiple choice item over a synthetic scene.
struct Example {
    Scene scene;
    std::vector<std::string> question;
    std::array<std::vector<std::string>, 4> candidates;
    int correct = 0;
    std::string split = "train";
};

std::string category_name(int category);

// Fixed per-spec category embedding table (num_categories x feature_dim),
// derived only from the spec seed. Features carry category identity but no
// position signal.
std::vector<std::vector<double>> category_embeddings(const SyntheticSpec& spec);

Scene generate_scene(const SyntheticSpec& spec, Rng& rng);

// A direction or overlap question about two objects of distinct categories,
// with exactly one geometry-consistent candidate.
Example generate_qa(const SyntheticSpec& spec, const Scene& scene, Rng& rng);

std::vector<Example> generate_dataset(const SyntheticSpec& spec, int count,
                                      double val_fraction);

// Vocabulary covering the question templates, candidate answers, and the
// category names of the spec.
Vocabulary build_vocabulary(int num_categories);

// JSON lines, version header first. Round-trips field-for-field.
void write_dataset(const std::string& path, const SyntheticSpec& spec,
                   const std::vector<Example>& examples);
struct Dataset {
    SyntheticSpec spec;
    std::vector<Example> examples;

    std::vector<Example> split(const std::string& tag) const;
};
Dataset read_dataset(const std::string& path);

// Re-derives the relation stated by each candidate from the scene geometry;
// returns the index of the unique consistent candidate, or -1.
int consistent_candidate(const Example& example);

}  // namespace srm
