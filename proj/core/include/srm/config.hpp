#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "srm/dataset.hpp"
#include "srm/model.hpp"

namespace srm {

// Flat key=value configuration, '#' comments, insertion-ordered.
class Config {
public:
    static Config load(const std::string& path);
    static Config parse_text(const std::string& text, const std::string& origin);

    bool has(const std::string& key) const;
    void set(const std::string& key, const std::string& value);

    std::string get_string(const std::string& key, const std::string& fallback) const;
    int get_int(const std::string& key, int fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    const std::vector<std::pair<std::string, std::string>>& items() const {
        return items_;
    }

    // FNV-1a over the canonical "key=value\n" rendering.
    std::uint64_t hash() const;

private:
    const std::string* find(const std::string& key) const;

    std::vector<std::pair<std::string, std::string>> items_;
};

// Keys "model.*" (hidden_size, num_layers, num_heads, ffn_size, num_categories,
// feature_dim, max_text_len, max_visual_len, dropout); vocab_size is set by the
// caller from the vocabulary.
ModelConfig model_config_from(const Config& config);

// Keys "data.*" (image_width, image_height, min_objects, max_objects,
// num_categories, feature_dim, feature_noise, ground_truth_fraction,
// confidence_min, confidence_max, label_smoothing, seed).
SyntheticSpec synthetic_spec_from(const Config& config);

// One manifest JSON per command invocation, written alongside the outputs.
struct RunManifest {
    std::string command;
    std::string config_path;
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, std::string>> inputs;   // role -> path
    std::vector<std::pair<std::string, std::string>> outputs;  // role -> path
    std::string timestamp;  // ISO-8601 UTC
    std::uint64_t config_hash = 0;
};

std::string utc_timestamp();

void write_run_manifest(const std::string& path, const RunManifest& manifest);

}  // namespace srm
