#include "srm/config.hpp"

#include <cerrno>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace srm {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

Config Config::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_text(buf.str(), path);
}

Config Config::parse_text(const std::string& text, const std::string& origin) {
    Config cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ValidationError(origin + ":" + std::to_string(line_no) +
                                  ": expected key=value");
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ValidationError(origin + ":" + std::to_string(line_no) +
                                  ": empty key");
        }
        cfg.set(key, value);
    }
    return cfg;
}

bool Config::has(const std::string& key) const { return find(key) != nullptr; }

void Config::set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : items_) {
        if (k == key) {
            v = value;
            return;
        }
    }
    items_.emplace_back(key, value);
}

const std::string* Config::find(const std::string& key) const {
    for (const auto& [k, v] : items_) {
        if (k == key) return &v;
    }
    return nullptr;
}

std::string Config::get_string(const std::string& key,
                               const std::string& fallback) const {
    const std::string* v = find(key);
    return v ? *v : fallback;
}

int Config::get_int(const std::string& key, int fallback) const {
    const std::string* v = find(key);
    if (!v) return fallback;
    try {
        std::size_t pos = 0;
        int out = std::stoi(*v, &pos);
        if (pos != v->size()) throw std::invalid_argument("trailing characters");
        return out;
    } catch (const std::exception&) {
        throw ValidationError("config key " + key + ": not an integer: " + *v);
    }
}

double Config::get_double(const std::string& key, double fallback) const {
    const std::string* v = find(key);
    if (!v) return fallback;
    try {
        std::size_t pos = 0;
        double out = std::stod(*v, &pos);
        if (pos != v->size()) throw std::invalid_argument("trailing characters");
        return out;
    } catch (const std::exception&) {
        throw ValidationError("config key " + key + ": not a number: " + *v);
    }
}

std::uint64_t Config::get_u64(const std::string& key,
                              std::uint64_t fallback) const {
    const std::string* v = find(key);
    if (!v) return fallback;
    try {
        std::size_t pos = 0;
        unsigned long long out = std::stoull(*v, &pos);
        if (pos != v->size()) throw std::invalid_argument("trailing characters");
        return static_cast<std::uint64_t>(out);
    } catch (const std::exception&) {
        throw ValidationError("config key " + key +
                              ": not an unsigned integer: " + *v);
    }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    const std::string* v = find(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1") return true;
    if (*v == "false" || *v == "0") return false;
    throw ValidationError("config key " + key + ": not a boolean: " + *v);
}

std::uint64_t Config::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& [k, v] : items_) {
        mix(k);
        mix("=");
        mix(v);
        mix("\n");
    }
    return h;
}

ModelConfig model_config_from(const Config& c) {
    ModelConfig m;
    m.hidden_size = c.get_int("model.hidden_size", m.hidden_size);
    m.num_layers = c.get_int("model.num_layers", m.num_layers);
    m.num_heads = c.get_int("model.num_heads", m.num_heads);
    m.ffn_size = c.get_int("model.ffn_size", m.ffn_size);
    m.num_categories = c.get_int("model.num_categories", m.num_categories);
    m.feature_dim = c.get_int("model.feature_dim", m.feature_dim);
    m.max_text_len = c.get_int("model.max_text_len", m.max_text_len);
    m.max_visual_len = c.get_int("model.max_visual_len", m.max_visual_len);
    m.dropout = c.get_double("model.dropout", m.dropout);
    return m;
}

SyntheticSpec synthetic_spec_from(const Config& c) {
    SyntheticSpec s;
    s.image_width = c.get_double("data.image_width", s.image_width);
    s.image_height = c.get_double("data.image_height", s.image_height);
    s.min_objects = c.get_int("data.min_objects", s.min_objects);
    s.max_objects = c.get_int("data.max_objects", s.max_objects);
    s.num_categories = c.get_int("data.num_categories", s.num_categories);
    s.feature_dim = c.get_int("data.feature_dim", s.feature_dim);
    s.feature_noise = c.get_double("data.feature_noise", s.feature_noise);
    s.ground_truth_fraction =
        c.get_double("data.ground_truth_fraction", s.ground_truth_fraction);
    s.confidence_min = c.get_double("data.confidence_min", s.confidence_min);
    s.confidence_max = c.get_double("data.confidence_max", s.confidence_max);
    s.label_smoothing = c.get_double("data.label_smoothing", s.label_smoothing);
    s.seed = c.get_u64("data.seed", s.seed);
    return s;
}

std::string utc_timestamp() {
    std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_run_manifest(const std::string& path, const RunManifest& m) {
    nlohmann::json inputs = nlohmann::json::object();
    for (const auto& [role, p] : m.inputs) inputs[role] = p;
    nlohmann::json outputs = nlohmann::json::object();
    for (const auto& [role, p] : m.outputs) outputs[role] = p;
    nlohmann::json j = {{"command", m.command},
                        {"config_path", m.config_path},
                        {"seed", m.seed},
                        {"inputs", inputs},
                        {"outputs", outputs},
                        {"timestamp", m.timestamp},
                        {"config_hash", m.config_hash}};
    std::ofstream out(path);
    if (!out) throw IoError("cannot open run manifest for writing: " + path);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed for run manifest: " + path);
}

}  // namespace srm
