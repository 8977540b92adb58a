#include "srm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace srm {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian float64");

void write_manifest(const ModelConfig& cfg, const ParamStore& params,
                    const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open checkpoint manifest for writing: " + path);
    out.precision(17);
    out << "format srm-checkpoint\n";
    out << "version 1\n";
    out << "dtype float64-le\n";
    out << "config.hidden_size " << cfg.hidden_size << '\n';
    out << "config.num_layers " << cfg.num_layers << '\n';
    out << "config.num_heads " << cfg.num_heads << '\n';
    out << "config.ffn_size " << cfg.ffn_size << '\n';
    out << "config.vocab_size " << cfg.vocab_size << '\n';
    out << "config.num_categories " << cfg.num_categories << '\n';
    out << "config.feature_dim " << cfg.feature_dim << '\n';
    out << "config.max_text_len " << cfg.max_text_len << '\n';
    out << "config.max_visual_len " << cfg.max_visual_len << '\n';
    out << "config.dropout " << cfg.dropout << '\n';
    for (const auto& e : params.entries()) {
        out << "param " << e.name;
        for (int d : e.tensor.shape()) out << ' ' << d;
        out << '\n';
    }
    if (!out) throw IoError("write failed for checkpoint manifest: " + path);
}

struct Manifest {
    ModelConfig config;
    std::vector<std::pair<std::string, std::vector<int>>> params;
};

Manifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open checkpoint manifest: " + path);
    Manifest m;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream is(line);
        std::string key;
        is >> key;
        auto fail = [&](const std::string& why) {
            throw ValidationError("checkpoint manifest line " +
                                  std::to_string(line_no) + ": " + why);
        };
        if (key == "format") {
            std::string v;
            is >> v;
            if (v != "srm-checkpoint") fail("unknown format " + v);
        } else if (key == "version") {
            int v;
            is >> v;
            if (v != 1) fail("unsupported version");
        } else if (key == "dtype") {
            std::string v;
            is >> v;
            if (v != "float64-le") fail("unsupported dtype " + v);
        } else if (key == "param") {
            std::string name;
            is >> name;
            std::vector<int> shape;
            int d;
            while (is >> d) shape.push_back(d);
            if (name.empty() || shape.empty() || shape.size() > 2) {
                fail("bad param entry");
            }
            m.params.emplace_back(name, shape);
        } else if (key.rfind("config.", 0) == 0) {
            std::string field = key.substr(7);
            if (field == "dropout") {
                is >> m.config.dropout;
            } else {
                int v;
                is >> v;
                if (field == "hidden_size") m.config.hidden_size = v;
                else if (field == "num_layers") m.config.num_layers = v;
                else if (field == "num_heads") m.config.num_heads = v;
                else if (field == "ffn_size") m.config.ffn_size = v;
                else if (field == "vocab_size") m.config.vocab_size = v;
                else if (field == "num_categories") m.config.num_categories = v;
                else if (field == "feature_dim") m.config.feature_dim = v;
                else if (field == "max_text_len") m.config.max_text_len = v;
                else if (field == "max_visual_len") m.config.max_visual_len = v;
                else fail("unknown config field " + field);
            }
        } else {
            fail("unknown key " + key);
        }
    }
    return m;
}

}  // namespace

void save_checkpoint(const ModelConfig& cfg, const ParamStore& params,
                     const std::string& prefix) {
    write_manifest(cfg, params, prefix + ".manifest");
    std::ofstream out(prefix + ".bin", std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint blob for writing: " + prefix + ".bin");
    for (const auto& e : params.entries()) {
        out.write(reinterpret_cast<const char*>(e.tensor.data()),
                  static_cast<std::streamsize>(e.tensor.size() * sizeof(double)));
    }
    if (!out) throw IoError("write failed for checkpoint blob: " + prefix + ".bin");
}

std::pair<ModelConfig, ParamStore> load_checkpoint(const std::string& prefix) {
    Manifest m = read_manifest(prefix + ".manifest");
    ParamStore params;
    for (const auto& [name, shape] : m.params) {
        if (shape.size() == 1) {
            params.add(name, shape[0]);
        } else {
            params.add(name, shape[0], shape[1]);
        }
    }
    std::ifstream in(prefix + ".bin", std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint blob: " + prefix + ".bin");
    for (auto& e : params.entries()) {
        in.read(reinterpret_cast<char*>(e.tensor.data()),
                static_cast<std::streamsize>(e.tensor.size() * sizeof(double)));
        if (!in) {
            throw IoError("checkpoint blob truncated while reading " + e.name);
        }
    }
    return {m.config, std::move(params)};
}

void load_checkpoint_into(ParamStore& params, const std::string& prefix) {
    auto [cfg, loaded] = load_checkpoint(prefix);
    (void)cfg;
    if (loaded.entries().size() != params.entries().size()) {
        throw ValidationError("checkpoint parameter count mismatch");
    }
    for (std::size_t i = 0; i < params.entries().size(); ++i) {
        auto& dst = params.entries()[i];
        const auto& src = loaded.entries()[i];
        if (dst.name != src.name || !dst.tensor.same_shape(src.tensor)) {
            throw ValidationError("checkpoint shape mismatch for parameter " +
                                  dst.name);
        }
        dst.tensor = src.tensor;
    }
}

}  // namespace srm
