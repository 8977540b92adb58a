#include <cstdio>
#include <cstring>

#include "doctest.h"
#include "srm/checkpoint.hpp"
#include "srm/rng.hpp"

using namespace srm;

namespace {

ModelConfig small_config() {
    ModelConfig cfg;
    cfg.hidden_size = 16;
    cfg.num_layers = 2;
    cfg.num_heads = 2;
    cfg.ffn_size = 32;
    cfg.vocab_size = 24;
    cfg.num_categories = 6;
    cfg.feature_dim = 8;
    cfg.dropout = 0.1 + 1e-13;  // precision must survive the text manifest
    return cfg;
}

void remove_checkpoint(const std::string& prefix) {
    std::remove((prefix + ".manifest").c_str());
    std::remove((prefix + ".bin").c_str());
}

}  // namespace

TEST_CASE("checkpoints round-trip bit-exactly") {
    ModelConfig cfg = small_config();
    Rng rng(404);
    ParamStore params = init_parameters(cfg, rng);
    // plant awkward values that would not survive a lossy text encoding
    params.entries()[0].tensor[0] = 0.1 + 0.2;
    params.entries()[0].tensor[1] = -1e-300;
    params.entries()[0].tensor[2] = 12345.678901234567;

    std::string prefix = "ckpt_roundtrip";
    save_checkpoint(cfg, params, prefix);
    auto [loaded_cfg, loaded] = load_checkpoint(prefix);

    CHECK(loaded_cfg.hidden_size == cfg.hidden_size);
    CHECK(loaded_cfg.num_layers == cfg.num_layers);
    CHECK(loaded_cfg.num_heads == cfg.num_heads);
    CHECK(loaded_cfg.ffn_size == cfg.ffn_size);
    CHECK(loaded_cfg.vocab_size == cfg.vocab_size);
    CHECK(loaded_cfg.num_categories == cfg.num_categories);
    CHECK(loaded_cfg.feature_dim == cfg.feature_dim);
    CHECK(loaded_cfg.max_text_len == cfg.max_text_len);
    CHECK(loaded_cfg.max_visual_len == cfg.max_visual_len);
    CHECK(loaded_cfg.dropout == cfg.dropout);  // exact, not approximate

    REQUIRE(loaded.entries().size() == params.entries().size());
    for (std::size_t i = 0; i < params.entries().size(); ++i) {
        const auto& a = params.entries()[i];
        const auto& b = loaded.entries()[i];
        CHECK(a.name == b.name);
        REQUIRE(a.tensor.shape() == b.tensor.shape());
        CHECK(std::memcmp(a.tensor.data(), b.tensor.data(),
                          a.tensor.size() * sizeof(double)) == 0);
    }
    remove_checkpoint(prefix);
}

TEST_CASE("loading into existing parameters requires matching shapes") {
    ModelConfig cfg = small_config();
    Rng rng(405);
    ParamStore params = init_parameters(cfg, rng);
    std::string prefix = "ckpt_into";
    save_checkpoint(cfg, params, prefix);

    Rng rng2(406);
    ParamStore target = init_parameters(cfg, rng2);
    load_checkpoint_into(target, prefix);
    for (std::size_t i = 0; i < params.entries().size(); ++i) {
        CHECK(std::memcmp(params.entries()[i].tensor.data(),
                          target.entries()[i].tensor.data(),
                          params.entries()[i].tensor.size() * sizeof(double)) == 0);
    }

    ModelConfig bigger = cfg;
    bigger.hidden_size = 32;
    bigger.num_heads = 4;
    Rng rng3(407);
    ParamStore mismatched = init_parameters(bigger, rng3);
    CHECK_THROWS_WITH_AS(load_checkpoint_into(mismatched, prefix),
                         doctest::Contains("tok_emb"), ValidationError);
    remove_checkpoint(prefix);
}

TEST_CASE("missing or truncated checkpoint files raise IO errors") {
    CHECK_THROWS_AS(load_checkpoint("no_such_checkpoint"), IoError);

    ModelConfig cfg = small_config();
    Rng rng(408);
    ParamStore params = init_parameters(cfg, rng);
    std::string prefix = "ckpt_truncated";
    save_checkpoint(cfg, params, prefix);
    {
        // rewrite the blob with half the bytes
        FILE* in = std::fopen((prefix + ".bin").c_str(), "rb");
        REQUIRE(in != nullptr);
        std::fseek(in, 0, SEEK_END);
        long size = std::ftell(in);
        std::fseek(in, 0, SEEK_SET);
        std::vector<char> bytes(static_cast<std::size_t>(size));
        REQUIRE(std::fread(bytes.data(), 1, bytes.size(), in) == bytes.size());
        std::fclose(in);
        FILE* out = std::fopen((prefix + ".bin").c_str(), "wb");
        REQUIRE(out != nullptr);
        std::fwrite(bytes.data(), 1, bytes.size() / 2, out);
        std::fclose(out);
    }
    CHECK_THROWS_AS(load_checkpoint(prefix), IoError);
    remove_checkpoint(prefix);
}
