#include <cstdio>

#include "doctest.h"
#include "srm/text.hpp"

using namespace srm;

namespace {

Scene three_object_scene() {
    Scene scene;
    scene.width = 100.0;
    scene.height = 100.0;
    for (int i = 0; i < 3; ++i) {
        SceneObject obj;
        obj.box = {10.0 * i, 5.0, 10.0 * i + 20.0, 30.0};
        obj.feature = {0.1, 0.2, 0.3, 0.4};
        obj.category_distribution = {1.0, 0.0};
        obj.confidence = 0.9;
        scene.objects.push_back(obj);
    }
    return scene;
}

}  // namespace

TEST_CASE("vocabulary reserves fixed special-token ids") {
    Vocabulary v;
    CHECK(v.size() == Vocabulary::kReservedCount);
    CHECK(v.word(Vocabulary::kCls) == "[CLS]");
    CHECK(v.word(Vocabulary::kImg) == "[IMG]");
    CHECK(v.word(Vocabulary::kSep) == "[SEP]");
    CHECK(v.word(Vocabulary::kMask) == "[MASK]");
    CHECK(v.word(Vocabulary::kPad) == "[PAD]");
    CHECK(v.word(Vocabulary::kUnk) == "[UNK]");

    int a = v.add("alpha");
    int b = v.add("beta");
    CHECK(a == Vocabulary::kReservedCount);
    CHECK(b == a + 1);
    CHECK(v.add("alpha") == a);  // idempotent
    CHECK(v.id("alpha") == a);
    CHECK(v.id("gamma") == Vocabulary::kUnk);
    CHECK(v.tokenize({"beta", "gamma", "alpha"}) ==
          std::vector<int>{b, Vocabulary::kUnk, a});
    CHECK_THROWS_AS(v.word(-1), ValidationError);
    CHECK_THROWS_AS(v.word(v.size()), ValidationError);
}

TEST_CASE("vocabulary save/load round-trips ids") {
    Vocabulary v;
    v.add("north");
    v.add("south");
    v.add("east");
    std::string path = "vocab_roundtrip.txt";
    v.save(path);
    Vocabulary loaded = Vocabulary::load(path);
    CHECK(loaded.size() == v.size());
    for (int i = 0; i < v.size(); ++i) CHECK(loaded.word(i) == v.word(i));
    std::remove(path.c_str());
    CHECK_THROWS_AS(Vocabulary::load("no_such_vocab.txt"), IoError);
}

TEST_CASE("sequence layout: [CLS] question answer [IMG] regions [SEP]") {
    Vocabulary v;
    int q0 = v.add("q0"), q1 = v.add("q1"), a0 = v.add("a0");
    Scene scene = three_object_scene();
    TokenSequence seq = encode_sequence(v, {q0, q1}, {a0}, scene);

    REQUIRE(seq.length() == 9);  // 1 + 2 + 1 + 1 + 3 + 1
    CHECK(seq.ids[0] == Vocabulary::kCls);
    CHECK(seq.ids[1] == q0);
    CHECK(seq.ids[2] == q1);
    CHECK(seq.ids[3] == a0);
    CHECK(seq.ids[4] == Vocabulary::kImg);
    CHECK(seq.img_slot == 4);
    CHECK(seq.ids[8] == Vocabulary::kSep);

    CHECK(seq.type_ids == std::vector<int>{0, 0, 0, 1, 2, 2, 2, 2, 2});
    CHECK(seq.text_positions == std::vector<int>{0, 1, 2, 3, 4, -1, -1, -1, 5});
    CHECK(seq.object_index == std::vector<int>{-1, -1, -1, -1, -1, 0, 1, 2, -1});
    CHECK(seq.visual_slots() == std::vector<int>{5, 6, 7});
    CHECK(seq.word_slots() == std::vector<int>{1, 2, 3});  // specials excluded
    for (int s = 0; s < 9; ++s) CHECK(seq.attend[s] == 1);
}

TEST_CASE("padding tokens are excluded from attention") {
    Vocabulary v;
    int q0 = v.add("q0");
    TokenSequence seq = encode_sequence(v, {q0, Vocabulary::kPad},
                                        {Vocabulary::kPad}, three_object_scene());
    CHECK(seq.attend[1] == 1);
    CHECK(seq.attend[2] == 0);
    CHECK(seq.attend[3] == 0);
}

TEST_CASE("sequence limits are enforced") {
    Vocabulary v;
    std::vector<int> long_q(5, v.add("w"));
    Scene scene = three_object_scene();
    CHECK_THROWS_AS(encode_sequence(v, long_q, {}, scene, {4, 16}),
                    ValidationError);
    CHECK_THROWS_AS(encode_sequence(v, {v.id("w")}, {}, scene, {4, 2}),
                    ValidationError);
    CHECK_NOTHROW(encode_sequence(v, {v.id("w")}, {}, scene, {4, 3}));
    CHECK_THROWS_AS(encode_sequence(v, {999}, {}, scene), ValidationError);
}
