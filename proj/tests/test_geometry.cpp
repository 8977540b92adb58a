#include <cmath>

#include "doctest.h"
#include "srm/geometry.hpp"
#include "srm/rng.hpp"

using namespace srm;

namespace {

BoundingBox random_int_box(Rng& rng, int span) {
    int x1 = rng.uniform_int(0, span - 2);
    int y1 = rng.uniform_int(0, span - 2);
    int x2 = rng.uniform_int(x1 + 1, span);
    int y2 = rng.uniform_int(y1 + 1, span);
    return {static_cast<double>(x1), static_cast<double>(y1),
            static_cast<double>(x2), static_cast<double>(y2)};
}

// Independent IoU oracle for integer boxes: count unit lattice cells whose
// center lies inside each box.
double lattice_iou(const BoundingBox& a, const BoundingBox& b, int span) {
    int inter = 0, in_a = 0, in_b = 0;
    for (int x = 0; x < span; ++x) {
        for (int y = 0; y < span; ++y) {
            double cx = x + 0.5, cy = y + 0.5;
            bool pa = cx > a.x1 && cx < a.x2 && cy > a.y1 && cy < a.y2;
            bool pb = cx > b.x1 && cx < b.x2 && cy > b.y1 && cy < b.y2;
            in_a += pa;
            in_b += pb;
            inter += pa && pb;
        }
    }
    return static_cast<double>(inter) / static_cast<double>(in_a + in_b - inter);
}

BoundingBox random_box(Rng& rng, double span) {
    double x1 = rng.uniform(0.0, span);
    double y1 = rng.uniform(0.0, span);
    return {x1, y1, x1 + rng.uniform(0.1, span), y1 + rng.uniform(0.1, span)};
}

}  // namespace

TEST_CASE("position vector components") {
    // 100x50 box at (10,20) in a 200x100 image
    PositionVector p = position_vector({10, 20, 110, 70}, 200, 100);
    CHECK(std::abs(p.nx1 - 0.05) < 1e-12);
    CHECK(std::abs(p.ny1 - 0.2) < 1e-12);
    CHECK(std::abs(p.nx2 - 0.55) < 1e-12);
    CHECK(std::abs(p.ny2 - 0.7) < 1e-12);
    CHECK(std::abs(p.narea - (100.0 * 50.0) / (200.0 * 100.0)) < 1e-12);

    // full-image box
    PositionVector full = position_vector({0, 0, 64, 64}, 64, 64);
    for (int i = 0; i < 4; ++i) {
        CHECK(std::abs(full[i] - (i < 2 ? 0.0 : 1.0)) < 1e-12);
    }
    CHECK(std::abs(full.narea - 1.0) < 1e-12);
}

TEST_CASE("position vector is invariant to joint box/image scaling") {
    Rng rng(11);
    for (int t = 0; t < 200; ++t) {
        BoundingBox b = random_box(rng, 50.0);
        double k = rng.uniform(0.5, 20.0);
        BoundingBox scaled{b.x1 * k, b.y1 * k, b.x2 * k, b.y2 * k};
        PositionVector p = position_vector(b, 120.0, 90.0);
        PositionVector q = position_vector(scaled, 120.0 * k, 90.0 * k);
        for (int i = 0; i < 5; ++i) CHECK(std::abs(p[i] - q[i]) < 1e-12);
    }
}

TEST_CASE("invalid boxes and image sizes are rejected") {
    CHECK_THROWS_AS(BoundingBox({10, 10, 10, 20}).validate(), ValidationError);
    CHECK_THROWS_AS(BoundingBox({10, 10, 20, 5}).validate(), ValidationError);
    CHECK_THROWS_AS(position_vector({0, 0, 1, 1}, 0.0, 10.0), ValidationError);
    CHECK_THROWS_AS(position_vector({0, 0, 1, 1}, 10.0, -1.0), ValidationError);
}

TEST_CASE("analytic IoU matches the lattice-counting oracle") {
    Rng rng(7);
    for (int t = 0; t < 1000; ++t) {
        BoundingBox a = random_int_box(rng, 24);
        BoundingBox b = random_int_box(rng, 24);
        CHECK(std::abs(iou(a, b) - lattice_iou(a, b, 24)) < 1e-9);
    }
}

TEST_CASE("IoU basic identities") {
    BoundingBox a{0, 0, 10, 10};
    CHECK(iou(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(iou(a, {20, 20, 30, 30}) == 0.0);
    CHECK(iou(a, {10, 0, 20, 10}) == 0.0);  // edge contact
    CHECK(iou(a, {5, 0, 15, 10}) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("GIoU never exceeds IoU and stays within [-1, 1]") {
    Rng rng(13);
    for (int t = 0; t < 10000; ++t) {
        BoundingBox a = random_box(rng, 40.0);
        BoundingBox b = random_box(rng, 40.0);
        double i = iou(a, b);
        double g = giou(a, b);
        CHECK(g <= i + 1e-12);
        CHECK(g >= -1.0 - 1e-12);
        CHECK(g <= 1.0 + 1e-12);
    }
    BoundingBox a{0, 0, 4, 4};
    CHECK(giou(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    // identical hull (aligned boxes spanning it) -> giou == iou
    CHECK(giou(a, {0, 0, 4, 2}) == doctest::Approx(iou(a, {0, 0, 4, 2})).epsilon(1e-12));
}

TEST_CASE("discretize_iou is total and monotone over [0, 1]") {
    CHECK(discretize_iou(0.0) == 0);
    CHECK(discretize_iou(0.05) == 0);
    CHECK(discretize_iou(0.999) == 9);
    CHECK(discretize_iou(1.0) == 9);
    int prev = -1;
    for (int i = 0; i <= 10000; ++i) {
        int bin = discretize_iou(i / 10000.0);
        CHECK(bin >= 0);
        CHECK(bin <= 9);
        CHECK(bin >= prev);
        prev = bin;
    }
    CHECK_THROWS_AS(discretize_iou(-0.01), ValidationError);
    CHECK_THROWS_AS(discretize_iou(1.01), ValidationError);
}

TEST_CASE("direction label quadrants and tie-breaking") {
    BoundingBox ref{10, 10, 20, 20};  // center (15, 15)
    auto at = [](double cx, double cy) {
        return BoundingBox{cx - 1, cy - 1, cx + 1, cy + 1};
    };
    CHECK(direction_label(at(10, 10), ref) == 0);  // left-above
    CHECK(direction_label(at(20, 10), ref) == 1);  // right-above
    CHECK(direction_label(at(10, 20), ref) == 2);  // left-below
    CHECK(direction_label(at(20, 20), ref) == 3);  // right-below
    // exact ties resolve towards left / above
    CHECK(direction_label(at(15, 15), ref) == 0);
    CHECK(direction_label(at(15, 20), ref) == 2);
    CHECK(direction_label(at(20, 15), ref) == 1);
}

TEST_CASE("overlap flag requires strictly positive intersection area") {
    BoundingBox a{0, 0, 10, 10};
    CHECK(overlap_flag(a, {5, 5, 15, 15}) == 1);
    CHECK(overlap_flag(a, {10, 0, 20, 10}) == 0);  // shared edge only
    CHECK(overlap_flag(a, {10, 10, 20, 20}) == 0);  // shared corner only
    CHECK(overlap_flag(a, {11, 0, 20, 10}) == 0);
}

TEST_CASE("relation_edge covers every metric consistently") {
    Rng rng(29);
    for (int t = 0; t < 500; ++t) {
        BoundingBox a = random_box(rng, 30.0);
        BoundingBox b = random_box(rng, 30.0);

        RelationLabel dir = relation_edge(RelationMetric::Direction4, a, b);
        CHECK(dir.category == direction_label(a, b));

        RelationLabel ov = relation_edge(RelationMetric::OverlapBinary, a, b);
        CHECK(ov.category == overlap_flag(a, b));

        RelationLabel iv = relation_edge(RelationMetric::IoUValue, a, b);
        CHECK(iv.category == -1);
        CHECK(iv.value == doctest::Approx(iou(a, b)).epsilon(1e-12));

        RelationLabel ic = relation_edge(RelationMetric::IoUClass10, a, b);
        CHECK(ic.category == discretize_iou(iou(a, b)));

        RelationLabel gc = relation_edge(RelationMetric::GIoUClass10, a, b);
        CHECK(gc.category == discretize_iou((giou(a, b) + 1.0) / 2.0));
        CHECK(gc.category >= 0);
        CHECK(gc.category <= 9);
    }
}

TEST_CASE("metric names round-trip") {
    for (RelationMetric m :
         {RelationMetric::Direction4, RelationMetric::OverlapBinary,
          RelationMetric::IoUValue, RelationMetric::IoUClass10,
          RelationMetric::GIoUClass10}) {
        CHECK(metric_from_name(metric_name(m)) == m);
    }
    CHECK_THROWS_AS(metric_from_name("nope"), ValidationError);
}
