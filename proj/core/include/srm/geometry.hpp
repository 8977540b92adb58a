#pragma once

#include <string>

#include "srm/errors.hpp"

namespace srm {

// Pixel-space axis-aligned box, corners (x1,y1) top-left and (x2,y2)
// bottom-right. Strictly positive area required.
struct BoundingBox {
    double x1 = 0.0;
    double y1 = 0.0;
    double x2 = 0.0;
    double y2 = 0.0;

    void validate() const;
    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return width() * height(); }
    double cx() const { return 0.5 * (x1 + x2); }
    double cy() const { return 0.5 * (y1 + y2); }
};

// Normalized 5-component position encoding of a box within an image:
// (x1/W, y1/H, x2/W, y2/H, area/(W*H)).
struct PositionVector {
    double nx1 = 0.0;
    double ny1 = 0.0;
    double nx2 = 0.0;
    double ny2 = 0.0;
    double narea = 0.0;

    double operator[](int i) const {
        switch (i) {
            case 0: return nx1;
            case 1: return ny1;
            case 2: return nx2;
            case 3: return ny2;
            default: return narea;
        }
    }
};

enum class RelationMetric {
    Direction4,     // 4-way joint left/right x above/below between centers
    OverlapBinary,  // 1 iff intersection area > 0
    IoUValue,       // raw IoU in [0,1]
    IoUClass10,     // IoU binned into 10 uniform classes
    GIoUClass10,    // GIoU mapped [-1,1]->[0,1], then binned into 10 classes
};

std::string metric_name(RelationMetric metric);
RelationMetric metric_from_name(const std::string& name);

// A pairwise spatial relation target. Classification metrics use `category`
// (value mirrors it as a double); IoUValue uses `value` with category -1.
struct RelationLabel {
    RelationMetric metric = RelationMetric::IoUClass10;
    int category = 0;
    double value = 0.0;
};

PositionVector position_vector(const BoundingBox& box, double image_width,
                               double image_height);

double iou(const BoundingBox& a, const BoundingBox& b);
double giou(const BoundingBox& a, const BoundingBox& b);

// Bin k for value in [k/10, (k+1)/10); 1.0 is clamped into bin 9.
int discretize_iou(double value);

// 0 = left-above, 1 = right-above, 2 = left-below, 3 = right-below,
// for the center of `a` relative to the center of `b`. Ties resolve via <=
// towards left / above.
int direction_label(const BoundingBox& a, const BoundingBox& b);

int overlap_flag(const BoundingBox& a, const BoundingBox& b);

RelationLabel relation_edge(RelationMetric metric, const BoundingBox& a,
                            const BoundingBox& b);

}  // namespace srm
