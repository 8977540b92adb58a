#include "srm/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace srm {

void BoundingBox::validate() const {
    if (!std::isfinite(x1) || !std::isfinite(y1) || !std::isfinite(x2) ||
        !std::isfinite(y2)) {
        throw ValidationError("bounding box has non-finite coordinates");
    }
    if (!(x1 < x2) || !(y1 < y2)) {
        std::ostringstream os;
        os << "degenerate bounding box (" << x1 << "," << y1 << "," << x2 << ","
           << y2 << "): corners must satisfy x1 < x2 and y1 < y2";
        throw ValidationError(os.str());
    }
}

std::string metric_name(RelationMetric metric) {
    switch (metric) {
        case RelationMetric::Direction4: return "direction4";
        case RelationMetric::OverlapBinary: return "overlap";
        case RelationMetric::IoUValue: return "iou";
        case RelationMetric::IoUClass10: return "iou10";
        case RelationMetric::GIoUClass10: return "giou10";
    }
    throw ValidationError("unknown relation metric");
}

RelationMetric metric_from_name(const std::string& name) {
    if (name == "direction4") return RelationMetric::Direction4;
    if (name == "overlap") return RelationMetric::OverlapBinary;
    if (name == "iou") return RelationMetric::IoUValue;
    if (name == "iou10") return RelationMetric::IoUClass10;
    if (name == "giou10") return RelationMetric::GIoUClass10;
    throw ValidationError("unknown relation metric name: " + name +
                          " (expected direction4|overlap|iou|iou10|giou10)");
}

PositionVector position_vector(const BoundingBox& box, double image_width,
                               double image_height) {
    box.validate();
    if (!(image_width > 0.0) || !(image_height > 0.0)) {
        throw ValidationError("image dimensions must be positive");
    }
    PositionVector p;
    p.nx1 = box.x1 / image_width;
    p.ny1 = box.y1 / image_height;
    p.nx2 = box.x2 / image_width;
    p.ny2 = box.y2 / image_height;
    p.narea = (box.y2 - box.y1) * (box.x2 - box.x1) / (image_width * image_height);
    return p;
}

static double intersection_area(const BoundingBox& a, const BoundingBox& b) {
    double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    if (w <= 0.0 || h <= 0.0) return 0.0;
    return w * h;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
    a.validate();
    b.validate();
    double inter = intersection_area(a, b);
    double uni = a.area() + b.area() - inter;
    return inter / uni;
}

double giou(const BoundingBox& a, const BoundingBox& b) {
    a.validate();
    b.validate();
    double inter = intersection_area(a, b);
    double uni = a.area() + b.area() - inter;
    double hull_w = std::max(a.x2, b.x2) - std::min(a.x1, b.x1);
    double hull_h = std::max(a.y2, b.y2) - std::min(a.y1, b.y1);
    double hull = hull_w * hull_h;
    return inter / uni - (hull - uni) / hull;
}

int discretize_iou(double value) {
    if (!std::isfinite(value) || value < 0.0 || value > 1.0) {
        std::ostringstream os;
        os << "IoU value " << value << " outside [0,1]";
        throw ValidationError(os.str());
    }
    int bin = static_cast<int>(value * 10.0);
    return std::min(bin, 9);
}

int direction_label(const BoundingBox& a, const BoundingBox& b) {
    a.validate();
    b.validate();
    int left = a.cx() <= b.cx() ? 0 : 1;
    int above = a.cy() <= b.cy() ? 0 : 1;
    return 2 * above + left;
}

int overlap_flag(const BoundingBox& a, const BoundingBox& b) {
    a.validate();
    b.validate();
    return intersection_area(a, b) > 0.0 ? 1 : 0;
}

RelationLabel relation_edge(RelationMetric metric, const BoundingBox& a,
                            const BoundingBox& b) {
    RelationLabel label;
    label.metric = metric;
    switch (metric) {
        case RelationMetric::Direction4:
            label.category = direction_label(a, b);
            label.value = label.category;
            return label;
        case RelationMetric::OverlapBinary:
            label.category = overlap_flag(a, b);
            label.value = label.category;
            return label;
        case RelationMetric::IoUValue:
            label.category = -1;
            label.value = iou(a, b);
            return label;
        case RelationMetric::IoUClass10:
            label.category = discretize_iou(iou(a, b));
            label.value = label.category;
            return label;
        case RelationMetric::GIoUClass10:
            label.category = discretize_iou((giou(a, b) + 1.0) * 0.5);
            label.value = label.category;
            return label;
    }
    throw ValidationError("unknown relation metric");
}

}  // namespace srm
