#pragma once

#include <iosfwd>
#include <vector>

#include "srm/geometry.hpp"
#include "srm/rng.hpp"

namespace srm {

// A detected or annotated region: box geometry plus appearance feature and
// the detector's (smoothed) category distribution.
struct SceneObject {
    BoundingBox box;
    std::vector<double> feature;
    std::vector<double> category_distribution;
    double confidence = 0.0;
    bool is_ground_truth = false;

    int category() const;  // argmax of category_distribution
    void validate(int expected_feature_dim = -1) const;
};

struct Scene {
    double width = 0.0;
    double height = 0.0;
    std::vector<SceneObject> objects;

    static constexpr int kMaxObjects = 100;

    void validate(int expected_feature_dim = -1) const;
};

// Complete graph over a scene's objects: nodes are the normalized position
// vectors, edges the pairwise relation labels for one metric. Direction4
// labels are stored for i<j only; the reverse orientation is recomputed from
// the boxes on query.
class SpatialRelationGraph {
public:
    SpatialRelationGraph(RelationMetric metric, std::vector<PositionVector> nodes,
                         std::vector<RelationLabel> edges,
                         std::vector<BoundingBox> boxes)
        : metric_(metric),
          nodes_(std::move(nodes)),
          edges_(std::move(edges)),
          boxes_(std::move(boxes)) {}

    RelationMetric metric() const { return metric_; }
    int node_count() const { return static_cast<int>(nodes_.size()); }
    int edge_count() const { return static_cast<int>(edges_.size()); }
    const std::vector<PositionVector>& nodes() const { return nodes_; }

    // Label for the ordered pair (i, j), i != j.
    RelationLabel label(int i, int j) const;

private:
    int edge_index(int i, int j) const;  // canonical i<j packing

    RelationMetric metric_;
    std::vector<PositionVector> nodes_;
    std::vector<RelationLabel> edges_;
    std::vector<BoundingBox> boxes_;
};

SpatialRelationGraph build_graph(const Scene& scene, RelationMetric metric);

// Indices maskable for position regression: confidence strictly above 0.5,
// or ground-truth annotated.
std::vector<int> eligible_opr_nodes(const Scene& scene);

struct SampledPair {
    int i = 0;
    int j = 0;
    RelationLabel label;
};

// k ordered pairs (i != j), uniform without replacement, capped at n(n-1).
std::vector<SampledPair> sample_src_pairs(const SpatialRelationGraph& graph,
                                          int k, Rng& rng);

// One canonical edge per line: "i j metric label".
void serialize_graph(const SpatialRelationGraph& graph, std::ostream& os);

}  // namespace srm
