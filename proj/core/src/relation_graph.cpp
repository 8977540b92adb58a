#include "srm/relation_graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

namespace srm {

int SceneObject::category() const {
    if (category_distribution.empty()) {
        throw ValidationError("object has empty category distribution");
    }
    return static_cast<int>(std::max_element(category_distribution.begin(),
                                             category_distribution.end()) -
                            category_distribution.begin());
}

void SceneObject::validate(int expected_feature_dim) const {
    box.validate();
    if (expected_feature_dim >= 0 &&
        static_cast<int>(feature.size()) != expected_feature_dim) {
        std::ostringstream os;
        os << "object feature length " << feature.size() << " != configured "
           << expected_feature_dim;
        throw ValidationError(os.str());
    }
    double sum = 0.0;
    for (double p : category_distribution) {
        if (p < 0.0) throw ValidationError("negative category probability");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ValidationError("category distribution does not sum to 1");
    }
    if (confidence < 0.0 || confidence > 1.0) {
        throw ValidationError("object confidence outside [0,1]");
    }
}

void Scene::validate(int expected_feature_dim) const {
    if (!(width > 0.0) || !(height > 0.0)) {
        throw ValidationError("scene dimensions must be positive");
    }
    if (objects.empty() || static_cast<int>(objects.size()) > kMaxObjects) {
        std::ostringstream os;
        os << "scene must hold between 1 and " << kMaxObjects
           << " objects, has " << objects.size();
        throw ValidationError(os.str());
    }
    for (const auto& obj : objects) {
        obj.validate(expected_feature_dim);
        if (obj.box.x1 < 0.0 || obj.box.y1 < 0.0 || obj.box.x2 > width ||
            obj.box.y2 > height) {
            throw ValidationError("object box lies outside the image");
        }
    }
}

int SpatialRelationGraph::edge_index(int i, int j) const {
    int n = node_count();
    if (i == j || i < 0 || j < 0 || i >= n || j >= n) {
        throw ValidationError("edge query with invalid object indices");
    }
    int a = std::min(i, j);
    int b = std::max(i, j);
    // pairs (a,b), a<b, packed row by row
    return a * n - a * (a + 1) / 2 + (b - a - 1);
}

RelationLabel SpatialRelationGraph::label(int i, int j) const {
    if (metric_ == RelationMetric::Direction4 && i > j) {
        return relation_edge(metric_, boxes_[i], boxes_[j]);
    }
    return edges_[edge_index(i, j)];
}

SpatialRelationGraph build_graph(const Scene& scene, RelationMetric metric) {
    scene.validate();
    int n = static_cast<int>(scene.objects.size());
    std::vector<PositionVector> nodes;
    std::vector<BoundingBox> boxes;
    nodes.reserve(n);
    boxes.reserve(n);
    for (const auto& obj : scene.objects) {
        nodes.push_back(position_vector(obj.box, scene.width, scene.height));
        boxes.push_back(obj.box);
    }
    std::vector<RelationLabel> edges;
    edges.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            edges.push_back(relation_edge(metric, boxes[i], boxes[j]));
        }
    }
    return SpatialRelationGraph(metric, std::move(nodes), std::move(edges),
                                std::move(boxes));
}

std::vector<int> eligible_opr_nodes(const Scene& scene) {
    std::vector<int> out;
    for (int i = 0; i < static_cast<int>(scene.objects.size()); ++i) {
        const auto& obj = scene.objects[i];
        if (obj.confidence > 0.5 || obj.is_ground_truth) out.push_back(i);
    }
    return out;
}

std::vector<SampledPair> sample_src_pairs(const SpatialRelationGraph& graph,
                                          int k, Rng& rng) {
    int n = graph.node_count();
    if (n < 2) {
        throw ValidationError("pair sampling needs at least 2 graph nodes");
    }
    if (k < 1) {
        throw ValidationError("pair sample count must be >= 1");
    }
    std::vector<std::pair<int, int>> all;
    all.reserve(static_cast<std::size_t>(n) * (n - 1));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i != j) all.emplace_back(i, j);
        }
    }
    rng.shuffle(all);
    int take = std::min<int>(k, static_cast<int>(all.size()));
    std::vector<SampledPair> out;
    out.reserve(take);
    for (int t = 0; t < take; ++t) {
        out.push_back({all[t].first, all[t].second,
                       graph.label(all[t].first, all[t].second)});
    }
    return out;
}

void serialize_graph(const SpatialRelationGraph& graph, std::ostream& os) {
    int n = graph.node_count();
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            RelationLabel l = graph.label(i, j);
            os << i << ' ' << j << ' ' << metric_name(graph.metric()) << ' ';
            if (l.metric == RelationMetric::IoUValue) {
                os << l.value;
            } else {
                os << l.category;
            }
            os << '\n';
        }
    }
}

}  // namespace srm
