#pragma once

// Association cues between a track head and a new detection, and the cost
// matrix handed to the assignment solver.

#include <mots/errors.hpp>
#include <mots/mask.hpp>
#include <mots/sequence.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mots {

enum class Mechanism {
    embedding,    // Euclidean distance of association vectors
    mask_iou,     // IoU of the flow-warped previous mask with the current mask
    bbox_iou,     // IoU of the median-flow shifted previous box with the current box
    bbox_center,  // distance between box centers
};

inline std::string_view mechanism_name(Mechanism m) {
    switch (m) {
    case Mechanism::embedding: return "embedding";
    case Mechanism::mask_iou: return "mask_iou";
    case Mechanism::bbox_iou: return "bbox_iou";
    case Mechanism::bbox_center: return "bbox_center";
    }
    return "unknown";
}

inline std::optional<Mechanism> mechanism_from_name(std::string_view name) {
    for (auto m : {Mechanism::embedding, Mechanism::mask_iou, Mechanism::bbox_iou, Mechanism::bbox_center}) {
        if (mechanism_name(m) == name) return m;
    }
    return std::nullopt;
}

/// Distances are lower-is-better, IoUs higher-is-better.
inline bool is_distance(Mechanism m) { return m == Mechanism::embedding || m == Mechanism::bbox_center; }
inline bool needs_flow(Mechanism m) { return m == Mechanism::mask_iou || m == Mechanism::bbox_iou; }
/// Only the embedding cue may link across more than one frame.
inline bool adjacent_only(Mechanism m) { return m != Mechanism::embedding; }

struct AssociationMechanism {
    Mechanism kind = Mechanism::embedding;
    double threshold = 0.0;  // maximum distance (exclusive) or minimum IoU (exclusive)

    void validate() const {
        if (!std::isfinite(threshold)) throw ConstraintError("association threshold must be finite");
        if (is_distance(kind) && threshold < 0.0) throw ConstraintError("distance threshold must be non-negative");
        if (!is_distance(kind) && (threshold < 0.0 || threshold > 1.0)) {
            throw ConstraintError("IoU threshold must lie in [0, 1]");
        }
    }

    /// Threshold test on the raw score.
    bool admits(double score) const { return is_distance(kind) ? score < threshold : score > threshold; }
};

inline double embed_distance(std::span<const double> v, std::span<const double> w) {
    if (v.size() != w.size()) {
        throw DimensionError("embedding dimensions differ: " + std::to_string(v.size()) + " vs " + std::to_string(w.size()));
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double d = v[i] - w[i];
        sum += d * d;
    }
    return std::sqrt(sum);
}

inline double maskprop_score(const Mask& mask_prev, const Mask& mask_cur, const FlowField& flow) {
    require_same_dims(mask_prev, mask_cur);
    return iou(warp(mask_prev, flow), mask_cur);
}

/// Axis-aligned box with real-valued edges: [x0, x1) x [y0, y1).
struct RealBox {
    double x0 = 0;
    double y0 = 0;
    double x1 = 0;
    double y1 = 0;

    static RealBox from_pixels(const Box& b) { return {double(b.x_min), double(b.y_min), double(b.x_max) + 1.0, double(b.y_max) + 1.0}; }
    RealBox shifted(double dx, double dy) const { return {x0 + dx, y0 + dy, x1 + dx, y1 + dy}; }
    double area() const { return (x1 - x0) * (y1 - y0); }
};

inline double box_iou(const RealBox& a, const RealBox& b) {
    const double iw = std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
    const double ih = std::max(0.0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

/// Lower median: element (n - 1) / 2 of the sorted values.
inline double lower_median(std::vector<float> values) {
    if (values.empty()) throw ConstraintError("median of an empty set");
    const auto mid = values.begin() + std::ptrdiff_t((values.size() - 1) / 2);
    std::nth_element(values.begin(), mid, values.end());
    return double(*mid);
}

/// Shifts the previous box by the median flow over all pixels inside it, then
/// compares it with the current box.
inline double bbox_iou_warped(const Mask& mask_prev, const Mask& mask_cur, const FlowField& flow) {
    require_same_dims(mask_prev, mask_cur);
    if (flow.height != mask_prev.height() || flow.width != mask_prev.width()) {
        throw DimensionError("flow field and mask dimensions differ");
    }
    const Box prev = bbox_of(mask_prev);
    const Box cur = bbox_of(mask_cur);
    std::vector<float> us;
    std::vector<float> vs;
    us.reserve(prev.area());
    vs.reserve(prev.area());
    for (int y = prev.y_min; y <= prev.y_max; ++y) {
        for (int x = prev.x_min; x <= prev.x_max; ++x) {
            us.push_back(flow.u_at(x, y));
            vs.push_back(flow.v_at(x, y));
        }
    }
    const double du = lower_median(std::move(us));
    const double dv = lower_median(std::move(vs));
    return box_iou(RealBox::from_pixels(prev).shifted(du, dv), RealBox::from_pixels(cur));
}

inline double center_distance(const Mask& mask_prev, const Mask& mask_cur) {
    const Box a = bbox_of(mask_prev);
    const Box b = bbox_of(mask_cur);
    const double dx = (a.x_min + a.x_max) / 2.0 - (b.x_min + b.x_max) / 2.0;
    const double dy = (a.y_min + a.y_max) / 2.0 - (b.y_min + b.y_max) / 2.0;
    return std::sqrt(dx * dx + dy * dy);
}

/// Raw association score of one (head, detection) pair.
inline double association_score(const Detection& head, const Detection& det, Mechanism kind, const FlowField* flow) {
    switch (kind) {
    case Mechanism::embedding:
        if (head.embedding.empty() || det.embedding.empty()) {
            throw FormatError("embedding association requires detections with embeddings");
        }
        return embed_distance(head.embedding, det.embedding);
    case Mechanism::mask_iou: return maskprop_score(head.mask, det.mask, *flow);
    case Mechanism::bbox_iou: return bbox_iou_warped(head.mask, det.mask, *flow);
    case Mechanism::bbox_center: return center_distance(head.mask, det.mask);
    }
    return 0.0;
}

/// Row-major costs with a feasibility flag per cell.
struct CostMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> cost;
    std::vector<std::uint8_t> feasible;

    CostMatrix() = default;
    CostMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), cost(r * c, 0.0), feasible(r * c, 0) {}

    double& at(std::size_t i, std::size_t j) { return cost[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return cost[i * cols + j]; }
    bool is_feasible(std::size_t i, std::size_t j) const { return feasible[i * cols + j] != 0; }
    void set_feasible(std::size_t i, std::size_t j, bool f) { feasible[i * cols + j] = f ? 1 : 0; }
};

/// Most recent detection of a track and how many frames ago it was made.
struct TrackHead {
    const Detection* detection = nullptr;
    int age = 1;
};

/// Distances are used as costs directly, IoUs as 1 - IoU. Feasibility is
/// decided on the raw score so the threshold keeps its natural units.
inline CostMatrix build_cost_matrix(std::span<const TrackHead> heads, std::span<const Detection> detections,
                                    const AssociationMechanism& mechanism, const FlowField* flow = nullptr) {
    mechanism.validate();
    if (needs_flow(mechanism.kind) && flow == nullptr && !heads.empty() && !detections.empty()) {
        throw FormatError(std::string("mechanism ") + std::string(mechanism_name(mechanism.kind)) + " requires optical flow");
    }
    CostMatrix m(heads.size(), detections.size());
    for (std::size_t i = 0; i < heads.size(); ++i) {
        if (adjacent_only(mechanism.kind) && heads[i].age != 1) {
            throw ConstraintError(std::string("mechanism ") + std::string(mechanism_name(mechanism.kind)) +
                                  " only links adjacent frames");
        }
        for (std::size_t j = 0; j < detections.size(); ++j) {
            const double score = association_score(*heads[i].detection, detections[j], mechanism.kind, flow);
            m.at(i, j) = is_distance(mechanism.kind) ? score : 1.0 - score;
            m.set_feasible(i, j, mechanism.admits(score));
        }
    }
    return m;
}

} // namespace mots
