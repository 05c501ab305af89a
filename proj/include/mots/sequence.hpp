#pragma once

// Per-sequence containers shared by the evaluator, the tracker and the file
// readers.

#include <mots/errors.hpp>
#include <mots/mask.hpp>

#include <algorithm>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace mots {

inline constexpr int kCar = 1;
inline constexpr int kPedestrian = 2;
inline constexpr int kIgnoreRegion = 10;

inline bool is_known_class(int class_id) {
    return class_id == kCar || class_id == kPedestrian || class_id == kIgnoreRegion;
}

inline std::string class_name(int class_id) {
    switch (class_id) {
    case kCar: return "car";
    case kPedestrian: return "pedestrian";
    case kIgnoreRegion: return "ignore";
    default: return std::to_string(class_id);
    }
}

inline std::optional<int> class_from_name(std::string_view name) {
    if (name == "car" || name == "1") return kCar;
    if (name == "pedestrian" || name == "ped" || name == "2") return kPedestrian;
    return std::nullopt;
}

/// One annotated or hypothesized object in one frame.
struct ObjectMask {
    int object_id = 0;
    int class_id = 0;
    Mask mask;

    friend bool operator==(const ObjectMask&, const ObjectMask&) = default;
};

struct FrameAnnotations {
    std::vector<ObjectMask> objects;         // sorted by object_id
    std::vector<ObjectMask> ignore_regions;  // class 10, may overlap anything

    friend bool operator==(const FrameAnnotations&, const FrameAnnotations&) = default;
};

/// Ground truth of a sequence, or a tracker's output for it. Frames are
/// 0-based and sparse; a missing frame has no objects.
struct SequenceAnnotations {
    std::map<int, FrameAnnotations> frames;

    friend bool operator==(const SequenceAnnotations&, const SequenceAnnotations&) = default;
};

using SequenceGroundTruth = SequenceAnnotations;
using TrackSet = SequenceAnnotations;

/// A single-frame object hypothesis from a detector.
struct Detection {
    int class_id = 0;
    double confidence = 0.0;
    Mask mask;
    std::vector<double> embedding;

    friend bool operator==(const Detection&, const Detection&) = default;
};

/// Detections keyed by frame, input order preserved within a frame.
using DetectionSequence = std::map<int, std::vector<Detection>>;

/// Puts objects and ignore regions into their canonical order so that equal
/// content compares equal regardless of record order.
inline void normalize(SequenceAnnotations& seq) {
    auto by_id = [](const ObjectMask& a, const ObjectMask& b) {
        return std::tie(a.object_id, a.class_id) < std::tie(b.object_id, b.class_id);
    };
    auto by_id_then_runs = [](const ObjectMask& a, const ObjectMask& b) {
        return std::tie(a.object_id, a.mask.runs()) < std::tie(b.object_id, b.mask.runs());
    };
    for (auto& [frame, fa] : seq.frames) {
        std::sort(fa.objects.begin(), fa.objects.end(), by_id);
        std::sort(fa.ignore_regions.begin(), fa.ignore_regions.end(), by_id_then_runs);
    }
}

/// Checks the per-frame rules: positive ids unique per frame, non-empty
/// masks, shared dimensions, and no pixel claimed by two objects.
inline void validate_annotations(const SequenceAnnotations& seq) {
    for (const auto& [frame, fa] : seq.frames) {
        const std::string where = "frame " + std::to_string(frame) + ": ";
        const Mask* first = nullptr;
        auto check_dims = [&](const ObjectMask& o) {
            if (first == nullptr) {
                first = &o.mask;
            } else if (o.mask.height() != first->height() || o.mask.width() != first->width()) {
                throw DimensionError(where + "object " + std::to_string(o.object_id) + " has dimensions " +
                                     std::to_string(o.mask.height()) + "x" + std::to_string(o.mask.width()) +
                                     ", frame uses " + std::to_string(first->height()) + "x" +
                                     std::to_string(first->width()));
            }
        };
        for (const auto& o : fa.objects) {
            check_dims(o);
            if (o.object_id <= 0) throw ConstraintError(where + "object id must be positive");
            if (o.class_id == kIgnoreRegion || !is_known_class(o.class_id)) {
                throw ConstraintError(where + "object " + std::to_string(o.object_id) + " has invalid class " +
                                      std::to_string(o.class_id));
            }
            if (o.mask.is_empty()) throw ConstraintError(where + "object " + std::to_string(o.object_id) + " has an empty mask");
        }
        for (const auto& o : fa.ignore_regions) check_dims(o);
        for (std::size_t i = 0; i < fa.objects.size(); ++i) {
            for (std::size_t j = i + 1; j < fa.objects.size(); ++j) {
                const auto& a = fa.objects[i];
                const auto& b = fa.objects[j];
                if (a.object_id == b.object_id) {
                    throw ConstraintError(where + "duplicate object id " + std::to_string(a.object_id));
                }
                if (intersection_count(a.mask, b.mask) > 0) {
                    throw ConstraintError(where + "objects " + std::to_string(a.object_id) + " and " +
                                          std::to_string(b.object_id) + " overlap");
                }
            }
        }
    }
}

/// Objects of one class in a frame, in stored order.
inline std::vector<const ObjectMask*> objects_of_class(const FrameAnnotations& fa, int class_id) {
    std::vector<const ObjectMask*> out;
    for (const auto& o : fa.objects) {
        if (o.class_id == class_id) out.push_back(&o);
    }
    return out;
}

} // namespace mots
