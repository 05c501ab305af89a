#pragma once

// Online tracking by detection over pixel masks.
//
// For every frame and class: keep detections with confidence above gamma,
// match them to the most recent detection of every track seen within the
// last beta frames, extend matched tracks and start a new track from every
// unmatched detection. Afterwards pixels claimed by several detections of a
// frame go to the most confident one.

#include <mots/assignment.hpp>
#include <mots/association.hpp>
#include <mots/errors.hpp>
#include <mots/mask.hpp>
#include <mots/sequence.hpp>

#include <algorithm>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace mots {

struct TrackerConfig {
    int class_id = kCar;
    double gamma = 0.5;  // keep detections with confidence > gamma
    int beta = 1;        // maximum track-head age in frames
    AssociationMechanism mechanism;

    void validate() const {
        if (class_id != kCar && class_id != kPedestrian) throw ConstraintError("tracker class must be car or pedestrian");
        if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConstraintError("gamma must lie in [0, 1]");
        if (beta < 1) throw ConstraintError("beta must be a positive number of frames");
        if (adjacent_only(mechanism.kind) && beta != 1) {
            throw ConstraintError(std::string("mechanism ") + std::string(mechanism_name(mechanism.kind)) +
                                  " requires beta = 1");
        }
        mechanism.validate();
    }

    friend bool operator==(const TrackerConfig& a, const TrackerConfig& b) {
        return std::tie(a.class_id, a.gamma, a.beta, a.mechanism.kind, a.mechanism.threshold) ==
               std::tie(b.class_id, b.gamma, b.beta, b.mechanism.kind, b.mechanism.threshold);
    }
};

struct TrackedDetection {
    int frame = 0;
    Detection detection;
};

struct Track {
    int id = 0;
    int class_id = 0;
    std::vector<TrackedDetection> detections;  // strictly increasing frames

    const TrackedDetection& head() const { return detections.back(); }
    int last_frame() const { return detections.back().frame; }
};

/// Source of fresh track ids; never hands out the same id twice.
class TrackIdCounter {
public:
    int next() { return next_++; }

private:
    int next_ = 1;
};

/// Indices of tracks whose most recent detection is at most beta frames old.
inline std::vector<std::size_t> candidate_tracks(const std::vector<Track>& tracks, int frame, const TrackerConfig& config) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < tracks.size(); ++i) {
        const auto& t = tracks[i];
        if (t.class_id != config.class_id) continue;
        const int age = frame - t.last_frame();
        if (age >= 1 && age <= config.beta) out.push_back(i);
    }
    return out;
}

inline std::vector<Detection> confident_detections(std::span<const Detection> detections, const TrackerConfig& config) {
    std::vector<Detection> out;
    for (const auto& d : detections) {
        if (d.class_id == config.class_id && d.confidence > config.gamma) out.push_back(d);
    }
    return out;
}

/// Links one frame of detections into `tracks`. `flow` maps frame - 1 to
/// `frame` and is only read by the flow-based mechanisms.
inline void link_step(std::vector<Track>& tracks, int frame, std::span<const Detection> detections,
                      const TrackerConfig& config, const FlowField* flow, TrackIdCounter& ids) {
    const std::vector<Detection> kept = confident_detections(detections, config);
    if (kept.empty()) return;
    const std::vector<std::size_t> candidates = candidate_tracks(tracks, frame, config);

    std::vector<int> assigned_track(kept.size(), -1);
    if (!candidates.empty()) {
        std::vector<TrackHead> heads;
        for (auto i : candidates) heads.push_back({&tracks[i].head().detection, frame - tracks[i].last_frame()});
        const CostMatrix costs = build_cost_matrix(heads, kept, config.mechanism, flow);
        const Assignment assignment = solve_assignment(costs);
        for (std::size_t r = 0; r < candidates.size(); ++r) {
            if (assignment.row_to_col[r] >= 0) assigned_track[std::size_t(assignment.row_to_col[r])] = int(candidates[r]);
        }
    }
    for (std::size_t j = 0; j < kept.size(); ++j) {
        if (assigned_track[j] >= 0) {
            tracks[std::size_t(assigned_track[j])].detections.push_back({frame, kept[j]});
        } else {
            tracks.push_back({ids.next(), config.class_id, {{frame, kept[j]}}});
        }
    }
}

/// A detection placed in the output of one frame.
struct FrameObject {
    int track_id = 0;
    int class_id = 0;
    double confidence = 0.0;
    Mask mask;
};

/// Orders by descending confidence (ties: lower track id, then lower class id),
/// removes pixels already claimed by earlier objects and drops objects left
/// empty. Output is in priority order.
inline std::vector<FrameObject> resolve_overlaps(std::vector<FrameObject> objects) {
    std::stable_sort(objects.begin(), objects.end(), [](const FrameObject& a, const FrameObject& b) {
        if (a.confidence != b.confidence) return a.confidence > b.confidence;
        return std::tie(a.track_id, a.class_id) < std::tie(b.track_id, b.class_id);
    });
    std::vector<FrameObject> out;
    std::optional<Mask> claimed;
    for (auto& o : objects) {
        Mask visible = claimed ? subtract(o.mask, *claimed) : o.mask;
        if (visible.is_empty()) continue;
        claimed = claimed ? unite(*claimed, visible) : visible;
        o.mask = std::move(visible);
        out.push_back(std::move(o));
    }
    return out;
}

/// Optical flow for the transition frame - 1 -> frame, if available.
using FlowProvider = std::function<std::optional<FlowField>(int frame)>;

inline FlowProvider no_flow() {
    return [](int) { return std::optional<FlowField>{}; };
}

/// Per-class linking over all frames followed by per-frame overlap resolution
/// across classes. Classes without a config are not tracked.
inline TrackSet run_tracker(const DetectionSequence& detections, std::span<const TrackerConfig> configs,
                            const FlowProvider& flow = no_flow()) {
    std::vector<TrackerConfig> ordered(configs.begin(), configs.end());
    std::sort(ordered.begin(), ordered.end(),
              [](const TrackerConfig& a, const TrackerConfig& b) { return a.class_id < b.class_id; });
    for (std::size_t i = 0; i < ordered.size(); ++i) {
        ordered[i].validate();
        if (i > 0 && ordered[i].class_id == ordered[i - 1].class_id) {
            throw ConstraintError("duplicate tracker config for class " + class_name(ordered[i].class_id));
        }
    }

    std::vector<Track> tracks;
    TrackIdCounter ids;
    for (const auto& [frame, dets] : detections) {
        std::optional<FlowField> frame_flow;
        bool flow_loaded = false;
        for (const auto& config : ordered) {
            const FlowField* flow_ptr = nullptr;
            if (needs_flow(config.mechanism.kind) && !confident_detections(dets, config).empty() &&
                !candidate_tracks(tracks, frame, config).empty()) {
                if (!flow_loaded) {
                    frame_flow = flow(frame);
                    flow_loaded = true;
                }
                if (!frame_flow) {
                    throw FormatError("missing optical flow for frame " + std::to_string(frame) + " (" +
                                      std::string(mechanism_name(config.mechanism.kind)) + ")");
                }
                flow_ptr = &*frame_flow;
            }
            link_step(tracks, frame, dets, config, flow_ptr, ids);
        }
    }

    std::map<int, std::vector<FrameObject>> per_frame;
    for (const auto& t : tracks) {
        for (const auto& td : t.detections) {
            per_frame[td.frame].push_back({t.id, t.class_id, td.detection.confidence, td.detection.mask});
        }
    }
    TrackSet out;
    for (auto& [frame, objects] : per_frame) {
        auto resolved = resolve_overlaps(std::move(objects));
        if (resolved.empty()) continue;
        auto& fa = out.frames[frame];
        for (auto& o : resolved) fa.objects.push_back({o.track_id, o.class_id, std::move(o.mask)});
    }
    normalize(out);
    validate_annotations(out);
    return out;
}

} // namespace mots
