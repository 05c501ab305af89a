#pragma once

// Mask-based CLEAR-MOT evaluation: MOTSA, MOTSP and sMOTSA.
//
// Correspondences need no bipartite matching. Ground truth and hypothesis
// masks are each non-overlapping within a frame, so at most one hypothesis
// can reach IoU > 0.5 with a given ground-truth mask and vice versa.

#include <mots/errors.hpp>
#include <mots/mask.hpp>
#include <mots/sequence.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace mots {

enum class IdSwitchMode {
    /// A switch is counted against the latest matched predecessor, across gaps.
    motchallenge,
    /// A switch is counted only if the track was matched at its previous
    /// ground-truth appearance (no switch after the tracker lost the target).
    kitti,
};

struct EvalOptions {
    double ignore_threshold = 0.5;
    IdSwitchMode id_switch_mode = IdSwitchMode::motchallenge;
};

struct MatchPair {
    std::size_t hyp = 0;
    std::size_t gt = 0;
    double iou = 0.0;

    friend bool operator==(const MatchPair&, const MatchPair&) = default;
};

struct FrameMatching {
    int frame = 0;
    std::vector<MatchPair> pairs;             // ascending by hyp index
    std::vector<std::size_t> unmatched_hyps;  // ascending
    std::vector<std::size_t> unmatched_gt;    // ascending

    friend bool operator==(const FrameMatching&, const FrameMatching&) = default;
};

struct MetricCounts {
    std::uint64_t num_gt = 0;
    std::uint64_t num_tp = 0;
    std::uint64_t num_fp = 0;
    std::uint64_t num_fn = 0;
    std::uint64_t num_ids = 0;
    std::uint64_t num_ignored = 0;  // unmatched hypotheses shielded by ignore regions
    double soft_tp = 0.0;

    MetricCounts& operator+=(const MetricCounts& o) {
        num_gt += o.num_gt;
        num_tp += o.num_tp;
        num_fp += o.num_fp;
        num_fn += o.num_fn;
        num_ids += o.num_ids;
        num_ignored += o.num_ignored;
        soft_tp += o.soft_tp;
        return *this;
    }

    friend bool operator==(const MetricCounts&, const MetricCounts&) = default;
};

/// Derived metrics; nullopt where the denominator is zero.
struct Metrics {
    std::optional<double> motsa;
    std::optional<double> motsp;
    std::optional<double> smotsa;
};

inline void require_nonoverlapping(std::span<const Mask> masks, const char* what) {
    const auto violations = check_frame_nonoverlap(masks);
    if (!violations.empty()) {
        throw ConstraintError(std::string(what) + " masks " + std::to_string(violations.front().first) + " and " +
                              std::to_string(violations.front().second) + " overlap");
    }
}

/// Maps each hypothesis to the ground-truth mask of maximal IoU when that IoU
/// is strictly above 0.5.
inline FrameMatching match_frame(std::span<const Mask> gt, std::span<const Mask> hyps) {
    require_nonoverlapping(gt, "ground-truth");
    require_nonoverlapping(hyps, "hypothesis");
    FrameMatching out;
    std::vector<bool> gt_taken(gt.size(), false);
    for (std::size_t h = 0; h < hyps.size(); ++h) {
        std::optional<std::size_t> best;
        Overlap best_overlap;
        for (std::size_t g = 0; g < gt.size(); ++g) {
            const Overlap ov = overlap(hyps[h], gt[g]);
            if (ov.exceeds_half()) {
                best = g;
                best_overlap = ov;
                break;  // at most one mask can exceed 0.5
            }
        }
        if (best) {
            if (gt_taken[*best]) throw ConstraintError("two hypotheses exceed IoU 0.5 with one ground-truth mask");
            gt_taken[*best] = true;
            out.pairs.push_back({h, *best, best_overlap.iou()});
        } else {
            out.unmatched_hyps.push_back(h);
        }
    }
    for (std::size_t g = 0; g < gt.size(); ++g) {
        if (!gt_taken[g]) out.unmatched_gt.push_back(g);
    }
    return out;
}

/// Indices into `unmatched_hyps` that stay counted as false positives. A
/// hypothesis is dropped when more than `coverage_threshold` of its pixels lie
/// inside the union of the ignore regions.
inline std::vector<std::size_t> apply_ignore(std::span<const Mask> unmatched_hyps, std::span<const Mask> ignore_masks,
                                             double coverage_threshold = 0.5) {
    if (!(coverage_threshold > 0.0 && coverage_threshold <= 1.0)) {
        throw ConstraintError("ignore coverage threshold must lie in (0, 1]");
    }
    std::vector<std::size_t> retained;
    if (ignore_masks.empty()) {
        for (std::size_t i = 0; i < unmatched_hyps.size(); ++i) retained.push_back(i);
        return retained;
    }
    Mask region = ignore_masks.front();
    for (std::size_t i = 1; i < ignore_masks.size(); ++i) region = unite(region, ignore_masks[i]);
    for (std::size_t i = 0; i < unmatched_hyps.size(); ++i) {
        const Mask& h = unmatched_hyps[i];
        const PixelCount covered = intersection_count(h, region);
        const bool ignored = h.area() > 0 && double(covered) / double(h.area()) > coverage_threshold;
        if (!ignored) retained.push_back(i);
    }
    return retained;
}

/// Matching of one frame plus the track ids of both sides, indexed like the
/// mask lists that produced the matching.
struct FrameIdentities {
    FrameMatching matching;
    std::vector<int> gt_ids;
    std::vector<int> hyp_ids;
};

struct IdSwitch {
    int frame = 0;
    int gt_id = 0;

    friend bool operator==(const IdSwitch&, const IdSwitch&) = default;
};

struct IdSwitchResult {
    std::uint64_t count = 0;
    std::vector<IdSwitch> switches;
};

/// `frames` must be in ascending frame order.
inline IdSwitchResult count_id_switches(std::span<const FrameIdentities> frames,
                                        IdSwitchMode mode = IdSwitchMode::motchallenge) {
    struct History {
        bool has_match = false;
        int last_hyp = 0;
        bool previous_matched = false;
    };
    std::unordered_map<int, History> history;
    IdSwitchResult result;
    for (const auto& f : frames) {
        std::vector<std::optional<int>> hyp_of_gt(f.gt_ids.size());
        for (const auto& p : f.matching.pairs) hyp_of_gt[p.gt] = f.hyp_ids[p.hyp];
        for (std::size_t g = 0; g < f.gt_ids.size(); ++g) {
            History& hist = history[f.gt_ids[g]];
            const auto& hyp = hyp_of_gt[g];
            if (hyp) {
                const bool has_predecessor =
                    mode == IdSwitchMode::motchallenge ? hist.has_match : hist.previous_matched;
                if (has_predecessor && hist.last_hyp != *hyp) {
                    ++result.count;
                    result.switches.push_back({f.matching.frame, f.gt_ids[g]});
                }
                hist.has_match = true;
                hist.last_hyp = *hyp;
            }
            hist.previous_matched = hyp.has_value();
        }
    }
    return result;
}

inline double soft_tp(std::span<const FrameMatching> matchings) {
    double total = 0.0;
    for (const auto& m : matchings) {
        for (const auto& p : m.pairs) total += p.iou;
    }
    return total;
}

inline Metrics compute_metrics(const MetricCounts& c) {
    Metrics m;
    if (c.num_gt > 0) {
        const double gt = double(c.num_gt);
        m.motsa = (double(c.num_tp) - double(c.num_fp) - double(c.num_ids)) / gt;
        m.smotsa = (c.soft_tp - double(c.num_fp) - double(c.num_ids)) / gt;
    }
    if (c.num_tp > 0) m.motsp = c.soft_tp / double(c.num_tp);
    return m;
}

/// 1 - (FN + FP + IDS) / |M| and (TP - FP - IDS) / |M| have equal numerators.
inline bool motsa_forms_agree(const MetricCounts& c) {
    const auto gt = static_cast<std::int64_t>(c.num_gt);
    const auto lhs = gt - static_cast<std::int64_t>(c.num_fn + c.num_fp + c.num_ids);
    const auto rhs = static_cast<std::int64_t>(c.num_tp) - static_cast<std::int64_t>(c.num_fp + c.num_ids);
    return lhs == rhs;
}

inline MetricCounts aggregate(std::span<const MetricCounts> reports) {
    MetricCounts total;
    for (const auto& r : reports) total += r;
    return total;
}

struct SequenceEvaluation {
    MetricCounts counts;
    std::vector<FrameIdentities> frames;
    std::vector<IdSwitch> id_switches;
};

/// Full evaluation of one class of one sequence, keeping the per-frame detail.
inline SequenceEvaluation evaluate_sequence_detailed(const SequenceGroundTruth& gt, const TrackSet& hyps, int class_id,
                                                     const EvalOptions& options = {}) {
    std::set<int> frame_ids;
    for (const auto& [f, _] : gt.frames) frame_ids.insert(f);
    for (const auto& [f, _] : hyps.frames) frame_ids.insert(f);

    static const FrameAnnotations kNoAnnotations;
    SequenceEvaluation out;
    MetricCounts& c = out.counts;
    for (int frame : frame_ids) {
        const auto git = gt.frames.find(frame);
        const auto hit = hyps.frames.find(frame);
        const FrameAnnotations& gf = git != gt.frames.end() ? git->second : kNoAnnotations;
        const FrameAnnotations& hf = hit != hyps.frames.end() ? hit->second : kNoAnnotations;

        FrameIdentities ident;
        std::vector<Mask> gt_masks;
        std::vector<Mask> hyp_masks;
        for (const auto* o : objects_of_class(gf, class_id)) {
            gt_masks.push_back(o->mask);
            ident.gt_ids.push_back(o->object_id);
        }
        for (const auto* o : objects_of_class(hf, class_id)) {
            hyp_masks.push_back(o->mask);
            ident.hyp_ids.push_back(o->object_id);
        }
        ident.matching = match_frame(gt_masks, hyp_masks);
        ident.matching.frame = frame;

        std::vector<Mask> unmatched;
        for (auto h : ident.matching.unmatched_hyps) unmatched.push_back(hyp_masks[h]);
        std::vector<Mask> ignore;
        for (const auto& r : gf.ignore_regions) ignore.push_back(r.mask);
        const auto retained = apply_ignore(unmatched, ignore, options.ignore_threshold);

        c.num_gt += gt_masks.size();
        c.num_tp += ident.matching.pairs.size();
        c.num_fn += ident.matching.unmatched_gt.size();
        c.num_fp += retained.size();
        c.num_ignored += unmatched.size() - retained.size();
        for (const auto& p : ident.matching.pairs) c.soft_tp += p.iou;
        out.frames.push_back(std::move(ident));
    }
    auto ids = count_id_switches(out.frames, options.id_switch_mode);
    c.num_ids = ids.count;
    out.id_switches = std::move(ids.switches);
    if (c.num_tp + c.num_fn != c.num_gt) throw Error("internal: |TP| + |FN| != |M|");
    return out;
}

inline MetricCounts evaluate_sequence(const SequenceGroundTruth& gt, const TrackSet& hyps, int class_id,
                                      const EvalOptions& options = {}) {
    return evaluate_sequence_detailed(gt, hyps, class_id, options).counts;
}


/// Counts per sequence and class; aggregates are recomputed from summed counts.
struct MetricReport {
    std::map<std::string, std::map<int, MetricCounts>> sequences;

    std::map<int, MetricCounts> by_class() const {
        std::map<int, MetricCounts> out;
        for (const auto& [name, classes] : sequences) {
            for (const auto& [cls, counts] : classes) out[cls] += counts;
        }
        return out;
    }

    MetricCounts overall() const {
        MetricCounts total;
        for (const auto& [cls, counts] : by_class()) total += counts;
        return total;
    }
};

} // namespace mots
