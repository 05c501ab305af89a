#pragma once

// Per-class random search over the tracker thresholds (gamma, beta, delta),
// maximizing sMOTSA (or MOTSA) summed over a set of training sequences.
//
// Sampling is reproducible across platforms: iteration i draws from a
// std::mt19937_64 seeded with splitmix64(seed + i), and raw 64-bit outputs are
// mapped to parameters by the fixed rules in ParameterRange and SearchSpace.

#include <mots/association.hpp>
#include <mots/errors.hpp>
#include <mots/metrics.hpp>
#include <mots/sequence.hpp>
#include <mots/tracker.hpp>

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace mots {

enum class Objective { smotsa, motsa };

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Closed interval, continuous when step == 0, otherwise the grid lo, lo + step, ... <= hi.
struct ParameterRange {
    double lo = 0.0;
    double hi = 0.0;
    double step = 0.0;

    void validate(const char* name) const {
        if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi) {
            throw ConstraintError(std::string(name) + " range must be a finite, non-empty interval");
        }
        if (!(step >= 0.0) || !std::isfinite(step)) throw ConstraintError(std::string(name) + " step must be >= 0");
    }

    std::size_t grid_size() const {
        if (step == 0.0) return 0;
        return std::size_t(std::floor((hi - lo) / step + 1e-9)) + 1;
    }

    std::vector<double> grid() const {
        std::vector<double> out;
        for (std::size_t k = 0; k < grid_size(); ++k) out.push_back(lo + double(k) * step);
        return out;
    }

    /// Continuous: lo + u (hi - lo) with u the top 53 bits scaled to [0, 1).
    /// Grid: index raw mod grid_size().
    double sample(std::uint64_t raw) const {
        if (step > 0.0) return lo + double(raw % grid_size()) * step;
        const double u = double(raw >> 11) * 0x1.0p-53;
        return lo + u * (hi - lo);
    }
};

struct SearchSpace {
    Mechanism mechanism = Mechanism::embedding;
    ParameterRange gamma{0.0, 1.0, 0.0};
    int beta_min = 1;
    int beta_max = 30;
    ParameterRange delta{0.0, 20.0, 0.0};
    int iterations = 1000;
    std::uint64_t seed = 0;
    Objective objective = Objective::smotsa;

    /// Default ranges per mechanism. Center distances range up to the image diagonal.
    static SearchSpace defaults(Mechanism m, double image_diagonal = 0.0) {
        SearchSpace s;
        s.mechanism = m;
        if (adjacent_only(m)) s.beta_max = 1;
        switch (m) {
        case Mechanism::embedding: s.delta = {0.0, 20.0, 0.0}; break;
        case Mechanism::mask_iou:
        case Mechanism::bbox_iou: s.delta = {0.0, 1.0, 0.0}; break;
        case Mechanism::bbox_center: s.delta = {0.0, image_diagonal, 0.0}; break;
        }
        return s;
    }

    void validate() const {
        gamma.validate("gamma");
        delta.validate("delta");
        if (gamma.lo < 0.0 || gamma.hi > 1.0) throw ConstraintError("gamma range must lie in [0, 1]");
        if (beta_min < 1 || beta_min > beta_max) throw ConstraintError("beta range must be a non-empty interval >= 1");
        if (adjacent_only(mechanism) && beta_max != 1) {
            throw ConstraintError(std::string("mechanism ") + std::string(mechanism_name(mechanism)) + " requires beta = 1");
        }
        if (iterations < 1) throw ConstraintError("iterations must be >= 1");
        AssociationMechanism{mechanism, delta.lo}.validate();
        AssociationMechanism{mechanism, delta.hi}.validate();
    }

    /// Config drawn at iteration i: gamma, beta, delta in that order.
    TrackerConfig sample(int iteration, int class_id) const {
        std::mt19937_64 engine(splitmix64(seed + std::uint64_t(iteration)));
        TrackerConfig c;
        c.class_id = class_id;
        c.gamma = gamma.sample(engine());
        c.beta = beta_min + int(engine() % std::uint64_t(beta_max - beta_min + 1));
        c.mechanism = {mechanism, delta.sample(engine())};
        return c;
    }
};

struct TrainingSequence {
    std::string name;
    SequenceGroundTruth gt;
    DetectionSequence detections;
    FlowProvider flow = no_flow();
};

struct TraceEntry {
    int iteration = 0;
    TrackerConfig config;
    std::optional<double> score;
};

struct TuneResult {
    TrackerConfig best;
    double best_score = 0.0;
    MetricCounts best_counts;
    std::vector<TraceEntry> trace;
};

/// Detections of one class only, so that other classes cannot influence the result.
inline DetectionSequence detections_of_class(const DetectionSequence& dets, int class_id) {
    DetectionSequence out;
    for (const auto& [frame, list] : dets) {
        for (const auto& d : list) {
            if (d.class_id == class_id) out[frame].push_back(d);
        }
    }
    return out;
}

/// Tracks every sequence with `config` and sums the class counts.
inline MetricCounts evaluate_config(std::span<const TrainingSequence> sequences, const TrackerConfig& config,
                                    const EvalOptions& options = {}) {
    MetricCounts total;
    const std::vector<TrackerConfig> configs{config};
    for (const auto& seq : sequences) {
        const auto own = detections_of_class(seq.detections, config.class_id);
        const TrackSet tracks = run_tracker(own, configs, seq.flow);
        total += evaluate_sequence(seq.gt, tracks, config.class_id, options);
    }
    return total;
}

inline std::optional<double> objective_value(const MetricCounts& counts, Objective objective) {
    const Metrics m = compute_metrics(counts);
    return objective == Objective::smotsa ? m.smotsa : m.motsa;
}

inline TuneResult random_search(std::span<const TrainingSequence> sequences, const SearchSpace& space, int class_id,
                                const EvalOptions& options = {}) {
    space.validate();
    TuneResult result;
    std::optional<double> best;
    for (int i = 0; i < space.iterations; ++i) {
        TraceEntry entry{i, space.sample(i, class_id), std::nullopt};
        const MetricCounts counts = evaluate_config(sequences, entry.config, options);
        entry.score = objective_value(counts, space.objective);
        if (entry.score && (!best || *entry.score > *best)) {
            best = entry.score;
            result.best = entry.config;
            result.best_counts = counts;
        }
        result.trace.push_back(entry);
    }
    if (!best) {
        throw ConstraintError("objective is undefined for every sample: no ground truth of class " + class_name(class_id));
    }
    result.best_score = *best;
    return result;
}

inline std::string_view objective_name(Objective o) { return o == Objective::smotsa ? "smotsa" : "motsa"; }

/// CSV with header `iteration,gamma,beta,delta,<objective>`; undefined scores are `null`.
inline std::string write_trace(std::span<const TraceEntry> trace, Objective objective = Objective::smotsa) {
    auto num = [](double v) {
        std::array<char, 64> buf{};
        const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
        return std::string(buf.data(), ptr);
    };
    std::ostringstream out;
    out << "iteration,gamma,beta,delta," << objective_name(objective) << '\n';
    for (const auto& e : trace) {
        out << e.iteration << ',' << num(e.config.gamma) << ',' << e.config.beta << ','
            << num(e.config.mechanism.threshold) << ',' << (e.score ? num(*e.score) : std::string("null")) << '\n';
    }
    return out.str();
}

} // namespace mots
