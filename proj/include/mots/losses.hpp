#pragma once

// Association losses over labeled embedding batches: batch-hard triplet,
// batch-all triplet and contrastive, with analytic gradients.

#include <mots/errors.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace mots {

struct LabeledEmbeddings {
    std::vector<std::vector<double>> vectors;
    std::vector<int> ids;
    double margin = 0.2;

    void validate() const {
        if (vectors.empty()) throw ConstraintError("embedding batch is empty");
        if (vectors.size() != ids.size()) throw ConstraintError("embedding and id lists differ in length");
        if (!(margin > 0.0) || !std::isfinite(margin)) throw ConstraintError("margin must be positive");
        for (const auto& v : vectors) {
            if (v.size() != vectors.front().size()) throw DimensionError("embeddings differ in dimension");
            for (double x : v) {
                if (!std::isfinite(x)) throw ConstraintError("embedding contains a non-finite value");
            }
        }
    }
};

enum class LossKind { batch_hard, batch_all, contrastive };

/// The printed batch-all expression compares a distance with itself and so
/// reduces to the margin; `as_printed` evaluates it literally.
enum class BatchAllForm { triplets, as_printed };

namespace detail {

inline std::vector<double> pairwise_distances(const LabeledEmbeddings& data) {
    const std::size_t n = data.vectors.size();
    std::vector<double> d(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < data.vectors[i].size(); ++k) {
                const double diff = data.vectors[i][k] - data.vectors[j][k];
                s += diff * diff;
            }
            d[i * n + j] = d[j * n + i] = std::sqrt(s);
        }
    }
    return d;
}

struct HardPair {
    std::size_t positive = 0;
    std::size_t negative = 0;
    bool valid = false;
    bool tied = false;  // another positive or negative is equally hard
};

// Hardest positive (max distance, lowest index on ties) and hardest negative
// (min distance, lowest index on ties) of an anchor.
inline HardPair hardest(const LabeledEmbeddings& data, const std::vector<double>& d, std::size_t a, double tol) {
    const std::size_t n = data.vectors.size();
    HardPair hp;
    bool has_pos = false;
    bool has_neg = false;
    for (std::size_t e = 0; e < n; ++e) {
        if (e == a) continue;
        const double de = d[a * n + e];
        if (data.ids[e] == data.ids[a]) {
            if (!has_pos || de > d[a * n + hp.positive]) {
                hp.positive = e;
                has_pos = true;
            }
        } else if (!has_neg || de < d[a * n + hp.negative]) {
            hp.negative = e;
            has_neg = true;
        }
    }
    hp.valid = has_pos && has_neg;
    if (!hp.valid) return hp;
    for (std::size_t e = 0; e < n; ++e) {
        if (e == a) continue;
        const double de = d[a * n + e];
        if (data.ids[e] == data.ids[a] && e != hp.positive && std::fabs(de - d[a * n + hp.positive]) <= tol) hp.tied = true;
        if (data.ids[e] != data.ids[a] && e != hp.negative && std::fabs(de - d[a * n + hp.negative]) <= tol) hp.tied = true;
    }
    return hp;
}

} // namespace detail

/// Mean over anchors that have both a positive and a negative of
/// max(hardest positive distance - hardest negative distance + margin, 0).
inline double batch_hard_loss(const LabeledEmbeddings& data) {
    data.validate();
    const auto d = detail::pairwise_distances(data);
    const std::size_t n = data.vectors.size();
    double sum = 0.0;
    std::size_t anchors = 0;
    for (std::size_t a = 0; a < n; ++a) {
        const auto hp = detail::hardest(data, d, a, 0.0);
        if (!hp.valid) continue;
        ++anchors;
        sum += std::max(d[a * n + hp.positive] - d[a * n + hp.negative] + data.margin, 0.0);
    }
    if (anchors == 0) throw UndefinedLossError("batch-hard loss: no anchor has both a positive and a negative");
    return sum / double(anchors);
}

/// Mean hinge over every (anchor, positive, negative) triplet.
inline double batch_all_loss(const LabeledEmbeddings& data, BatchAllForm form = BatchAllForm::triplets) {
    data.validate();
    const std::size_t n = data.vectors.size();
    const auto d = detail::pairwise_distances(data);
    if (form == BatchAllForm::as_printed) {
        double sum = 0.0;
        for (std::size_t a = 0; a < n; ++a) {
            for (std::size_t e = 0; e < n; ++e) sum += std::max(d[a * n + e] - d[a * n + e] + data.margin, 0.0);
        }
        return sum / double(n * n);
    }
    double sum = 0.0;
    std::size_t triplets = 0;
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t p = 0; p < n; ++p) {
            if (p == a || data.ids[p] != data.ids[a]) continue;
            for (std::size_t q = 0; q < n; ++q) {
                if (data.ids[q] == data.ids[a]) continue;
                ++triplets;
                sum += std::max(d[a * n + p] - d[a * n + q] + data.margin, 0.0);
            }
        }
    }
    if (triplets == 0) throw UndefinedLossError("batch-all loss: no valid triplet");
    return sum / double(triplets);
}

/// Squared distances for same-id pairs, squared hinge max(margin - distance, 0)
/// for different-id pairs, over all ordered pairs, divided by |D|^2.
inline double contrastive_loss(const LabeledEmbeddings& data) {
    data.validate();
    const std::size_t n = data.vectors.size();
    const auto d = detail::pairwise_distances(data);
    double sum = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t e = 0; e < n; ++e) {
            const double de = d[a * n + e];
            if (data.ids[a] == data.ids[e]) {
                sum += de * de;
            } else {
                const double h = std::max(data.margin - de, 0.0);
                sum += h * h;
            }
        }
    }
    return sum / double(n * n);
}

inline double loss_value(LossKind kind, const LabeledEmbeddings& data) {
    switch (kind) {
    case LossKind::batch_hard: return batch_hard_loss(data);
    case LossKind::batch_all: return batch_all_loss(data);
    case LossKind::contrastive: return contrastive_loss(data);
    }
    return 0.0;
}

struct LossGradient {
    std::vector<std::vector<double>> gradients;  // one per input vector
    bool smooth = true;  // false at hinge kinks, hard-selection ties or zero distances
    std::string reason;
};

/// Analytic gradient with respect to every vector. At non-differentiable
/// points a subgradient is returned (ties resolved towards the lowest index)
/// and the result is flagged. `tolerance` widens the kink/tie tests.
inline LossGradient loss_gradient(LossKind kind, const LabeledEmbeddings& data, double tolerance = 1e-12) {
    data.validate();
    const std::size_t n = data.vectors.size();
    const std::size_t dim = data.vectors.front().size();
    const auto d = detail::pairwise_distances(data);
    const auto& x = data.vectors;
    LossGradient out;
    out.gradients.assign(n, std::vector<double>(dim, 0.0));
    auto flag = [&](const std::string& why) {
        if (out.smooth) out.reason = why;
        out.smooth = false;
    };
    // Adds scale * d||x_i - x_j|| / dx to x_i and the negation to x_j.
    auto add_distance_grad = [&](std::size_t i, std::size_t j, double scale) {
        const double dist = d[i * n + j];
        if (dist <= tolerance) {
            flag("zero distance inside an active term");
            return;
        }
        for (std::size_t k = 0; k < dim; ++k) {
            const double g = scale * (x[i][k] - x[j][k]) / dist;
            out.gradients[i][k] += g;
            out.gradients[j][k] -= g;
        }
    };

    switch (kind) {
    case LossKind::batch_hard: {
        std::vector<detail::HardPair> pairs(n);
        std::size_t anchors = 0;
        for (std::size_t a = 0; a < n; ++a) {
            pairs[a] = detail::hardest(data, d, a, tolerance);
            if (pairs[a].valid) ++anchors;
        }
        if (anchors == 0) throw UndefinedLossError("batch-hard loss: no anchor has both a positive and a negative");
        const double s = 1.0 / double(anchors);
        for (std::size_t a = 0; a < n; ++a) {
            const auto& hp = pairs[a];
            if (!hp.valid) continue;
            const double h = d[a * n + hp.positive] - d[a * n + hp.negative] + data.margin;
            if (std::fabs(h) <= tolerance) flag("hinge kink at anchor " + std::to_string(a));
            if (h < -tolerance) continue;
            if (hp.tied) flag("hard example tie at anchor " + std::to_string(a));
            if (h <= 0.0) continue;
            add_distance_grad(a, hp.positive, s);
            add_distance_grad(a, hp.negative, -s);
        }
        break;
    }
    case LossKind::batch_all: {
        std::size_t triplets = 0;
        for (std::size_t a = 0; a < n; ++a) {
            for (std::size_t p = 0; p < n; ++p) {
                if (p == a || data.ids[p] != data.ids[a]) continue;
                for (std::size_t q = 0; q < n; ++q) {
                    if (data.ids[q] != data.ids[a]) ++triplets;
                }
            }
        }
        if (triplets == 0) throw UndefinedLossError("batch-all loss: no valid triplet");
        const double s = 1.0 / double(triplets);
        for (std::size_t a = 0; a < n; ++a) {
            for (std::size_t p = 0; p < n; ++p) {
                if (p == a || data.ids[p] != data.ids[a]) continue;
                for (std::size_t q = 0; q < n; ++q) {
                    if (data.ids[q] == data.ids[a]) continue;
                    const double h = d[a * n + p] - d[a * n + q] + data.margin;
                    if (std::fabs(h) <= tolerance) flag("hinge kink at triplet (" + std::to_string(a) + "," +
                                                        std::to_string(p) + "," + std::to_string(q) + ")");
                    if (h <= 0.0) continue;
                    add_distance_grad(a, p, s);
                    add_distance_grad(a, q, -s);
                }
            }
        }
        break;
    }
    case LossKind::contrastive: {
        const double s = 1.0 / double(n * n);
        for (std::size_t a = 0; a < n; ++a) {
            for (std::size_t e = 0; e < n; ++e) {
                if (a == e) continue;
                if (data.ids[a] == data.ids[e]) {
                    // d(D^2)/dx_e = 2 (x_e - x_a)
                    for (std::size_t k = 0; k < dim; ++k) {
                        const double g = 2.0 * s * (x[e][k] - x[a][k]);
                        out.gradients[e][k] += g;
                        out.gradients[a][k] -= g;
                    }
                } else {
                    const double de = d[a * n + e];
                    if (de >= data.margin) continue;
                    // d(margin - D)^2/dx_e = -2 (margin - D) dD/dx_e
                    add_distance_grad(e, a, -2.0 * s * (data.margin - de));
                }
            }
        }
        break;
    }
    }
    return out;
}

} // namespace mots
