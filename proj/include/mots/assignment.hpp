#pragma once

// Rectangular assignment among feasible cells.
//
// The objective is lexicographic: first the number of matched feasible pairs
// is maximized, then their total cost is minimized. Among optimal assignments
// the one whose row-to-column vector is lexicographically smallest wins, with
// "unassigned" ranking after every column.

#include <mots/association.hpp>
#include <mots/errors.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

namespace mots {

struct Assignment {
    std::vector<int> row_to_col;  // -1 when the row is unassigned
    std::size_t matched = 0;
    double total_cost = 0.0;      // summed in ascending row order

    friend bool operator==(const Assignment&, const Assignment&) = default;
};

namespace detail {

// Cost in an ordered group: compare match count (negated) first, then cost.
struct LexCost {
    std::int64_t count = 0;
    double cost = 0.0;

    LexCost operator+(const LexCost& o) const { return {count + o.count, cost + o.cost}; }
    LexCost operator-(const LexCost& o) const { return {count - o.count, cost - o.cost}; }
    LexCost& operator+=(const LexCost& o) { return *this = *this + o; }
    LexCost& operator-=(const LexCost& o) { return *this = *this - o; }
    bool operator<(const LexCost& o) const { return count != o.count ? count < o.count : cost < o.cost; }
};

struct HungarianResult {
    std::vector<int> col_of_row;
    std::vector<LexCost> row_potential;  // u, indexed from 1
    std::vector<LexCost> col_potential;  // v, indexed from 1
};

// Minimum of sum(cells) over perfect matchings of an n x n matrix (row-major),
// Hungarian method with potentials. On return a[i][j] - u[i] - v[j] >= 0 with
// equality on the matching.
inline HungarianResult hungarian(const std::vector<LexCost>& a, std::size_t n) {
    const LexCost inf{std::int64_t{1} << 40, 0.0};
    std::vector<LexCost> u(n + 1), v(n + 1);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<LexCost> minv(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = p[j0];
            LexCost delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const LexCost cur = a[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    HungarianResult r;
    r.col_of_row.assign(n, -1);
    for (std::size_t j = 1; j <= n; ++j) {
        if (p[j] != 0) r.col_of_row[p[j] - 1] = int(j - 1);
    }
    r.row_potential = std::move(u);
    r.col_potential = std::move(v);
    return r;
}

// Square lexicographic cost matrix of the sub-problem on the given rows and
// columns; padding and infeasible cells cost nothing and mean "unassigned".
inline std::vector<LexCost> sub_matrix(const CostMatrix& m, const std::vector<std::size_t>& rows,
                                       const std::vector<std::size_t>& cols, std::size_t n) {
    std::vector<LexCost> a(n * n);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < cols.size(); ++c) {
            if (m.is_feasible(rows[r], cols[c])) a[r * n + c] = {-1, m.at(rows[r], cols[c])};
        }
    }
    return a;
}

// Optimal (count, cost) of the sub-problem restricted to the given rows and columns.
inline LexCost optimal_value(const CostMatrix& m, const std::vector<std::size_t>& rows,
                             const std::vector<std::size_t>& cols) {
    const std::size_t n = std::max(rows.size(), cols.size());
    if (n == 0) return {};
    const auto a = sub_matrix(m, rows, cols, n);
    const auto h = hungarian(a, n);
    LexCost total;
    for (std::size_t r = 0; r < n; ++r) total += a[r * n + std::size_t(h.col_of_row[r])];
    return total;
}

inline double tolerance_for(double scale) { return 1e-9 * std::max(1.0, std::fabs(scale)); }

inline bool same_value(const LexCost& a, const LexCost& b) {
    return a.count == b.count && std::fabs(a.cost - b.cost) <= tolerance_for(std::max(std::fabs(a.cost), std::fabs(b.cost)));
}

} // namespace detail

inline Assignment solve_assignment(const CostMatrix& m) {
    Assignment result;
    result.row_to_col.assign(m.rows, -1);
    double scale = 0.0;
    for (std::size_t i = 0; i < m.rows; ++i) {
        for (std::size_t j = 0; j < m.cols; ++j) {
            if (!m.is_feasible(i, j)) continue;
            if (!std::isfinite(m.at(i, j))) throw ConstraintError("feasible assignment cell has a non-finite cost");
            scale += std::fabs(m.at(i, j));
        }
    }
    const double tol = detail::tolerance_for(scale);

    // Rows are fixed in ascending order. Each row takes the smallest column
    // that keeps the global optimum reachable; only columns with zero reduced
    // cost under the current optimal potentials can qualify.
    std::vector<std::size_t> free_rows;
    std::vector<std::size_t> free_cols;
    for (std::size_t i = 0; i < m.rows; ++i) free_rows.push_back(i);
    for (std::size_t j = 0; j < m.cols; ++j) free_cols.push_back(j);
    std::optional<detail::LexCost> best;
    detail::LexCost fixed;
    for (std::size_t i = 0; i < m.rows; ++i) {
        const std::size_t n = std::max(free_rows.size(), free_cols.size());
        const auto a = detail::sub_matrix(m, free_rows, free_cols, n);
        const auto h = detail::hungarian(a, n);
        if (!best) {
            best = detail::LexCost{};
            for (std::size_t r = 0; r < n; ++r) *best += a[r * n + std::size_t(h.col_of_row[r])];
            if (best->count == 0) return result;
        }
        // Row i is the first free row (index 0 of the sub-problem).
        const auto current = std::size_t(h.col_of_row[0]);
        std::optional<std::size_t> chosen;
        if (current < free_cols.size() && m.is_feasible(i, free_cols[current])) chosen = current;
        free_rows.erase(free_rows.begin());
        for (std::size_t k = 0; k < free_cols.size(); ++k) {
            if (chosen && k >= *chosen) break;
            if (!m.is_feasible(i, free_cols[k])) continue;
            const detail::LexCost reduced = a[k] - h.row_potential[1] - h.col_potential[k + 1];
            if (reduced.count != 0 || reduced.cost > tol) continue;
            std::vector<std::size_t> rest = free_cols;
            rest.erase(rest.begin() + std::ptrdiff_t(k));
            const detail::LexCost with = fixed + a[k] + detail::optimal_value(m, free_rows, rest);
            if (detail::same_value(with, *best)) {
                chosen = k;
                break;
            }
        }
        if (chosen) {
            const std::size_t j = free_cols[*chosen];
            result.row_to_col[i] = int(j);
            fixed += a[*chosen];
            free_cols.erase(free_cols.begin() + std::ptrdiff_t(*chosen));
        }
    }
    for (std::size_t i = 0; i < m.rows; ++i) {
        if (result.row_to_col[i] >= 0) {
            ++result.matched;
            result.total_cost += m.at(i, std::size_t(result.row_to_col[i]));
        }
    }
    return result;
}

} // namespace mots
