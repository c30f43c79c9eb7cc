#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace flowcouple {

// B x B nonnegative cost entries; +infinity is represented by kInfCost.
using CostMatrix = Eigen::MatrixXd;

// Finite sentinel standing in for +infinity. Genuine costs must stay well
// below it; matched sentinel edges are reported as infeasible.
inline constexpr double kInfCost = 1e12;

inline double saturating_add(double a, double b) { return std::min(a + b, kInfCost); }

struct Assignment {
    std::vector<int> col_of_row;  // permutation j[i]
    double total_cost = 0.0;
};

class InfeasibleAssignment : public std::runtime_error {
public:
    explicit InfeasibleAssignment(const std::string& what) : std::runtime_error(what) {}
};

// Jonker-Volgenant-style exact LAP in O(n^3): column reduction and budgeted
// auction passes (epsilon-scaled row reduction) build near-optimal column
// duals cheaply, then one shortest augmenting path (dense Dijkstra over the
// duals) per row not already provably optimal. The auction phases are pure
// accelerators; every assignment they leave behind is re-verified against an
// exact argmin before the augmentation phase, which carries correctness.
// The cost functor is called as cost(i, j) -> double and may compute entries
// on the fly; entries >= kInfCost mean "forbidden". Ties during augmentation
// resolve to the lowest column index, so the result is deterministic for a
// fixed input.
template <class CostFn>
Assignment solve_lap(int n, CostFn&& cost) {
    if (n < 1) throw std::invalid_argument("solve_lap: n must be >= 1");

    std::vector<double> v(n, 0.0);
    std::vector<int> col_of_row(n, -1), row_of_col(n, -1);

    // ---- column reduction: v[j] = column minimum, argmin row assigned if free
    double cost_scale = 0.0;
    for (int j = n - 1; j >= 0; --j) {
        int best_i = 0;
        double best = cost(0, j);
        for (int i = 1; i < n; ++i) {
            const double c = cost(i, j);
            if (c < best) {
                best = c;
                best_i = i;
            }
        }
        v[j] = best;
        if (best < kInfCost) cost_scale = std::max(cost_scale, std::abs(best));
        if (col_of_row[best_i] < 0 && best < kInfCost) {
            col_of_row[best_i] = j;
            row_of_col[j] = best_i;
        }
    }

    std::vector<int> free_rows;
    for (int i = 0; i < n; ++i)
        if (col_of_row[i] < 0) free_rows.push_back(i);

    // ---- auction passes: each free row bids for its cheapest column,
    // lowering that column's dual to the second-best level plus the current
    // slack eps and displacing the previous owner. Epsilon scaling makes the
    // duals converge quickly on geometric cost surfaces where plain row
    // reduction stalls; the final pass runs with eps = 0.
    if (!free_rows.empty() && n > 2) {
        double eps0 = cost_scale > 0.0 ? cost_scale / 8.0 : 1.0;
        std::vector<double> epsilons{0.0};
        for (double e = eps0 * 1e-9; e <= eps0; e *= 8.0) epsilons.push_back(e);

        while (!epsilons.empty()) {
            const double eps = epsilons.back();
            epsilons.pop_back();
            long budget = 24L * n;
            size_t idx = 0;
            std::vector<int> deferred;
            while (idx < free_rows.size()) {
                if (--budget < 0) break;
                const int i = free_rows[idx++];
                double v1 = std::numeric_limits<double>::infinity();
                double v2 = std::numeric_limits<double>::infinity();
                int j1 = -1, j2 = -1;
                for (int j = 0; j < n; ++j) {
                    const double r = cost(i, j) - v[j];
                    if (r < v2) {
                        if (r < v1) {
                            v2 = v1;
                            j2 = j1;
                            v1 = r;
                            j1 = j;
                        } else {
                            v2 = r;
                            j2 = j;
                        }
                    }
                }
                // lowering by a sentinel-sized gap would wreck the dual scale
                const double gap = v2 - v1;
                const bool lowers = (gap > 0.0 || eps > 0.0) && gap < kInfCost / 2;
                int target = j1;
                if (lowers) {
                    v[j1] -= gap + eps;
                } else if (row_of_col[j1] >= 0 && j2 >= 0) {
                    target = j2;
                }
                const int displaced = row_of_col[target];
                if (displaced >= 0) {
                    col_of_row[displaced] = -1;
                    if (lowers)
                        free_rows[--idx] = displaced;  // retry immediately
                    else
                        deferred.push_back(displaced);
                }
                col_of_row[i] = target;
                row_of_col[target] = i;
            }
            for (size_t k = idx; k < free_rows.size(); ++k) deferred.push_back(free_rows[k]);
            free_rows = std::move(deferred);
            if (free_rows.empty()) break;
        }
    }

    // ---- exact verification: the augmentation phase requires every assigned
    // column to be a true argmin of its row's reduced costs. Rows the auction
    // left with positive slack are released and re-solved exactly.
    for (int i = 0; i < n; ++i) {
        const int ji = col_of_row[i];
        if (ji < 0) continue;
        const double assigned = cost(i, ji) - v[ji];
        bool optimal = true;
        for (int j = 0; j < n; ++j) {
            if (cost(i, j) - v[j] < assigned) {
                optimal = false;
                break;
            }
        }
        if (!optimal) {
            col_of_row[i] = -1;
            row_of_col[ji] = -1;
        }
    }
    free_rows.clear();
    for (int i = 0; i < n; ++i)
        if (col_of_row[i] < 0) free_rows.push_back(i);

    // ---- shortest augmenting path per remaining free row. Row duals are
    // implicit: u_i = cost(i, j_i) - v[j_i] for the currently assigned column.
    // The working arrays are compacted in lockstep as columns finalize so the
    // hot pick/relax scans stream over contiguous memory.
    std::vector<int> tj(n);       // column id per slot
    std::vector<double> td(n);    // tentative path cost
    std::vector<double> tv(n);    // dual copy
    std::vector<int> tpred(n);    // predecessor row
    std::vector<int> finalized(n);
    std::vector<double> d_final(n);
    std::vector<int> pred_final(n);

    for (const int r : free_rows) {
        for (int j = 0; j < n; ++j) {
            tj[j] = j;
            td[j] = cost(r, j) - v[j];
            tv[j] = v[j];
            tpred[j] = r;
        }
        int n_todo = n;
        int n_final = 0;
        int sink = -1;
        double lambda = 0.0;

        while (sink < 0) {
            // lowest-index tie break keeps the solve deterministic
            int best_pos = -1, best_j = -1;
            double best = std::numeric_limits<double>::infinity();
            for (int pos = 0; pos < n_todo; ++pos) {
                if (td[pos] < best || (td[pos] == best && tj[pos] < best_j)) {
                    best = td[pos];
                    best_pos = pos;
                    best_j = tj[pos];
                }
            }
            if (best_j < 0 || !std::isfinite(best))
                throw InfeasibleAssignment("solve_lap: no augmenting path");
            lambda = best;
            d_final[best_j] = best;
            pred_final[best_j] = tpred[best_pos];
            finalized[n_final++] = best_j;
            --n_todo;
            tj[best_pos] = tj[n_todo];
            td[best_pos] = td[n_todo];
            tv[best_pos] = tv[n_todo];
            tpred[best_pos] = tpred[n_todo];

            if (row_of_col[best_j] < 0) {
                sink = best_j;
                break;
            }
            const int i = row_of_col[best_j];
            const double h = cost(i, best_j) - v[best_j] - lambda;
            for (int pos = 0; pos < n_todo; ++pos) {
                const double nd = cost(i, tj[pos]) - tv[pos] - h;
                if (nd < td[pos]) {
                    td[pos] = nd;
                    tpred[pos] = i;
                }
            }
        }

        for (int k = 0; k < n_final; ++k) {
            const int j = finalized[k];
            v[j] += d_final[j] - lambda;
        }

        // augment along the predecessor chain
        int j = sink;
        while (true) {
            const int i = pred_final[j];
            row_of_col[j] = i;
            const int next = col_of_row[i];
            col_of_row[i] = j;
            if (i == r) break;
            j = next;
        }
    }

    Assignment out;
    out.col_of_row = std::move(col_of_row);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const double c = cost(i, out.col_of_row[i]);
        if (c >= kInfCost)
            throw InfeasibleAssignment("solve_lap: no finite-cost perfect matching");
        total += c;
    }
    out.total_cost = total;
    return out;
}

inline Assignment solve_lap(const CostMatrix& cost) {
    if (cost.rows() != cost.cols()) throw std::invalid_argument("solve_lap: cost must be square");
    // row-major copy: the reduction and relax loops stream along rows
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = cost;
    return solve_lap(static_cast<int>(cost.rows()),
                     [&rm](int i, int j) { return rm(i, j); });
}

// Exhaustive minimum over all n! permutations; the test oracle. n <= 9.
inline Assignment brute_force_lap(const CostMatrix& cost) {
    if (cost.rows() != cost.cols()) throw std::invalid_argument("brute_force_lap: cost must be square");
    const int n = static_cast<int>(cost.rows());
    if (n < 1 || n > 9) throw std::invalid_argument("brute_force_lap: n must be in [1, 9]");

    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    std::vector<int> best_perm;
    double best = std::numeric_limits<double>::infinity();
    do {
        double tot = 0.0;
        bool feasible = true;
        for (int i = 0; i < n; ++i) {
            const double c = cost(i, perm[i]);
            if (c >= kInfCost) {
                feasible = false;
                break;
            }
            tot += c;
        }
        if (feasible && tot < best) {
            best = tot;
            best_perm = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));

    if (best_perm.empty())
        throw InfeasibleAssignment("brute_force_lap: no finite-cost perfect matching");
    Assignment out;
    out.col_of_row = std::move(best_perm);
    out.total_cost = best;
    return out;
}

}  // namespace flowcouple
