// Projected posterior-compatibility diagnostic.
//
// Given a projected student distribution s (length L) and projected teacher
// rows T[z] (one per feedback), solve
//     min_{P in simplex}  || s - T^T P ||_1
// and report the residual plus the prerequisite/consistency metrics. A small
// residual means the two passes could plausibly be conditionals of one joint
// restricted to this subspace; a large one certifies incompatibility.
//
// The L1 program is recast with slack variables u, v >= 0:
//     min 1.(u + v)   s.t.   T^T P + u - v = s,  1.P = 1,  P, u, v >= 0
// and solved by a dense two-phase primal simplex with Bland's rule. A
// projected-subgradient method is kept as a fallback and cross-check.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "credlab/common.hpp"

namespace credlab {
namespace lp {

// min c.x  s.t.  A x = b, x >= 0, with b >= 0. Dense tableau, Bland's rule
// (guaranteed finite). Returns false when infeasible. On success x holds an
// optimal basic solution and basis the optimal basis (column per row).
inline bool solve(const std::vector<std::vector<double>>& A, const std::vector<double>& b,
                  const std::vector<double>& c, std::vector<double>& x, double& obj,
                  std::vector<int>* basis_out = nullptr,
                  std::vector<std::vector<double>>* tableau_out = nullptr) {
    const int m = static_cast<int>(A.size());
    const int n = static_cast<int>(A[0].size());
    const double eps = 1e-9;
    std::vector<std::vector<double>> t(m, std::vector<double>(n + m + 1, 0.0));
    std::vector<int> basis(m);
    for (int i = 0; i < m; ++i) {
        if (b[i] < 0.0) throw Error("lp: negative right-hand side");
        for (int j = 0; j < n; ++j) t[i][j] = A[i][j];
        t[i][n + i] = 1.0;
        t[i][n + m] = b[i];
        basis[i] = n + i;
    }
    const int rhs = n + m;
    auto pivot = [&](int pr, int pc) {
        const double inv = 1.0 / t[pr][pc];
        for (auto& vvv : t[pr]) vvv *= inv;
        t[pr][pc] = 1.0;
        for (int i = 0; i < m; ++i) {
            if (i == pr || t[i][pc] == 0.0) continue;
            const double f = t[i][pc];
            for (int j = 0; j <= rhs; ++j) t[i][j] -= f * t[pr][j];
            t[i][pc] = 0.0;
        }
        basis[pr] = pc;
    };
    // One phase of primal simplex on cost vector `cost` over columns [0, lim).
    auto run = [&](const std::vector<double>& cost, int lim) -> bool {
        std::vector<double> red(rhs + 1, 0.0);
        for (int j = 0; j < static_cast<int>(cost.size()); ++j) red[j] = cost[j];
        for (int i = 0; i < m; ++i) {
            const double cb = basis[i] < static_cast<int>(cost.size()) ? cost[basis[i]] : 0.0;
            if (cb == 0.0) continue;
            for (int j = 0; j <= rhs; ++j) red[j] -= cb * t[i][j];
        }
        for (int iter = 0; iter < 20000; ++iter) {
            int enter = -1;
            for (int j = 0; j < lim; ++j)
                if (red[j] < -eps) {
                    enter = j;
                    break;  // Bland: smallest eligible index
                }
            if (enter < 0) return true;  // optimal
            int leave = -1;
            double best = 0.0;
            for (int i = 0; i < m; ++i) {
                if (t[i][enter] <= eps) continue;
                const double ratio = t[i][rhs] / t[i][enter];
                if (leave < 0 || ratio < best - 1e-15 ||
                    (std::abs(ratio - best) <= 1e-15 && basis[i] < basis[leave])) {
                    leave = i;
                    best = ratio;
                }
            }
            if (leave < 0) return false;  // unbounded (cannot happen here)
            const double f = red[enter];
            pivot(leave, enter);
            for (int j = 0; j <= rhs; ++j) red[j] -= f * t[leave][j];
            red[enter] = 0.0;
        }
        return false;  // iteration guard tripped
    };
    // Phase 1: drive artificials to zero.
    std::vector<double> phase1(n + m, 0.0);
    for (int i = 0; i < m; ++i) phase1[n + i] = 1.0;
    if (!run(phase1, n + m)) return false;
    double art = 0.0;
    for (int i = 0; i < m; ++i)
        if (basis[i] >= n) art += t[i][rhs];
    if (art > 1e-7) return false;  // infeasible
    for (int i = 0; i < m; ++i) {
        if (basis[i] < n) continue;
        for (int j = 0; j < n; ++j)
            if (std::abs(t[i][j]) > eps) {
                pivot(i, j);
                break;
            }
        // A row whose artificial cannot leave is redundant; its basic value is
        // zero and phase 2 never lets an artificial re-enter.
    }
    if (!run(c, n)) return false;
    x.assign(n, 0.0);
    for (int i = 0; i < m; ++i)
        if (basis[i] < n) x[basis[i]] = t[i][rhs];
    obj = 0.0;
    for (int j = 0; j < n; ++j) obj += c[j] * x[j];
    if (basis_out) *basis_out = basis;
    if (tableau_out) *tableau_out = t;
    return true;
}

}  // namespace lp

inline double l1_residual(const std::vector<double>& s,
                          const std::vector<std::vector<double>>& T,
                          const std::vector<double>& P) {
    const std::size_t L = s.size(), Z = T.size();
    double r = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
        double mix = 0.0;
        for (std::size_t z = 0; z < Z; ++z) mix += T[z][l] * P[z];
        r += std::abs(s[l] - mix);
    }
    return r;
}

// Euclidean projection onto the probability simplex (sort-based).
inline std::vector<double> project_simplex(std::vector<double> v) {
    std::vector<double> u = v;
    std::sort(u.begin(), u.end(), std::greater<double>());
    double css = 0.0, theta = 0.0;
    int rho = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        css += u[i];
        const double t = (css - 1.0) / static_cast<double>(i + 1);
        if (u[i] - t > 0.0) {
            rho = static_cast<int>(i + 1);
            theta = t;
        }
    }
    (void)rho;
    for (auto& x : v) x = std::max(0.0, x - theta);
    return v;
}

struct CompatSolution {
    std::vector<double> p_hat;
    double residual = 0.0;
    bool non_unique = false;
};

// Diminishing-step projected subgradient; robust fallback and cross-check.
inline CompatSolution solve_compat_subgradient(const std::vector<double>& s,
                                               const std::vector<std::vector<double>>& T,
                                               int iterations = 100000) {
    const std::size_t L = s.size(), Z = T.size();
    std::vector<double> P(Z, 1.0 / static_cast<double>(Z));
    CompatSolution best{P, l1_residual(s, T, P), false};
    for (int k = 1; k <= iterations; ++k) {
        std::vector<double> g(Z, 0.0);
        for (std::size_t l = 0; l < L; ++l) {
            double mix = 0.0;
            for (std::size_t z = 0; z < Z; ++z) mix += T[z][l] * P[z];
            const double sgn = (s[l] - mix > 0.0) ? -1.0 : (s[l] - mix < 0.0 ? 1.0 : 0.0);
            for (std::size_t z = 0; z < Z; ++z) g[z] += sgn * T[z][l];
        }
        const double step = 1.0 / static_cast<double>(k);
        for (std::size_t z = 0; z < Z; ++z) P[z] -= step * g[z];
        P = project_simplex(std::move(P));
        const double r = l1_residual(s, T, P);
        if (r < best.residual) best = {P, r, false};
    }
    return best;
}

// Exact solve via the linear program. Optimal vertices reachable by
// zero-reduced-cost pivots (bounded exploration) are collected together with
// their centroid -- also optimal, by convexity -- and the mixture of minimal
// Euclidean norm is returned; visiting two optima with distinct mixtures sets
// non_unique.
inline CompatSolution solve_compat(const std::vector<double>& s,
                                   const std::vector<std::vector<double>>& T) {
    const int L = static_cast<int>(s.size());
    const int Z = static_cast<int>(T.size());
    if (Z == 0 || L == 0) throw Error("solve_compat: empty instance");
    for (const auto& row : T)
        if (static_cast<int>(row.size()) != L) throw Error("solve_compat: dimension mismatch");
    const int n = Z + 2 * L;
    std::vector<std::vector<double>> A(L + 1, std::vector<double>(n, 0.0));
    std::vector<double> b(L + 1, 0.0);
    std::vector<double> c(n, 0.0);
    for (int l = 0; l < L; ++l) {
        for (int z = 0; z < Z; ++z) A[l][z] = T[z][l];
        A[l][Z + l] = 1.0;          // u
        A[l][Z + L + l] = -1.0;     // v
        b[l] = s[l];
        c[Z + l] = 1.0;
        c[Z + L + l] = 1.0;
    }
    for (int z = 0; z < Z; ++z) A[L][z] = 1.0;
    b[L] = 1.0;

    std::vector<double> x;
    double obj = 0.0;
    std::vector<int> basis;
    std::vector<std::vector<double>> tableau;
    if (!lp::solve(A, b, c, x, obj, &basis, &tableau)) return solve_compat_subgradient(s, T);

    auto clean_p = [&](const std::vector<double>& raw) {
        std::vector<double> P(raw.begin(), raw.begin() + Z);
        double sum = 0.0;
        for (auto& p : P) {
            p = std::max(0.0, p);
            sum += p;
        }
        if (sum <= 0.0) throw Error("solve_compat: degenerate mixture");
        for (auto& p : P) p /= sum;
        return P;
    };

    // Explore alternate optima: pivot on nonbasic columns with zero reduced
    // cost and collect the mixtures of the visited vertices.
    std::vector<std::vector<double>> candidates{clean_p(x)};
    {
        const int m = L + 1, rhs = n + m;
        std::vector<double> red(rhs + 1, 0.0);
        for (int j = 0; j < n; ++j) red[j] = c[j];
        for (int i = 0; i < m; ++i) {
            const double cb = basis[i] < n ? c[basis[i]] : 0.0;
            if (cb == 0.0) continue;
            for (int j = 0; j <= rhs; ++j) red[j] -= cb * tableau[i][j];
        }
        std::set<std::vector<int>> seen;
        {
            auto key = basis;
            std::sort(key.begin(), key.end());
            seen.insert(key);
        }
        std::vector<std::pair<std::vector<std::vector<double>>, std::vector<int>>> frontier{
            {tableau, basis}};
        const std::size_t cap = 64;
        for (std::size_t fi = 0; fi < frontier.size() && seen.size() < cap; ++fi) {
            auto [tab, bas] = frontier[fi];
            for (int enter = 0; enter < n && seen.size() < cap; ++enter) {
                if (std::abs(red[enter]) > 1e-9) continue;
                bool basic = false;
                for (int i = 0; i < m; ++i) basic = basic || bas[i] == enter;
                if (basic) continue;
                int leave = -1;
                double best = 0.0;
                for (int i = 0; i < m; ++i) {
                    if (tab[i][enter] <= 1e-9) continue;
                    const double ratio = tab[i][rhs] / tab[i][enter];
                    if (leave < 0 || ratio < best - 1e-15 ||
                        (std::abs(ratio - best) <= 1e-15 && bas[i] < bas[leave])) {
                        leave = i;
                        best = ratio;
                    }
                }
                if (leave < 0) continue;
                auto tab2 = tab;
                auto bas2 = bas;
                const double inv = 1.0 / tab2[leave][enter];
                for (auto& vv : tab2[leave]) vv *= inv;
                for (int i = 0; i < m; ++i) {
                    if (i == leave || tab2[i][enter] == 0.0) continue;
                    const double f = tab2[i][enter];
                    for (int j = 0; j <= rhs; ++j) tab2[i][j] -= f * tab2[leave][j];
                }
                bas2[leave] = enter;
                auto key = bas2;
                std::sort(key.begin(), key.end());
                if (!seen.insert(key).second) continue;
                std::vector<double> x2(n, 0.0);
                for (int i = 0; i < m; ++i)
                    if (bas2[i] < n) x2[bas2[i]] = tab2[i][rhs];
                double obj2 = 0.0;
                for (int j = 0; j < n; ++j) obj2 += c[j] * x2[j];
                if (obj2 <= obj + 1e-9) {
                    candidates.push_back(clean_p(x2));
                    frontier.emplace_back(std::move(tab2), std::move(bas2));
                }
            }
        }
    }

    if (candidates.size() > 1) {
        std::vector<double> centroid(Z, 0.0);
        for (const auto& P : candidates)
            for (int z = 0; z < Z; ++z) centroid[z] += P[z] / static_cast<double>(candidates.size());
        candidates.push_back(std::move(centroid));
    }

    CompatSolution sol;
    sol.non_unique = false;
    double best_norm = 1e300;
    for (const auto& P : candidates) {
        double nrm = 0.0;
        for (double p : P) nrm += p * p;
        const bool better = nrm < best_norm - 1e-15 ||
                            (nrm < best_norm + 1e-15 &&
                             std::lexicographical_compare(P.begin(), P.end(), sol.p_hat.begin(),
                                                          sol.p_hat.end()));
        if (sol.p_hat.empty() || better) {
            sol.p_hat = P;
            best_norm = nrm;
        }
    }
    for (const auto& P : candidates)
        for (std::size_t z = 0; z < P.size(); ++z)
            if (std::abs(P[z] - sol.p_hat[z]) > 1e-9) sol.non_unique = true;
    sol.residual = l1_residual(s, T, sol.p_hat);
    return sol;
}

// || s - T^T u ||_1 with u uniform: the uninformative-mixture baseline. A
// feasible point, so it upper-bounds the optimal residual.
inline double uniform_baseline(const std::vector<double>& s,
                               const std::vector<std::vector<double>>& T) {
    return l1_residual(s, T, std::vector<double>(T.size(), 1.0 / static_cast<double>(T.size())));
}

// Sum a full-vocabulary distribution over disjoint token groups, then
// renormalize. `mass` is the pre-normalization total (the prerequisite that
// the subspace captures the distribution at all).
inline std::pair<std::vector<double>, double> project_subspace(
    const std::vector<double>& dist, const std::vector<std::vector<int>>& groups) {
    std::vector<char> used(dist.size(), 0);
    std::vector<double> proj(groups.size(), 0.0);
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (groups[g].empty()) throw Error("project_subspace: empty group");
        for (int idx : groups[g]) {
            if (idx < 0 || idx >= static_cast<int>(dist.size()))
                throw Error("project_subspace: index out of range");
            if (used[idx]) throw Error("project_subspace: groups overlap");
            used[idx] = 1;
            proj[g] += dist[idx];
        }
    }
    double mass = 0.0;
    for (double p : proj) mass += p;
    if (mass <= 0.0) throw Error("project_subspace: zero mass in subspace");
    for (auto& p : proj) p /= mass;
    return {proj, mass};
}

enum class SelfConsistency { yes, no, indeterminate, not_applicable };

inline const char* self_consistency_name(SelfConsistency s) {
    switch (s) {
        case SelfConsistency::yes: return "yes";
        case SelfConsistency::no: return "no";
        case SelfConsistency::indeterminate: return "indeterminate";
        default: return "n/a";
    }
}

struct CompatInstance {
    std::string id;
    std::vector<double> student_projected;            // s, length L
    std::vector<std::vector<double>> teacher_matrix;  // Z rows of length L
    std::vector<int> row_feedback_ids;                // which feedback each row came from
    double letter_mass = 1.0;
    std::optional<CompatSolution> solution;
    std::vector<double> fidelity;  // diag of T, only when L == Z
    double uniform_baseline_value = 0.0;
    SelfConsistency self_consistent = SelfConsistency::not_applicable;
    bool prerequisite_failed = false;  // min fidelity below the 0.3 flag line
};

// Fills the metric block; requires the solve to have run. The group/feedback
// alignment is positional (group l corresponds to feedback l), which is what
// the instance builders produce. A caller projecting through nontrivial
// groups can pass the student argmax group explicitly.
inline void compat_metrics(CompatInstance& inst, int student_argmax_group = -1) {
    if (!inst.solution) throw Error("compat_metrics: no solution present");
    const int L = static_cast<int>(inst.student_projected.size());
    const int Z = static_cast<int>(inst.teacher_matrix.size());
    inst.uniform_baseline_value = uniform_baseline(inst.student_projected, inst.teacher_matrix);
    inst.fidelity.clear();
    inst.prerequisite_failed = false;
    if (L == Z) {
        for (int z = 0; z < Z; ++z) inst.fidelity.push_back(inst.teacher_matrix[z][z]);
        for (double f : inst.fidelity)
            if (f < 0.3) inst.prerequisite_failed = true;
    }
    if (L != Z) {
        inst.self_consistent = SelfConsistency::not_applicable;
        return;
    }
    const auto& P = inst.solution->p_hat;
    int amax_p = 0, amax_s = student_argmax_group;
    bool tie_p = false, tie_s = false;
    for (int z = 1; z < Z; ++z)
        if (P[z] > P[amax_p]) amax_p = z;
    for (int z = 0; z < Z; ++z)
        if (z != amax_p && P[z] > P[amax_p] - 1e-9) tie_p = true;
    if (amax_s < 0) {
        amax_s = 0;
        for (int l = 1; l < L; ++l)
            if (inst.student_projected[l] > inst.student_projected[amax_s]) amax_s = l;
        for (int l = 0; l < L; ++l)
            if (l != amax_s && inst.student_projected[l] > inst.student_projected[amax_s] - 1e-9)
                tie_s = true;
    }
    if (inst.solution->non_unique || tie_p || tie_s)
        inst.self_consistent = SelfConsistency::indeterminate;
    else
        inst.self_consistent = (amax_p == amax_s) ? SelfConsistency::yes : SelfConsistency::no;
}

inline void solve_instance(CompatInstance& inst) {
    inst.solution = solve_compat(inst.student_projected, inst.teacher_matrix);
    compat_metrics(inst);
}

}  // namespace credlab

// ---------------------------------------------------------------------------
// Instance builders over tabular worlds (separated so the solver half stays
// dependency-free).

#include "credlab/policy.hpp"
#include "credlab/rng.hpp"
#include "credlab/world.hpp"

namespace credlab {

// Consistent case: teacher rows are the exact next-token posteriors and the
// student row is their mixture under the feedback marginal. Recovering the
// marginal as the optimal mixture (residual ~ 0) is the designed outcome.
// Feedbacks with zero marginal are dropped from the row set.
inline CompatInstance make_exact_instance(const WorldSpec& w, const ReferenceState& ref, int x,
                                          const std::vector<int>& prefix) {
    auto rows = reference_rows(ref);
    const auto marg = feedback_marginal_under(w, rows, x, prefix);
    CompatInstance inst;
    inst.id = w.name + "-x" + std::to_string(x) + "-p" + join_ints(prefix, '.');
    std::vector<double> s(w.vocab_size, 0.0);
    for (int z = 0; z < w.num_feedback; ++z) {
        if (marg[z] <= 0.0) continue;
        auto post = posterior_next_token_under(w, rows, x, prefix, z);
        for (int v = 0; v < w.vocab_size; ++v) s[v] += marg[z] * post[v];
        inst.teacher_matrix.push_back(std::move(post));
        inst.row_feedback_ids.push_back(z);
    }
    inst.student_projected = std::move(s);
    inst.letter_mass = 1.0;
    return inst;
}

// Inconsistent case: each teacher row is tilted by independent log-space
// noise of the given scale, so no mixture reproduces the student row and the
// residual comes out well above zero.
inline CompatInstance make_perturbed_instance(const WorldSpec& w, const ReferenceState& ref, int x,
                                              const std::vector<int>& prefix, double noise_scale,
                                              uint64_t seed) {
    CompatInstance inst = make_exact_instance(w, ref, x, prefix);
    Rng rng(seed);
    auto noise = rng.split("teacher-noise");
    for (auto& row : inst.teacher_matrix) {
        double sum = 0.0;
        for (auto& p : row) {
            p *= std::exp(noise_scale * (2.0 * noise.uniform() - 1.0));
            sum += p;
        }
        for (auto& p : row) p /= sum;
    }
    inst.id += "-perturbed";
    return inst;
}

// Fully random instance on given dimensions (solver stress tests).
inline CompatInstance make_random_instance(int L, int Z, uint64_t seed) {
    Rng rng(seed);
    auto sr = rng.split("student");
    auto tr = rng.split("teacher");
    CompatInstance inst;
    inst.id = "rand-" + std::to_string(L) + "x" + std::to_string(Z) + "-s" + std::to_string(seed);
    inst.student_projected = sr.dirichlet(L);
    for (int z = 0; z < Z; ++z) {
        inst.teacher_matrix.push_back(tr.dirichlet(L));
        inst.row_feedback_ids.push_back(z);
    }
    return inst;
}

}  // namespace credlab
