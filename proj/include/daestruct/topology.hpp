#pragma once

// =============================================================================
// Circuit graph, the five class-wise reduced incidence matrices and the
// rank-based loop/cutset criteria, including per-branch CV-loop / LI-cutset
// membership derived from kernel supports.
// =============================================================================

#include "daestruct/errors.hpp"
#include "daestruct/linalg.hpp"

#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

namespace daestruct {

enum class BranchClass { C, L, R, V, I };

inline char to_letter(BranchClass c) {
    switch (c) {
    case BranchClass::C: return 'C';
    case BranchClass::L: return 'L';
    case BranchClass::R: return 'R';
    case BranchClass::V: return 'V';
    case BranchClass::I: return 'I';
    }
    return '?';
}

struct Branch {
    std::string id;
    int from = 0;
    int to = 0;
    BranchClass cls = BranchClass::R;
    /// Element this branch is a port of; empty for sources.
    std::string element;
    int port = 0;
};

/// Directed multigraph; node 0 is the mass node.
struct CircuitGraph {
    int node_count = 0;
    std::vector<Branch> branches;

    void add(std::string id, int from, int to, BranchClass cls, std::string element = "",
             int port = 0) {
        branches.push_back({std::move(id), from, to, cls, std::move(element), port});
        node_count = std::max(node_count, std::max(from, to) + 1);
    }

    void validate() const {
        std::unordered_set<std::string> seen;
        for (const Branch& b : branches) {
            if (b.from == b.to) {
                throw InvalidBranch("branch " + b.id + ": self-loop");
            }
            if (b.from < 0 || b.to < 0 || b.from >= node_count || b.to >= node_count) {
                throw InvalidBranch("branch " + b.id + ": node index out of range");
            }
            if (!seen.insert(b.id).second) {
                throw InvalidBranch("duplicate branch id " + b.id);
            }
        }
        if (!connected()) {
            throw NotConnected("circuit graph is not connected");
        }
    }

    [[nodiscard]] bool connected() const {
        if (node_count <= 1) return true;
        std::vector<int> parent(node_count);
        std::iota(parent.begin(), parent.end(), 0);
        auto find = [&](int a) {
            while (parent[a] != a) {
                parent[a] = parent[parent[a]];
                a = parent[a];
            }
            return a;
        };
        int components = node_count;
        for (const Branch& b : branches) {
            const int ra = find(b.from);
            const int rb = find(b.to);
            if (ra != rb) {
                parent[ra] = rb;
                --components;
            }
        }
        return components == 1;
    }
};

/// The five reduced incidence matrices (mass-node row removed), with the
/// column-to-branch-id bookkeeping.
struct IncidenceSet {
    Matrix A_C, A_L, A_R, A_V, A_I;
    std::vector<std::string> ids_C, ids_L, ids_R, ids_V, ids_I;

    [[nodiscard]] Index nodes() const { return A_C.rows(); }

    [[nodiscard]] const Matrix& of(BranchClass c) const {
        switch (c) {
        case BranchClass::C: return A_C;
        case BranchClass::L: return A_L;
        case BranchClass::R: return A_R;
        case BranchClass::V: return A_V;
        case BranchClass::I: return A_I;
        }
        return A_C;
    }
};

/// +1 if the branch directs from the node, -1 if it directs to the node;
/// the mass-node row is deleted. Column order follows declaration order.
inline IncidenceSet build_incidence(const CircuitGraph& g) {
    g.validate();
    const Index n = g.node_count > 0 ? g.node_count - 1 : 0;

    auto count = [&](BranchClass c) {
        Index k = 0;
        for (const Branch& b : g.branches) {
            if (b.cls == c) ++k;
        }
        return k;
    };

    IncidenceSet inc;
    inc.A_C = Matrix::Zero(n, count(BranchClass::C));
    inc.A_L = Matrix::Zero(n, count(BranchClass::L));
    inc.A_R = Matrix::Zero(n, count(BranchClass::R));
    inc.A_V = Matrix::Zero(n, count(BranchClass::V));
    inc.A_I = Matrix::Zero(n, count(BranchClass::I));

    Index col_c = 0, col_l = 0, col_r = 0, col_v = 0, col_i = 0;
    for (const Branch& b : g.branches) {
        Matrix* a = nullptr;
        Index* col = nullptr;
        std::vector<std::string>* ids = nullptr;
        switch (b.cls) {
        case BranchClass::C: a = &inc.A_C; col = &col_c; ids = &inc.ids_C; break;
        case BranchClass::L: a = &inc.A_L; col = &col_l; ids = &inc.ids_L; break;
        case BranchClass::R: a = &inc.A_R; col = &col_r; ids = &inc.ids_R; break;
        case BranchClass::V: a = &inc.A_V; col = &col_v; ids = &inc.ids_V; break;
        case BranchClass::I: a = &inc.A_I; col = &col_i; ids = &inc.ids_I; break;
        }
        if (b.from > 0) (*a)(b.from - 1, *col) = 1.0;
        if (b.to > 0) (*a)(b.to - 1, *col) = -1.0;
        ids->push_back(b.id);
        ++(*col);
    }
    return inc;
}

namespace detail {

inline Matrix hcat(std::initializer_list<const Matrix*> mats) {
    Index rows = 0, cols = 0;
    for (const Matrix* m : mats) {
        rows = std::max(rows, m->rows());
        cols += m->cols();
    }
    Matrix out(rows, cols);
    Index at = 0;
    for (const Matrix* m : mats) {
        out.middleCols(at, m->cols()) = *m;
        at += m->cols();
    }
    return out;
}

} // namespace detail

/// (no_v_loops, no_i_cutsets): A_V full column rank and [A_C A_L A_R A_V]
/// full row rank. Findings, not errors.
inline std::pair<bool, bool> check_source_sanity(const IncidenceSet& inc,
                                                 std::optional<double> tol = std::nullopt) {
    const bool no_v_loops = rank_svd(inc.A_V, tol) == inc.A_V.cols();
    const Matrix crlv = detail::hcat({&inc.A_C, &inc.A_L, &inc.A_R, &inc.A_V});
    const bool no_i_cutsets = rank_svd(crlv, tol) == inc.nodes();
    return {no_v_loops, no_i_cutsets};
}

inline bool detect_cv_loops(const IncidenceSet& inc,
                            std::optional<double> tol = std::nullopt) {
    const Matrix cv = detail::hcat({&inc.A_C, &inc.A_V});
    return rank_svd(cv, tol) < cv.cols();
}

inline bool detect_li_cutsets(const IncidenceSet& inc,
                              std::optional<double> tol = std::nullopt) {
    const Matrix crv = detail::hcat({&inc.A_C, &inc.A_R, &inc.A_V});
    return rank_svd(crv, tol) < inc.nodes();
}

struct BranchMembership {
    std::set<std::string> cv_loop_branches;
    std::set<std::string> li_cutset_branches;
    /// Orthonormal basis of ker [A_C A_V]; row supports identify CV members.
    Matrix cv_kernel;
    /// Rows of [A_L A_I]^T Q with Q the projector onto ker [A_C A_R A_V]^T;
    /// nonzero rows identify LI members.
    Matrix li_rows;
};

/// Per-branch membership in some CV-loop / LI-cutset via kernel supports.
inline BranchMembership branch_membership(const IncidenceSet& inc,
                                          std::optional<double> tol = std::nullopt) {
    BranchMembership out;
    const double member_tol = tol ? *tol : 1e-10;

    const Matrix cv = detail::hcat({&inc.A_C, &inc.A_V});
    out.cv_kernel = null_space_basis(cv, tol);
    for (Index j = 0; out.cv_kernel.cols() > 0 && j < out.cv_kernel.rows(); ++j) {
        if (out.cv_kernel.row(j).cwiseAbs().maxCoeff() > member_tol) {
            const Index nc = inc.A_C.cols();
            out.cv_loop_branches.insert(j < nc ? inc.ids_C[static_cast<std::size_t>(j)]
                                               : inc.ids_V[static_cast<std::size_t>(j - nc)]);
        }
    }

    const Matrix crv = detail::hcat({&inc.A_C, &inc.A_R, &inc.A_V});
    const Projector q = projector_onto_kernel(crv.transpose(), tol);
    const Matrix li = detail::hcat({&inc.A_L, &inc.A_I});
    out.li_rows = li.transpose() * q.matrix;
    for (Index j = 0; out.li_rows.cols() > 0 && j < out.li_rows.rows(); ++j) {
        if (out.li_rows.row(j).cwiseAbs().maxCoeff() > member_tol) {
            const Index nl = inc.A_L.cols();
            out.li_cutset_branches.insert(j < nl
                                              ? inc.ids_L[static_cast<std::size_t>(j)]
                                              : inc.ids_I[static_cast<std::size_t>(j - nl)]);
        }
    }
    return out;
}

struct TopologyReport {
    bool has_v_loop = false;
    bool has_i_cutset = false;
    bool has_cv_loop = false;
    bool has_li_cutset = false;
    std::set<std::string> cv_loop_branches;
    std::set<std::string> li_cutset_branches;
    Matrix cv_kernel_witness;
    Matrix li_projector_witness;
};

inline TopologyReport analyze_topology(const IncidenceSet& inc,
                                       std::optional<double> tol = std::nullopt) {
    TopologyReport rep;
    const auto [no_v_loops, no_i_cutsets] = check_source_sanity(inc, tol);
    rep.has_v_loop = !no_v_loops;
    rep.has_i_cutset = !no_i_cutsets;
    rep.has_cv_loop = detect_cv_loops(inc, tol);
    rep.has_li_cutset = detect_li_cutsets(inc, tol);
    BranchMembership members = branch_membership(inc, tol);
    rep.cv_loop_branches = std::move(members.cv_loop_branches);
    rep.li_cutset_branches = std::move(members.li_cutset_branches);
    rep.cv_kernel_witness = std::move(members.cv_kernel);
    rep.li_projector_witness = std::move(members.li_rows);
    return rep;
}

} // namespace daestruct
