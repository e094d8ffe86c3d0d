#pragma once

// =============================================================================
// Desk-scale finite integration technique kit on uniform Cartesian staggered
// grids: discrete grad/curl/div operators with Dirichlet and terminal-patch
// bookkeeping, diagonal material matrices, the boundary potential split
// (Q_s, P_s, Lambda_s, Y_s) and builders for the three refined devices
// (electromagnetic A-phi, electroquasistatic, eddy-current A*), each emitted
// as a DescriptorElement.
//
// DOF conventions: potentials live on primal points, the vector potential and
// electric quantities on primal edges, fluxes on primal facets. Points on
// Dirichlet faces are ground (removed) unless they belong to a terminal
// patch; edges lying inside a Dirichlet face plane are removed unless both
// endpoints are terminal; facets are removed once all their edges are. This
// keeps C*G = 0 and S*C = 0 exact on the retained degrees of freedom, except
// in terminal columns where the deliberate defect carries the boundary
// excitation.
// =============================================================================

#include "daestruct/elements.hpp"
#include "daestruct/errors.hpp"
#include "daestruct/linalg.hpp"

#include <array>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace daestruct {

struct StaggeredGrid {
    int nx = 1, ny = 1, nz = 1;
    double dx = 1.0, dy = 1.0, dz = 1.0;

    [[nodiscard]] int cells() const { return nx * ny * nz; }
    [[nodiscard]] int points() const { return (nx + 1) * (ny + 1) * (nz + 1); }
    [[nodiscard]] int edges(int dir) const {
        switch (dir) {
        case 0: return nx * (ny + 1) * (nz + 1);
        case 1: return (nx + 1) * ny * (nz + 1);
        default: return (nx + 1) * (ny + 1) * nz;
        }
    }
    [[nodiscard]] int edges() const { return edges(0) + edges(1) + edges(2); }
    [[nodiscard]] int facets(int dir) const {
        switch (dir) {
        case 0: return (nx + 1) * ny * nz;
        case 1: return nx * (ny + 1) * nz;
        default: return nx * ny * (nz + 1);
        }
    }
    [[nodiscard]] int facets() const { return facets(0) + facets(1) + facets(2); }

    [[nodiscard]] double spacing(int dir) const {
        return dir == 0 ? dx : (dir == 1 ? dy : dz);
    }

    [[nodiscard]] int point_id(int i, int j, int k) const {
        return i + (nx + 1) * (j + (ny + 1) * k);
    }
    [[nodiscard]] int cell_id(int i, int j, int k) const {
        return i + nx * (j + ny * k);
    }
    /// Edge of direction d anchored at point (i,j,k), extending one step in d.
    [[nodiscard]] int edge_id(int d, int i, int j, int k) const {
        switch (d) {
        case 0: return i + nx * (j + (ny + 1) * k);
        case 1: return edges(0) + i + (nx + 1) * (j + ny * k);
        default: return edges(0) + edges(1) + i + (nx + 1) * (j + (ny + 1) * k);
        }
    }
    /// Facet with normal d anchored at point (i,j,k), spanning the two
    /// transverse directions.
    [[nodiscard]] int facet_id(int d, int i, int j, int k) const {
        switch (d) {
        case 0: return i + (nx + 1) * (j + ny * k);
        case 1: return facets(0) + i + nx * (j + (ny + 1) * k);
        default: return facets(0) + facets(1) + i + nx * (j + ny * k);
        }
    }

    void validate() const {
        if (nx < 1 || ny < 1 || nz < 1) {
            throw BuildError("grid needs at least one cell per axis");
        }
        if (dx <= 0.0 || dy <= 0.0 || dz <= 0.0) {
            throw BuildError("grid spacings must be positive");
        }
    }
};

enum class Subdomain { ExcitationFree, Conducting, Source };

/// Piecewise-constant isotropic material coefficients per cell plus the
/// subdomain labels.
struct MaterialField {
    Vector eps, sigma, nu, tau_eq;
    double zeta = 1.0;
    double xi = 1.0;
    std::vector<Subdomain> label;

    static MaterialField uniform(const StaggeredGrid& g, double eps_v, double sigma_v,
                                 double nu_v) {
        MaterialField m;
        const int n = g.cells();
        m.eps = Vector::Constant(n, eps_v);
        m.sigma = Vector::Constant(n, sigma_v);
        m.nu = Vector::Constant(n, nu_v);
        m.tau_eq = Vector::Zero(n);
        m.label.assign(static_cast<std::size_t>(n), sigma_v > 0.0
                                                        ? Subdomain::Conducting
                                                        : Subdomain::ExcitationFree);
        return m;
    }

    void validate(const StaggeredGrid& g) const {
        const int n = g.cells();
        if (eps.size() != n || sigma.size() != n || nu.size() != n ||
            tau_eq.size() != n || static_cast<int>(label.size()) != n) {
            throw InvalidMaterial("material field size does not match the grid");
        }
        for (int c = 0; c < n; ++c) {
            if (!(eps(c) > 0.0) || !(nu(c) > 0.0)) {
                throw InvalidMaterial("eps and nu must be positive on every cell");
            }
            if (sigma(c) < 0.0 || tau_eq(c) < 0.0) {
                throw InvalidMaterial("sigma and tau_eq must be nonnegative");
            }
            const bool conducting = label[static_cast<std::size_t>(c)] == Subdomain::Conducting;
            if (conducting != (sigma(c) > 0.0)) {
                throw InvalidMaterial("sigma must be positive exactly on conducting cells");
            }
            if (tau_eq(c) > 0.0 &&
                label[static_cast<std::size_t>(c)] != Subdomain::Source) {
                throw InvalidMaterial("tau_eq support must lie in the source subdomain");
            }
        }
    }
};

/// Which of the six box faces carry homogeneous Dirichlet conditions.
/// Face order: x-, x+, y-, y+, z-, z+.
struct BoundarySpec {
    std::array<bool, 6> dirichlet{false, false, false, false, false, false};

    static BoundarySpec all() {
        BoundarySpec b;
        b.dirichlet.fill(true);
        return b;
    }
    [[nodiscard]] bool any() const {
        for (bool d : dirichlet)
            if (d) return true;
        return false;
    }
    [[nodiscard]] bool all_faces() const {
        for (bool d : dirichlet)
            if (!d) return false;
        return true;
    }
};

/// Rectangular patch of boundary points belonging to one terminal. Face-local
/// coordinates: x faces use (j,k), y faces (i,k), z faces (i,j); the ranges
/// are inclusive point indices.
struct TerminalPatch {
    int face = 0;
    int u0 = 0, v0 = 0, u1 = 0, v1 = 0;
};

struct BoundarySplit {
    Matrix Q_s;      // kept points x interior potential dofs (0/1 selector)
    Matrix P_s;      // kept points x terminal point dofs (0/1 selector)
    Matrix Lambda_s; // terminal point dofs x terminals (0/1 indicator)
    Matrix Y_s;      // P_s * Lambda_s
};

struct GridOperators {
    StaggeredGrid grid;
    Matrix G, C, Ct, S, St;
    std::vector<int> kept_points, kept_edges, kept_facets; // full-grid ids
    std::vector<int> point_index, edge_index, facet_index; // full id -> kept or -1
    std::vector<int> point_terminal;                       // per kept point, -1 = interior
    /// Per kept edge: (tail, head) as kept-point indices, -1 for ground.
    std::vector<std::pair<int, int>> edge_endpoints;
    int n_terminals = 0;

    [[nodiscard]] Index n_points() const { return static_cast<Index>(kept_points.size()); }
    [[nodiscard]] Index n_edges() const { return static_cast<Index>(kept_edges.size()); }
    [[nodiscard]] Index n_facets() const { return static_cast<Index>(kept_facets.size()); }

    /// Potential split per the terminal flags.
    [[nodiscard]] BoundarySplit boundary_split() const {
        const Index np = n_points();
        Index n_term_pts = 0;
        for (int t : point_terminal)
            if (t >= 0) ++n_term_pts;
        BoundarySplit out;
        out.Q_s = Matrix::Zero(np, np - n_term_pts);
        out.P_s = Matrix::Zero(np, n_term_pts);
        out.Lambda_s = Matrix::Zero(n_term_pts, n_terminals);
        Index qi = 0, pi = 0;
        for (Index p = 0; p < np; ++p) {
            const int t = point_terminal[static_cast<std::size_t>(p)];
            if (t < 0) {
                out.Q_s(p, qi++) = 1.0;
            } else {
                out.P_s(p, pi) = 1.0;
                out.Lambda_s(pi, t) = 1.0;
                ++pi;
            }
        }
        out.Y_s = out.P_s * out.Lambda_s;
        return out;
    }
};

namespace detail {

struct EntityFlags {
    std::vector<bool> point_kept, edge_kept, facet_kept;
    std::vector<int> point_terminal_full; // -1 none
};

inline bool point_on_face(const StaggeredGrid& g, int face, int i, int j, int k) {
    switch (face) {
    case 0: return i == 0;
    case 1: return i == g.nx;
    case 2: return j == 0;
    case 3: return j == g.ny;
    case 4: return k == 0;
    default: return k == g.nz;
    }
}

inline void face_local(const StaggeredGrid& g, int face, int i, int j, int k, int& u,
                       int& v) {
    (void)g;
    if (face <= 1) {
        u = j;
        v = k;
    } else if (face <= 3) {
        u = i;
        v = k;
    } else {
        u = i;
        v = j;
    }
}

inline EntityFlags classify_entities(const StaggeredGrid& g, const BoundarySpec& bc,
                                     const std::vector<TerminalPatch>& patches) {
    EntityFlags f;
    f.point_kept.assign(static_cast<std::size_t>(g.points()), true);
    f.point_terminal_full.assign(static_cast<std::size_t>(g.points()), -1);

    for (int k = 0; k <= g.nz; ++k)
        for (int j = 0; j <= g.ny; ++j)
            for (int i = 0; i <= g.nx; ++i) {
                const int p = g.point_id(i, j, k);
                int terminal = -1;
                for (std::size_t t = 0; t < patches.size(); ++t) {
                    const TerminalPatch& patch = patches[t];
                    if (!point_on_face(g, patch.face, i, j, k)) continue;
                    int u, v;
                    face_local(g, patch.face, i, j, k, u, v);
                    if (u >= patch.u0 && u <= patch.u1 && v >= patch.v0 && v <= patch.v1) {
                        if (terminal >= 0) {
                            throw BuildError("terminal patches overlap at a grid point");
                        }
                        terminal = static_cast<int>(t);
                    }
                }
                f.point_terminal_full[static_cast<std::size_t>(p)] = terminal;
                if (terminal >= 0) continue;
                for (int face = 0; face < 6; ++face) {
                    if (bc.dirichlet[static_cast<std::size_t>(face)] &&
                        point_on_face(g, face, i, j, k)) {
                        f.point_kept[static_cast<std::size_t>(p)] = false;
                        break;
                    }
                }
            }

    // An edge lies inside a face plane when its free direction is tangential
    // and its fixed coordinates sit on that plane.
    auto edge_in_dirichlet_plane = [&](int d, int i, int j, int k) {
        for (int face = 0; face < 6; ++face) {
            if (!bc.dirichlet[static_cast<std::size_t>(face)]) continue;
            const int normal = face / 2;
            if (normal == d) continue;
            const bool high = face % 2 == 1;
            const int coord = normal == 0 ? i : (normal == 1 ? j : k);
            const int limit = normal == 0 ? g.nx : (normal == 1 ? g.ny : g.nz);
            if (coord == (high ? limit : 0)) return true;
        }
        return false;
    };

    f.edge_kept.assign(static_cast<std::size_t>(g.edges()), true);
    auto edge_endpoints = [&](int d, int i, int j, int k, int& p0, int& p1) {
        p0 = g.point_id(i, j, k);
        p1 = g.point_id(i + (d == 0), j + (d == 1), k + (d == 2));
    };
    for (int d = 0; d < 3; ++d) {
        const int imax = d == 0 ? g.nx - 1 : g.nx;
        const int jmax = d == 1 ? g.ny - 1 : g.ny;
        const int kmax = d == 2 ? g.nz - 1 : g.nz;
        for (int k = 0; k <= kmax; ++k)
            for (int j = 0; j <= jmax; ++j)
                for (int i = 0; i <= imax; ++i) {
                    if (!edge_in_dirichlet_plane(d, i, j, k)) continue;
                    int p0, p1;
                    edge_endpoints(d, i, j, k, p0, p1);
                    const int t0 = f.point_terminal_full[static_cast<std::size_t>(p0)];
                    const int t1 = f.point_terminal_full[static_cast<std::size_t>(p1)];
                    if (t0 >= 0 && t1 >= 0) {
                        if (t0 != t1) {
                            throw BuildError("terminal patches are adjacent on the grid");
                        }
                        continue; // edge inside one patch stays
                    }
                    f.edge_kept[static_cast<std::size_t>(g.edge_id(d, i, j, k))] = false;
                }
    }

    // Facet edge lists; a facet is dropped once all its edges are.
    f.facet_kept.assign(static_cast<std::size_t>(g.facets()), true);
    for (int d = 0; d < 3; ++d) {
        const int imax = d == 0 ? g.nx : g.nx - 1;
        const int jmax = d == 1 ? g.ny : g.ny - 1;
        const int kmax = d == 2 ? g.nz : g.nz - 1;
        const int t1 = (d + 1) % 3;
        const int t2 = (d + 2) % 3;
        for (int k = 0; k <= kmax; ++k)
            for (int j = 0; j <= jmax; ++j)
                for (int i = 0; i <= imax; ++i) {
                    auto shifted = [&](int dir, int di) {
                        const int ii = i + (dir == 0 ? di : 0);
                        const int jj = j + (dir == 1 ? di : 0);
                        const int kk = k + (dir == 2 ? di : 0);
                        return std::array<int, 3>{ii, jj, kk};
                    };
                    const auto a0 = shifted(t2, 0);
                    const auto a1 = shifted(t1, 1);
                    const int e[4] = {
                        g.edge_id(t1, i, j, k),
                        g.edge_id(t2, a1[0], a1[1], a1[2]),
                        g.edge_id(t1, a0[0] + (t2 == 0), a0[1] + (t2 == 1),
                                  a0[2] + (t2 == 2)),
                        g.edge_id(t2, i, j, k),
                    };
                    bool any_kept = false;
                    for (int q = 0; q < 4; ++q) {
                        if (f.edge_kept[static_cast<std::size_t>(e[q])]) any_kept = true;
                    }
                    if (!any_kept) {
                        f.facet_kept[static_cast<std::size_t>(g.facet_id(d, i, j, k))] =
                            false;
                    }
                }
    }
    return f;
}

} // namespace detail

/// Build the deflated discrete operators {G, C, Ct, S, St} for a grid with the
/// given Dirichlet faces and terminal patches. The duals are definitional:
/// Ct = C^T and St = -G^T.
inline GridOperators build_grid_operators(const StaggeredGrid& grid,
                                          const BoundarySpec& bc,
                                          const std::vector<TerminalPatch>& patches = {},
                                          bool allow_large = false) {
    grid.validate();
    if (!bc.any()) {
        throw GaugeError("empty Dirichlet set: gradient would be rank deficient");
    }
    if (!allow_large && grid.cells() > 12 * 12 * 12) {
        throw BuildError("grid exceeds the desk-scale cap of 12^3 cells");
    }
    for (const TerminalPatch& p : patches) {
        if (p.face < 0 || p.face > 5 || p.u0 > p.u1 || p.v0 > p.v1) {
            throw BuildError("malformed terminal patch");
        }
    }

    detail::EntityFlags flags = detail::classify_entities(grid, bc, patches);

    GridOperators ops;
    ops.grid = grid;
    ops.n_terminals = static_cast<int>(patches.size());

    ops.point_index.assign(static_cast<std::size_t>(grid.points()), -1);
    ops.edge_index.assign(static_cast<std::size_t>(grid.edges()), -1);
    ops.facet_index.assign(static_cast<std::size_t>(grid.facets()), -1);
    for (int p = 0; p < grid.points(); ++p) {
        if (flags.point_kept[static_cast<std::size_t>(p)]) {
            ops.point_index[static_cast<std::size_t>(p)] =
                static_cast<int>(ops.kept_points.size());
            ops.kept_points.push_back(p);
            ops.point_terminal.push_back(flags.point_terminal_full[static_cast<std::size_t>(p)]);
        }
    }
    for (int e = 0; e < grid.edges(); ++e) {
        if (flags.edge_kept[static_cast<std::size_t>(e)]) {
            ops.edge_index[static_cast<std::size_t>(e)] =
                static_cast<int>(ops.kept_edges.size());
            ops.kept_edges.push_back(e);
        }
    }
    for (int fct = 0; fct < grid.facets(); ++fct) {
        if (flags.facet_kept[static_cast<std::size_t>(fct)]) {
            ops.facet_index[static_cast<std::size_t>(fct)] =
                static_cast<int>(ops.kept_facets.size());
            ops.kept_facets.push_back(fct);
        }
    }

    // every terminal must have at least one point, otherwise Y_s loses rank
    std::vector<int> terminal_points(patches.size(), 0);
    for (int t : ops.point_terminal) {
        if (t >= 0) ++terminal_points[static_cast<std::size_t>(t)];
    }
    for (std::size_t t = 0; t < terminal_points.size(); ++t) {
        if (terminal_points[t] == 0) {
            throw BuildError("terminal " + std::to_string(t) + " selects no grid points");
        }
    }

    const Index np = ops.n_points();
    const Index ne = ops.n_edges();
    const Index nf = ops.n_facets();

    // gradient: (G phi)_edge = phi(head) - phi(tail)
    ops.G = Matrix::Zero(ne, np);
    ops.edge_endpoints.assign(static_cast<std::size_t>(ne), {-1, -1});
    for (int d = 0; d < 3; ++d) {
        const int imax = d == 0 ? grid.nx - 1 : grid.nx;
        const int jmax = d == 1 ? grid.ny - 1 : grid.ny;
        const int kmax = d == 2 ? grid.nz - 1 : grid.nz;
        for (int k = 0; k <= kmax; ++k)
            for (int j = 0; j <= jmax; ++j)
                for (int i = 0; i <= imax; ++i) {
                    const int er = ops.edge_index[static_cast<std::size_t>(
                        grid.edge_id(d, i, j, k))];
                    if (er < 0) continue;
                    const int p0 = ops.point_index[static_cast<std::size_t>(
                        grid.point_id(i, j, k))];
                    const int p1 = ops.point_index[static_cast<std::size_t>(grid.point_id(
                        i + (d == 0), j + (d == 1), k + (d == 2)))];
                    if (p0 >= 0) ops.G(er, p0) = -1.0;
                    if (p1 >= 0) ops.G(er, p1) = 1.0;
                    ops.edge_endpoints[static_cast<std::size_t>(er)] = {p0, p1};
                }
    }

    // curl: boundary edges of each facet, cyclic orientation (t1 then t2)
    ops.C = Matrix::Zero(nf, ne);
    for (int d = 0; d < 3; ++d) {
        const int imax = d == 0 ? grid.nx : grid.nx - 1;
        const int jmax = d == 1 ? grid.ny : grid.ny - 1;
        const int kmax = d == 2 ? grid.nz : grid.nz - 1;
        const int t1 = (d + 1) % 3;
        const int t2 = (d + 2) % 3;
        for (int k = 0; k <= kmax; ++k)
            for (int j = 0; j <= jmax; ++j)
                for (int i = 0; i <= imax; ++i) {
                    const int fr = ops.facet_index[static_cast<std::size_t>(
                        grid.facet_id(d, i, j, k))];
                    if (fr < 0) continue;
                    auto offset = [&](int dir) {
                        return std::array<int, 3>{i + (dir == 0), j + (dir == 1),
                                                  k + (dir == 2)};
                    };
                    const auto s1 = offset(t1);
                    const auto s2 = offset(t2);
                    const int e_t1_low = grid.edge_id(t1, i, j, k);
                    const int e_t1_high = grid.edge_id(t1, s2[0], s2[1], s2[2]);
                    const int e_t2_low = grid.edge_id(t2, i, j, k);
                    const int e_t2_high = grid.edge_id(t2, s1[0], s1[1], s1[2]);
                    auto put = [&](int full_edge, double val) {
                        const int er = ops.edge_index[static_cast<std::size_t>(full_edge)];
                        if (er >= 0) ops.C(fr, er) = val;
                    };
                    put(e_t1_low, 1.0);
                    put(e_t2_high, 1.0);
                    put(e_t1_high, -1.0);
                    put(e_t2_low, -1.0);
                }
    }

    // divergence: outward facets of each cell
    ops.S = Matrix::Zero(grid.cells(), nf);
    for (int k = 0; k < grid.nz; ++k)
        for (int j = 0; j < grid.ny; ++j)
            for (int i = 0; i < grid.nx; ++i) {
                const int c = grid.cell_id(i, j, k);
                auto put = [&](int full_facet, double val) {
                    const int fr = ops.facet_index[static_cast<std::size_t>(full_facet)];
                    if (fr >= 0) ops.S(c, fr) = val;
                };
                put(grid.facet_id(0, i + 1, j, k), 1.0);
                put(grid.facet_id(0, i, j, k), -1.0);
                put(grid.facet_id(1, i, j + 1, k), 1.0);
                put(grid.facet_id(1, i, j, k), -1.0);
                put(grid.facet_id(2, i, j, k + 1), 1.0);
                put(grid.facet_id(2, i, j, k), -1.0);
            }

    ops.Ct = ops.C.transpose();
    ops.St = -ops.G.transpose();

    // G has full column rank iff every retained point reaches ground through
    // kept edges (grounded-incidence argument; exact, no rank computation).
    {
        std::vector<int> parent(static_cast<std::size_t>(np + 1));
        std::iota(parent.begin(), parent.end(), 0);
        std::function<int(int)> find = [&](int a) {
            while (parent[static_cast<std::size_t>(a)] != a) {
                parent[static_cast<std::size_t>(a)] =
                    parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
                a = parent[static_cast<std::size_t>(a)];
            }
            return a;
        };
        const int ground = static_cast<int>(np);
        for (const auto& [p0, p1] : ops.edge_endpoints) {
            const int a = p0 >= 0 ? p0 : ground;
            const int b = p1 >= 0 ? p1 : ground;
            parent[static_cast<std::size_t>(find(a))] = find(b);
        }
        for (Index p = 0; p < np; ++p) {
            if (find(static_cast<int>(p)) != find(ground)) {
                throw GaugeError("gradient operator lost full column rank: "
                                 "a potential dof is not grounded");
            }
        }
    }
    return ops;
}

/// Diagonal material matrices on the retained entities.
struct MaterialMatrices {
    Vector m_eps, m_sigma, m_zeta; // per kept edge
    Vector m_nu, m_nu_tau;         // per kept facet
    Vector m_xi;                   // per kept point
};

inline MaterialMatrices build_material_matrices(const StaggeredGrid& grid,
                                                const GridOperators& ops,
                                                const MaterialField& mat) {
    mat.validate(grid);

    MaterialMatrices mm;
    mm.m_eps = Vector::Zero(ops.n_edges());
    mm.m_sigma = Vector::Zero(ops.n_edges());
    mm.m_zeta = Vector::Zero(ops.n_edges());
    mm.m_nu = Vector::Zero(ops.n_facets());
    mm.m_nu_tau = Vector::Zero(ops.n_facets());

    auto for_each_edge_cell = [&](int d, int i, int j, int k, auto&& fn) {
        // cells sharing the edge vary over the two transverse axes
        const int t1 = (d + 1) % 3;
        const int t2 = (d + 2) % 3;
        for (int a = -1; a <= 0; ++a)
            for (int b = -1; b <= 0; ++b) {
                int ci = i + (t1 == 0 ? a : 0) + (t2 == 0 ? b : 0);
                int cj = j + (t1 == 1 ? a : 0) + (t2 == 1 ? b : 0);
                int ck = k + (t1 == 2 ? a : 0) + (t2 == 2 ? b : 0);
                if (ci < 0 || cj < 0 || ck < 0 || ci >= grid.nx || cj >= grid.ny ||
                    ck >= grid.nz)
                    continue;
                fn(grid.cell_id(ci, cj, ck));
            }
    };

    // edges: arithmetic quarter-cell averaging, dual facet area over length
    for (int d = 0; d < 3; ++d) {
        const int imax = d == 0 ? grid.nx - 1 : grid.nx;
        const int jmax = d == 1 ? grid.ny - 1 : grid.ny;
        const int kmax = d == 2 ? grid.nz - 1 : grid.nz;
        const double len = grid.spacing(d);
        const double dual_area =
            grid.spacing((d + 1) % 3) * grid.spacing((d + 2) % 3);
        for (int k = 0; k <= kmax; ++k)
            for (int j = 0; j <= jmax; ++j)
                for (int i = 0; i <= imax; ++i) {
                    const int er = ops.edge_index[static_cast<std::size_t>(
                        grid.edge_id(d, i, j, k))];
                    if (er < 0) continue;
                    double eps_sum = 0.0, sigma_sum = 0.0;
                    for_each_edge_cell(d, i, j, k, [&](int c) {
                        eps_sum += mat.eps(c);
                        sigma_sum += mat.sigma(c);
                    });
                    const double metric = dual_area / len / 4.0;
                    mm.m_eps(er) = eps_sum * metric;
                    mm.m_sigma(er) = sigma_sum * metric;
                    mm.m_zeta(er) = mat.zeta;
                }
    }

    // facets: harmonic nu over the at most two sharing cells, dual edge
    // length over facet area; the cable term averages arithmetically so a
    // zero tau_eq neighbourhood stays zero.
    for (int d = 0; d < 3; ++d) {
        const int imax = d == 0 ? grid.nx : grid.nx - 1;
        const int jmax = d == 1 ? grid.ny : grid.ny - 1;
        const int kmax = d == 2 ? grid.nz : grid.nz - 1;
        const double area = grid.spacing((d + 1) % 3) * grid.spacing((d + 2) % 3);
        const double dual_len = grid.spacing(d);
        for (int k = 0; k <= kmax; ++k)
            for (int j = 0; j <= jmax; ++j)
                for (int i = 0; i <= imax; ++i) {
                    const int fr = ops.facet_index[static_cast<std::size_t>(
                        grid.facet_id(d, i, j, k))];
                    if (fr < 0) continue;
                    double inv_sum = 0.0, tau_sum = 0.0;
                    int count = 0;
                    for (int side = -1; side <= 0; ++side) {
                        const int ci = i + (d == 0 ? side : 0);
                        const int cj = j + (d == 1 ? side : 0);
                        const int ck = k + (d == 2 ? side : 0);
                        if (ci < 0 || cj < 0 || ck < 0 || ci >= grid.nx ||
                            cj >= grid.ny || ck >= grid.nz)
                            continue;
                        const int c = grid.cell_id(ci, cj, ck);
                        inv_sum += 1.0 / mat.nu(c);
                        tau_sum += mat.nu(c) * mat.tau_eq(c);
                        ++count;
                    }
                    const double nu_h = count > 0 ? count / inv_sum : 0.0;
                    mm.m_nu(fr) = nu_h * dual_len / area;
                    mm.m_nu_tau(fr) = (count > 0 ? tau_sum / count : 0.0) * dual_len / area;
                }
    }

    // artificial xi on points, scaled to the eps-matrix magnitude
    const double eps_scale =
        mm.m_eps.size() > 0 ? mm.m_eps.mean() : 1.0;
    mm.m_xi = Vector::Constant(ops.n_points(), mat.xi * eps_scale);
    return mm;
}

// =============================================================================
// Refined device builders
// =============================================================================

struct EmDevice {
    DescriptorElement element;
    GridOperators ops;
    BoundarySplit split;
    Matrix M, A, N, B, F;
    Matrix inductance_witness; // F * Atilde * Ntilde
    double fm_inv_n_norm = 0.0;
    double fb_tilde_norm = 0.0;
};

/// Electromagnetic A-phi device (full Maxwell, grad-type Lorenz gauge).
/// Requires a full Dirichlet shell (no Neumann part) and no inner sources.
inline EmDevice build_em_device(const StaggeredGrid& grid, const MaterialField& mat,
                                const std::vector<TerminalPatch>& terminals,
                                bool allow_large = false) {
    if (terminals.empty()) throw BuildError("EM device needs at least one terminal");
    for (Index c = 0; c < mat.tau_eq.size(); ++c) {
        if (mat.tau_eq(c) != 0.0 ||
            mat.label[static_cast<std::size_t>(c)] == Subdomain::Source) {
            throw AssumptionViolated("EM device requires an empty source subdomain");
        }
    }

    EmDevice dev;
    dev.ops = build_grid_operators(grid, BoundarySpec::all(), terminals, allow_large);
    dev.split = dev.ops.boundary_split();
    const MaterialMatrices mm = build_material_matrices(grid, dev.ops, mat);

    const Matrix& g = dev.ops.G;
    const Matrix& c = dev.ops.C;
    const Matrix& st = dev.ops.St;
    const Matrix& qs = dev.split.Q_s;
    const Matrix& ys = dev.split.Y_s;

    const auto meps = mm.m_eps.asDiagonal();
    const auto msigma = mm.m_sigma.asDiagonal();
    const auto mnu = mm.m_nu.asDiagonal();
    const auto mzeta = mm.m_zeta.asDiagonal();
    const auto mxi = mm.m_xi.asDiagonal();

    const Index nq = qs.cols();
    const Index ne = dev.ops.n_edges();
    const Index n_terms = static_cast<Index>(terminals.size());
    const Index nx = nq + 2 * ne;

    const Matrix gq = g * qs;
    const Matrix gy = g * ys;
    const Matrix curl_stiff = c.transpose() * mnu * c; // Ct Mnu C
    const Matrix gauge_block = qs.transpose() * st * mzeta * g * mxi * st * mzeta;

    dev.M = Matrix::Zero(nx, nx);
    dev.M.block(0, 0, nq, nq) = qs.transpose() * st * meps * gq;
    dev.M.block(nq, 0, ne, nq) = meps * gq;
    dev.M.block(nq, nq, ne, ne) = msigma;
    dev.M.block(nq, nq + ne, ne, ne) = Matrix(meps);
    dev.M.block(nq + ne, nq, ne, ne) = Matrix::Identity(ne, ne);

    dev.A = Matrix::Zero(nx, nx);
    dev.A.block(0, nq, nq, ne) = gauge_block;
    dev.A.block(nq, 0, ne, nq) = msigma * gq;
    dev.A.block(nq, nq, ne, ne) = curl_stiff;
    dev.A.block(nq + ne, nq + ne, ne, ne) = -Matrix::Identity(ne, ne);

    dev.N = Matrix::Zero(nx, n_terms);
    dev.N.block(nq, 0, ne, n_terms) = meps * gy;
    dev.B = Matrix::Zero(nx, n_terms);
    dev.B.block(nq, 0, ne, n_terms) = msigma * gy;

    dev.F = Matrix::Zero(n_terms, nx);
    dev.F.block(0, nq, n_terms, ne) = ys.transpose() * st * c.transpose() * mnu * c;

    Eigen::FullPivLU<Matrix> lu(dev.M);
    if (!lu.isInvertible()) {
        throw BuildError("EM device mass matrix is singular (bad gauge or materials)");
    }
    const Matrix n_tilde = lu.solve(dev.N);
    const Matrix b_tilde = lu.solve(dev.B);
    const Matrix a_tilde = lu.solve(dev.A);

    dev.fm_inv_n_norm = max_abs(Matrix(dev.F * n_tilde));
    dev.fb_tilde_norm = max_abs(Matrix(dev.F * b_tilde));
    dev.inductance_witness = dev.F * a_tilde * n_tilde;

    if (dev.fm_inv_n_norm > 1e-10) {
        throw BuildError("EM device: F M^-1 N does not vanish (got " +
                         std::to_string(dev.fm_inv_n_norm) + ")");
    }
    if (dev.fb_tilde_norm > 1e-10) {
        throw BuildError("EM device: F M^-1 B does not vanish for this terminal layout");
    }
    if (!is_positive_definite(dev.inductance_witness).positive_definite) {
        throw BuildError("EM device: F*Atilde*Ntilde is not positive definite");
    }

    DescriptorElement el;
    el.n_x = nx;
    el.n_p = n_terms;
    el.label = "em-device";
    const Index m = nx + n_terms;
    el.K_x = Matrix::Zero(m, nx);
    el.K_i = Matrix::Zero(m, n_terms);
    el.K_v = Matrix::Zero(m, n_terms);
    el.L_x = Matrix::Zero(m, nx);
    el.L_i = Matrix::Zero(m, n_terms);
    el.L_v = Matrix::Zero(m, n_terms);
    el.K_x.topRows(nx) = dev.M;
    el.K_v.topRows(nx) = dev.N;
    el.L_x.topRows(nx) = dev.A;
    el.L_v.topRows(nx) = dev.B;
    el.L_i.bottomRows(n_terms) = Matrix::Identity(n_terms, n_terms);
    el.L_x.bottomRows(n_terms) = -dev.F;
    dev.element = std::move(el);
    return dev;
}

struct EqsDevice {
    DescriptorElement element;
    GridOperators ops;
    BoundarySplit split;
    Matrix L_sigma, L_eps;
    Matrix schur; // the capacitance witness of the proof
    double schur_lambda_min = 0.0;
};

/// Electroquasistatic device: potentials only, capacitance-like.
inline EqsDevice build_eqs_device(const StaggeredGrid& grid, const MaterialField& mat,
                                  const BoundarySpec& bc,
                                  const std::vector<TerminalPatch>& terminals,
                                  bool allow_large = false) {
    if (terminals.empty()) throw BuildError("EQS device needs at least one terminal");

    EqsDevice dev;
    dev.ops = build_grid_operators(grid, bc, terminals, allow_large);
    dev.split = dev.ops.boundary_split();
    const MaterialMatrices mm = build_material_matrices(grid, dev.ops, mat);

    const Matrix& g = dev.ops.G;
    const Matrix& qs = dev.split.Q_s;
    const Matrix& ys = dev.split.Y_s;

    dev.L_sigma = g.transpose() * mm.m_sigma.asDiagonal() * g;
    dev.L_eps = g.transpose() * mm.m_eps.asDiagonal() * g;

    const Matrix eq = qs.transpose() * dev.L_eps * qs;
    Eigen::LLT<Matrix> llt(eq);
    if (llt.info() != Eigen::Success) {
        throw GaugeError("EQS device: Q^T L_eps Q is not positive definite");
    }
    const Matrix eq_inv_qle_y = llt.solve(Matrix(qs.transpose() * dev.L_eps * ys));
    dev.schur = ys.transpose() * dev.L_eps * ys -
                ys.transpose() * dev.L_eps * qs * eq_inv_qle_y;
    const PosDefResult pd = is_positive_definite(dev.schur);
    dev.schur_lambda_min = pd.lambda_min;
    if (!pd.positive_definite) {
        throw BuildError("EQS device: capacitance Schur complement is not positive definite");
    }

    const Index nq = qs.cols();
    const Index n_terms = static_cast<Index>(terminals.size());
    DescriptorElement el;
    el.n_x = nq;
    el.n_p = n_terms;
    el.label = "eqs-device";
    const Index m = nq + n_terms;
    el.K_x = Matrix::Zero(m, nq);
    el.K_i = Matrix::Zero(m, n_terms);
    el.K_v = Matrix::Zero(m, n_terms);
    el.L_x = Matrix::Zero(m, nq);
    el.L_i = Matrix::Zero(m, n_terms);
    el.L_v = Matrix::Zero(m, n_terms);
    el.K_x.topRows(nq) = eq;
    el.K_v.topRows(nq) = qs.transpose() * dev.L_eps * ys;
    el.L_x.topRows(nq) = qs.transpose() * dev.L_sigma * qs;
    el.L_v.topRows(nq) = qs.transpose() * dev.L_sigma * ys;
    el.K_x.bottomRows(n_terms) = ys.transpose() * dev.L_eps * qs;
    el.K_v.bottomRows(n_terms) = ys.transpose() * dev.L_eps * ys;
    el.L_x.bottomRows(n_terms) = ys.transpose() * dev.L_sigma * qs;
    el.L_v.bottomRows(n_terms) = ys.transpose() * dev.L_sigma * ys;
    el.L_i.bottomRows(n_terms) = -Matrix::Identity(n_terms, n_terms);
    dev.element = std::move(el);
    return dev;
}

/// Winding region for the eddy-current device: an inclusive cell box plus the
/// edge direction the loop density points along.
struct CoilSpec {
    int i0 = 0, j0 = 0, k0 = 0;
    int i1 = 0, j1 = 0, k1 = 0;
    int axis = 2;
};

struct MqsDevice {
    DescriptorElement element;
    GridOperators ops;
    std::vector<int> cotree_edges; // kept-edge indices retained after gauging
    Matrix K_tau, K_nu;
    Matrix P_tau, Q_tau;
    Vector winding; // gauged, projected
    double projection_defect = 0.0; // |Q_tau^T X_raw| removed by projection
    double winding_residual = 0.0;  // |Q_tau^T X| after projection
    Matrix conductance_witness;     // the derived dG/dv' block, scalar here
};

/// Eddy-current A* device with homogenized cable magnetization; tree-cotree
/// gauged so the curl matrix has full column rank.
inline MqsDevice build_mqs_device(const StaggeredGrid& grid, const MaterialField& mat,
                                  const CoilSpec& coil, const BoundarySpec& bc,
                                  bool allow_large = false) {
    MqsDevice dev;
    dev.ops = build_grid_operators(grid, bc, {}, allow_large);
    const MaterialMatrices mm = build_material_matrices(grid, dev.ops, mat);

    if (mm.m_nu_tau.isZero(0.0)) {
        throw DegenerateDevice("tau_eq vanishes everywhere: P_tau = 0");
    }

    // Tree-cotree gauge: BFS spanning tree over kept points plus a collapsed
    // ground vertex; tree edges are eliminated from the vector potential.
    const Index ne = dev.ops.n_edges();
    const Index np = dev.ops.n_points();
    std::vector<std::vector<std::pair<int, int>>> adjacency(
        static_cast<std::size_t>(np + 1)); // node -> (edge, other)
    for (Index er = 0; er < ne; ++er) {
        const auto& [p0, p1] = dev.ops.edge_endpoints[static_cast<std::size_t>(er)];
        const int a = p0 >= 0 ? p0 : static_cast<int>(np);
        const int b = p1 >= 0 ? p1 : static_cast<int>(np);
        adjacency[static_cast<std::size_t>(a)].push_back({static_cast<int>(er), b});
        adjacency[static_cast<std::size_t>(b)].push_back({static_cast<int>(er), a});
    }
    std::vector<bool> visited(static_cast<std::size_t>(np + 1), false);
    std::vector<bool> in_tree(static_cast<std::size_t>(ne), false);
    std::vector<int> queue;
    queue.push_back(static_cast<int>(np));
    visited[static_cast<std::size_t>(np)] = true;
    for (std::size_t head = 0; head < queue.size(); ++head) {
        const int node = queue[head];
        for (const auto& [edge, other] : adjacency[static_cast<std::size_t>(node)]) {
            if (visited[static_cast<std::size_t>(other)]) continue;
            visited[static_cast<std::size_t>(other)] = true;
            in_tree[static_cast<std::size_t>(edge)] = true;
            queue.push_back(other);
        }
    }
    for (Index p = 0; p < np; ++p) {
        if (!visited[static_cast<std::size_t>(p)]) {
            throw GaugeError("tree-cotree gauge: potential graph is disconnected");
        }
    }
    for (Index er = 0; er < ne; ++er) {
        if (!in_tree[static_cast<std::size_t>(er)]) {
            dev.cotree_edges.push_back(static_cast<int>(er));
        }
    }
    const Index na = static_cast<Index>(dev.cotree_edges.size());
    if (na == 0) throw GaugeError("tree-cotree gauge left no vector-potential dofs");

    Matrix c_g(dev.ops.C.rows(), na);
    Vector nu_tau_diag = mm.m_nu_tau;
    Vector nu_diag = mm.m_nu;
    for (Index col = 0; col < na; ++col) {
        c_g.col(col) = dev.ops.C.col(dev.cotree_edges[static_cast<std::size_t>(col)]);
    }
    if (rank_svd(c_g) < na) {
        throw GaugeError("gauged curl matrix is not of full column rank");
    }

    dev.K_tau = c_g.transpose() * nu_tau_diag.asDiagonal() * c_g;
    dev.K_nu = c_g.transpose() * nu_diag.asDiagonal() * c_g;

    const Projector q_tau = projector_onto_kernel(dev.K_tau);
    dev.Q_tau = q_tau.matrix;
    dev.P_tau = Matrix::Identity(na, na) - dev.Q_tau;
    if (max_abs(dev.P_tau) < 1e-12) {
        throw DegenerateDevice("kernel projector is the identity: P_tau = 0");
    }

    // Winding vector: unit loop density on coil-cell edges along the axis,
    // gauged, then projected onto im(P_tau). The projection defect is
    // reported; the residual after projection must vanish.
    Vector x_raw_full = Vector::Zero(ne);
    const int d = coil.axis;
    if (d < 0 || d > 2) throw BuildError("coil axis must be 0, 1 or 2");
    {
        const int imax = d == 0 ? grid.nx - 1 : grid.nx;
        const int jmax = d == 1 ? grid.ny - 1 : grid.ny;
        const int kmax = d == 2 ? grid.nz - 1 : grid.nz;
        const int t1 = (d + 1) % 3;
        const int t2 = (d + 2) % 3;
        for (int k = 0; k <= kmax; ++k)
            for (int j = 0; j <= jmax; ++j)
                for (int i = 0; i <= imax; ++i) {
                    const int er = dev.ops.edge_index[static_cast<std::size_t>(
                        grid.edge_id(d, i, j, k))];
                    if (er < 0) continue;
                    int coil_neighbours = 0;
                    for (int a = -1; a <= 0; ++a)
                        for (int b = -1; b <= 0; ++b) {
                            const int ci = i + (t1 == 0 ? a : 0) + (t2 == 0 ? b : 0);
                            const int cj = j + (t1 == 1 ? a : 0) + (t2 == 1 ? b : 0);
                            const int ck = k + (t1 == 2 ? a : 0) + (t2 == 2 ? b : 0);
                            if (ci < coil.i0 || ci > coil.i1 || cj < coil.j0 ||
                                cj > coil.j1 || ck < coil.k0 || ck > coil.k1)
                                continue;
                            if (ci < 0 || cj < 0 || ck < 0 || ci >= grid.nx ||
                                cj >= grid.ny || ck >= grid.nz)
                                continue;
                            ++coil_neighbours;
                        }
                    if (coil_neighbours > 0) {
                        x_raw_full(er) = coil_neighbours / 4.0;
                    }
                }
    }
    Vector x_raw(na);
    for (Index col = 0; col < na; ++col) {
        x_raw(col) = x_raw_full(dev.cotree_edges[static_cast<std::size_t>(col)]);
    }
    if (x_raw.isZero(0.0)) {
        throw BuildError("winding has no support on the gauged edges");
    }
    dev.projection_defect = (dev.Q_tau * x_raw).norm();
    dev.winding = dev.P_tau * x_raw;
    dev.winding_residual = (dev.Q_tau.transpose() * dev.winding).norm();
    if (dev.winding_residual > 1e-12) {
        throw AssumptionViolated("winding excitation leaks outside the coils");
    }
    if (dev.winding.norm() < 1e-12) {
        throw DegenerateDevice("winding vector vanishes after projection");
    }

    // conductance witness: inverse of X^T P (K_tau + Q^T Q)^-1 P^T X
    const Matrix reg = dev.K_tau + dev.Q_tau.transpose() * dev.Q_tau;
    Eigen::FullPivLU<Matrix> lu(reg);
    if (!lu.isInvertible()) {
        throw BuildError("MQS device: regularized cable stiffness is singular");
    }
    const Vector px = dev.P_tau.transpose() * dev.winding;
    const Matrix g_inv = dev.winding.transpose() * dev.P_tau * lu.solve(px);
    if (!(g_inv(0, 0) > 0.0)) {
        throw BuildError("MQS device: conductance witness is not positive definite");
    }
    dev.conductance_witness = g_inv;

    DescriptorElement el;
    el.n_x = na;
    el.n_p = 1;
    el.label = "mqs-device";
    const Index m = na + 1;
    el.K_x = Matrix::Zero(m, na);
    el.K_i = Matrix::Zero(m, 1);
    el.K_v = Matrix::Zero(m, 1);
    el.L_x = Matrix::Zero(m, na);
    el.L_i = Matrix::Zero(m, 1);
    el.L_v = Matrix::Zero(m, 1);
    el.K_x.topRows(na) = dev.K_tau;
    el.L_x.topRows(na) = dev.K_nu;
    el.L_i.topRows(na) = -dev.winding;
    el.K_x.bottomRows(1) = dev.winding.transpose();
    el.L_v.bottomRows(1) = -Matrix::Identity(1, 1);
    dev.element = std::move(el);
    return dev;
}

} // namespace daestruct
