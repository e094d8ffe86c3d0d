#pragma once

// =============================================================================
// Generalized circuit elements. A linear descriptor element couples internal
// states x, port currents i and port voltages v through
//
//     K_x x' + K_i i' + K_v v' + L_x x + L_i i + L_v v = s(t)
//
// with n_x + n_p rows. Classification brings this stacked form, using row
// elimination plus at most one differentiation of the algebraic rows, into
// one of three derived templates:
//
//   inductance-like    x' = Xf(v', x,i,v,t),  i' = g(x,i,v,t)
//   capacitance-like   x' = Xf(i', x,i,v,t),  v' = g(x,i,v,t)
//   resistance-like    x' = Xf(x,i,v,t),      i' = g(v', x,i,v,t)
//
// and certifies strength by positive definiteness of the derived coupling
// matrix in the relevant derivative channel.
// =============================================================================

#include "daestruct/errors.hpp"
#include "daestruct/linalg.hpp"
#include "daestruct/waveform.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace daestruct {

enum class ElementClass { InductanceLike, CapacitanceLike, ResistanceLike, Unclassified };

inline const char* to_string(ElementClass c) {
    switch (c) {
    case ElementClass::InductanceLike: return "inductance-like";
    case ElementClass::CapacitanceLike: return "capacitance-like";
    case ElementClass::ResistanceLike: return "resistance-like";
    case ElementClass::Unclassified: return "unclassified";
    }
    return "?";
}

struct DescriptorElement {
    Index n_x = 0;
    Index n_p = 0;
    Matrix K_x, K_i, K_v;
    Matrix L_x, L_i, L_v;
    /// Per-row forcing; empty means identically zero.
    std::vector<Waveform> forcing;
    std::string label;

    [[nodiscard]] Index rows() const { return n_x + n_p; }

    void validate() const {
        const Index m = rows();
        auto check = [&](const Matrix& mat, Index cols, const char* name) {
            if (mat.rows() != m || mat.cols() != cols) {
                throw ShapeMismatch(label + ": matrix " + name + " must be " +
                                    std::to_string(m) + "x" + std::to_string(cols));
            }
            check_finite(mat, name);
        };
        check(K_x, n_x, "K_x");
        check(K_i, n_p, "K_i");
        check(K_v, n_p, "K_v");
        check(L_x, n_x, "L_x");
        check(L_i, n_p, "L_i");
        check(L_v, n_p, "L_v");
        if (!forcing.empty() && static_cast<Index>(forcing.size()) != m) {
            throw ShapeMismatch(label + ": forcing size must match row count");
        }
    }

    [[nodiscard]] Vector forcing_at(double t, int derivative_order = 0) const {
        if (forcing.empty()) return Vector::Zero(rows());
        return eval_waveforms(forcing, t, derivative_order);
    }
};

namespace detail {

inline DescriptorElement blank_element(Index n_x, Index n_p, std::string label) {
    DescriptorElement el;
    el.n_x = n_x;
    el.n_p = n_p;
    el.label = std::move(label);
    const Index m = n_x + n_p;
    el.K_x = Matrix::Zero(m, n_x);
    el.K_i = Matrix::Zero(m, n_p);
    el.K_v = Matrix::Zero(m, n_p);
    el.L_x = Matrix::Zero(m, n_x);
    el.L_i = Matrix::Zero(m, n_p);
    el.L_v = Matrix::Zero(m, n_p);
    return el;
}

inline void require_square(const Matrix& m, const char* who) {
    if (m.rows() != m.cols()) {
        throw ShapeMismatch(std::string(who) + ": parameter matrix must be square");
    }
    check_finite(m, who);
}

} // namespace detail

/// v - R i = 0
inline DescriptorElement make_resistor(const Matrix& r, std::string label = "R") {
    detail::require_square(r, "make_resistor");
    DescriptorElement el = detail::blank_element(0, r.rows(), std::move(label));
    el.L_v = Matrix::Identity(r.rows(), r.rows());
    el.L_i = -r;
    return el;
}

inline DescriptorElement make_resistor(double r, std::string label = "R") {
    return make_resistor(Matrix::Constant(1, 1, r), std::move(label));
}

/// v - L di/dt = 0
inline DescriptorElement make_inductor(const Matrix& l, std::string label = "L") {
    detail::require_square(l, "make_inductor");
    DescriptorElement el = detail::blank_element(0, l.rows(), std::move(label));
    el.L_v = Matrix::Identity(l.rows(), l.rows());
    el.K_i = -l;
    return el;
}

inline DescriptorElement make_inductor(double l, std::string label = "L") {
    return make_inductor(Matrix::Constant(1, 1, l), std::move(label));
}

/// C dv/dt - i = 0
inline DescriptorElement make_capacitor(const Matrix& c, std::string label = "C") {
    detail::require_square(c, "make_capacitor");
    DescriptorElement el = detail::blank_element(0, c.rows(), std::move(label));
    el.K_v = c;
    el.L_i = -Matrix::Identity(c.rows(), c.rows());
    return el;
}

inline DescriptorElement make_capacitor(double c, std::string label = "C") {
    return make_capacitor(Matrix::Constant(1, 1, c), std::move(label));
}

/// Flux formulation: v - dPhi/dt = 0, Phi - L i = 0, internal state Phi.
inline DescriptorElement make_flux_inductor(const Matrix& dphi_di,
                                            std::string label = "Lflux") {
    detail::require_square(dphi_di, "make_flux_inductor");
    const Index np = dphi_di.rows();
    DescriptorElement el = detail::blank_element(np, np, std::move(label));
    // rows 0..np-1: v - x' = 0
    el.K_x.topRows(np) = -Matrix::Identity(np, np);
    el.L_v.topRows(np) = Matrix::Identity(np, np);
    // rows np..2np-1: x - dphi_di * i = 0
    el.L_x.bottomRows(np) = Matrix::Identity(np, np);
    el.L_i.bottomRows(np) = -dphi_di;
    return el;
}

inline DescriptorElement make_flux_inductor(double l, std::string label = "Lflux") {
    return make_flux_inductor(Matrix::Constant(1, 1, l), std::move(label));
}

/// Charge formulation: i - dq/dt = 0, q - C v = 0, internal state q.
inline DescriptorElement make_charge_capacitor(const Matrix& dq_dv,
                                               std::string label = "Cq") {
    detail::require_square(dq_dv, "make_charge_capacitor");
    const Index np = dq_dv.rows();
    DescriptorElement el = detail::blank_element(np, np, std::move(label));
    el.K_x.topRows(np) = -Matrix::Identity(np, np);
    el.L_i.topRows(np) = Matrix::Identity(np, np);
    el.L_x.bottomRows(np) = Matrix::Identity(np, np);
    el.L_v.bottomRows(np) = -dq_dv;
    return el;
}

inline DescriptorElement make_charge_capacitor(double c, std::string label = "Cq") {
    return make_charge_capacitor(Matrix::Constant(1, 1, c), std::move(label));
}

/// Residual of the stacked equations at a state/derivative point.
inline Vector evaluate(const DescriptorElement& el, const Vector& x, const Vector& xdot,
                       const Vector& i, const Vector& idot, const Vector& v,
                       const Vector& vdot, double t) {
    el.validate();
    if (x.size() != el.n_x || xdot.size() != el.n_x || i.size() != el.n_p ||
        idot.size() != el.n_p || v.size() != el.n_p || vdot.size() != el.n_p) {
        throw ShapeMismatch(el.label + ": evaluate argument dimensions");
    }
    return el.K_x * xdot + el.K_i * idot + el.K_v * vdot + el.L_x * x + el.L_i * i +
           el.L_v * v - el.forcing_at(t);
}

/// The solved linear template. d denotes the exogenous derivative channel of
/// the class (v' for L- and R-like, i' for C-like); p' the differentiated
/// port quantity (i' for L/R, v' for C).
///
///   x' = xf_d d + xf_x x + xf_i i + xf_v v + time
///   p' = g_d d  + g_x x  + g_i i  + g_v v  + time
///
/// Time parts evaluate as t0 * s^(k)(t) + t1 * s^(k+1)(t) against the
/// element's own forcing stack.
struct DerivedLinearForm {
    ElementClass element_class = ElementClass::Unclassified;
    Matrix xf_d, xf_x, xf_i, xf_v;
    Matrix g_d, g_x, g_i, g_v;
    Matrix t0, t1;

    [[nodiscard]] Vector time_part_x(const DescriptorElement& el, double t,
                                     int extra_order = 0) const {
        if (el.forcing.empty()) return Vector::Zero(xf_x.rows());
        return (t0.topRows(xf_x.rows()) * el.forcing_at(t, extra_order) +
                t1.topRows(xf_x.rows()) * el.forcing_at(t, extra_order + 1));
    }

    [[nodiscard]] Vector time_part_g(const DescriptorElement& el, double t,
                                     int extra_order = 0) const {
        if (el.forcing.empty()) return Vector::Zero(g_x.rows());
        return (t0.bottomRows(g_x.rows()) * el.forcing_at(t, extra_order) +
                t1.bottomRows(g_x.rows()) * el.forcing_at(t, extra_order + 1));
    }
};

struct ClassificationReport {
    ElementClass element_class = ElementClass::Unclassified;
    bool strong = false;
    int differentiations_used = 0;
    Matrix witness;
    double margin = 0.0;
    bool tolerance_warning = false;
    std::string detail;
    std::optional<DerivedLinearForm> derived;
};

namespace detail {

struct TemplateAttempt {
    bool ok = false;
    std::string reason;
    int diffs = 0;
    bool tolerance_warning = false;
    DerivedLinearForm form;
};

inline double coefficient_scale(const DescriptorElement& el) {
    double s = 0.0;
    for (const Matrix* m : {&el.K_x, &el.K_i, &el.K_v, &el.L_x, &el.L_i, &el.L_v}) {
        s = std::max(s, max_abs(*m));
    }
    return std::max(s, 1.0);
}

/// One-step shuffle restricted to the element, for one class template.
inline TemplateAttempt attempt_template(const DescriptorElement& el, ElementClass cls,
                                        std::optional<double> tol) {
    TemplateAttempt out;
    const Index nx = el.n_x;
    const Index np = el.n_p;
    const Index m = nx + np;
    const double scale = coefficient_scale(el);
    const double zero_tol = tol ? *tol : 1e-10 * scale;

    const bool exo_is_v = (cls != ElementClass::CapacitanceLike);

    // Leading block on the solved derivatives z = (x', p') and the exogenous
    // derivative coefficient block.
    Matrix lead(m, m), k_exo(m, np), l_solved(m, m);
    lead << el.K_x, (exo_is_v ? el.K_i : el.K_v);
    k_exo = exo_is_v ? el.K_v : el.K_i;
    l_solved << el.L_x, (exo_is_v ? el.L_i : el.L_v);
    const Matrix& l_exo = exo_is_v ? el.L_v : el.L_i;

    Matrix u = Matrix::Identity(m, m);
    Index r = m;
    if (m > 0) {
        Eigen::JacobiSVD<Matrix> svd(lead, Eigen::ComputeFullU);
        r = detail::rank_from_singular_values(svd.singularValues(), m, m, tol);
        u = svd.matrixU().transpose();
        if (svd.singularValues().size() > 0) {
            const double tau = tol ? *tol
                                   : default_rank_tolerance(m, m, svd.singularValues()(0));
            for (Index k = 0; k < svd.singularValues().size(); ++k) {
                const double sv = svd.singularValues()(k);
                if (sv > tau * 0.1 && sv < tau * 10.0 && sv > 0.0) {
                    out.tolerance_warning = true;
                }
            }
        }
    }

    const Index na = m - r; // algebraic rows
    out.diffs = na > 0 ? 1 : 0;

    const Matrix lead_t = u * lead;
    const Matrix k_exo_t = u * k_exo;
    const Matrix l_solved_t = u * l_solved;
    const Matrix l_exo_t = u * l_exo;
    const Matrix lx_t = u * el.L_x;
    const Matrix li_t = u * el.L_i;
    const Matrix lv_t = u * el.L_v;

    if (na > 0 && max_abs(Matrix(k_exo_t.bottomRows(na))) > zero_tol) {
        out.reason = "algebraic rows carry the exogenous derivative";
        return out;
    }

    // New leading matrix: differential rows keep their coefficients, the
    // differentiated algebraic rows promote L-coefficients of z.
    Matrix lead2(m, m);
    lead2.topRows(r) = lead_t.topRows(r);
    if (na > 0) lead2.bottomRows(na) = l_solved_t.bottomRows(na);

    if (m > 0 && rank_svd(lead2, tol) < m) {
        out.reason = "reduction needs a second differentiation";
        return out;
    }
    Eigen::FullPivLU<Matrix> lu(lead2);

    // Right-hand-side coefficient blocks for z.
    Matrix rhs_exo = Matrix::Zero(m, np);
    Matrix rhs_x = Matrix::Zero(m, nx);
    Matrix rhs_i = Matrix::Zero(m, np);
    Matrix rhs_v = Matrix::Zero(m, np);
    Matrix t0 = Matrix::Zero(m, m);
    Matrix t1 = Matrix::Zero(m, m);

    rhs_exo.topRows(r) = -k_exo_t.topRows(r);
    rhs_x.topRows(r) = -lx_t.topRows(r);
    rhs_i.topRows(r) = -li_t.topRows(r);
    rhs_v.topRows(r) = -lv_t.topRows(r);
    t0.topRows(r) = u.topRows(r);
    if (na > 0) {
        rhs_exo.bottomRows(na) = -l_exo_t.bottomRows(na);
        t1.bottomRows(na) = u.bottomRows(na);
    }

    DerivedLinearForm f;
    f.element_class = cls;
    const Matrix theta_exo = m > 0 ? Matrix(lu.solve(rhs_exo)) : rhs_exo;
    const Matrix theta_x = m > 0 ? Matrix(lu.solve(rhs_x)) : rhs_x;
    const Matrix theta_i = m > 0 ? Matrix(lu.solve(rhs_i)) : rhs_i;
    const Matrix theta_v = m > 0 ? Matrix(lu.solve(rhs_v)) : rhs_v;
    f.t0 = m > 0 ? Matrix(lu.solve(t0)) : t0;
    f.t1 = m > 0 ? Matrix(lu.solve(t1)) : t1;

    // Template restrictions on the solved derivative coefficients.
    const double theta_zero_tol =
        zero_tol * std::max(1.0, max_abs(theta_exo) + max_abs(theta_x));
    switch (cls) {
    case ElementClass::InductanceLike:
    case ElementClass::CapacitanceLike:
        if (np > 0 && max_abs(Matrix(theta_exo.bottomRows(np))) > theta_zero_tol) {
            out.reason = "derived port equation depends on the exogenous derivative";
            return out;
        }
        break;
    case ElementClass::ResistanceLike:
        if (nx > 0 && max_abs(Matrix(theta_exo.topRows(nx))) > theta_zero_tol) {
            out.reason = "derived state equation depends on a derivative";
            return out;
        }
        break;
    case ElementClass::Unclassified:
        break;
    }

    f.xf_d = theta_exo.topRows(nx);
    f.xf_x = theta_x.topRows(nx);
    f.xf_i = theta_i.topRows(nx);
    f.xf_v = theta_v.topRows(nx);
    f.g_d = theta_exo.bottomRows(np);
    f.g_x = theta_x.bottomRows(np);
    f.g_i = theta_i.bottomRows(np);
    f.g_v = theta_v.bottomRows(np);

    // Zero out the template-enforced blocks so downstream consumers see the
    // exact structure.
    if (cls == ElementClass::ResistanceLike) {
        f.xf_d.setZero();
    } else {
        f.g_d.setZero();
    }

    out.ok = true;
    out.form = std::move(f);
    return out;
}

inline Matrix strength_witness(const DerivedLinearForm& f) {
    switch (f.element_class) {
    case ElementClass::InductanceLike:
        return f.g_x * f.xf_d + f.g_v;
    case ElementClass::CapacitanceLike:
        return f.g_x * f.xf_d + f.g_i;
    case ElementClass::ResistanceLike:
        return f.g_d;
    case ElementClass::Unclassified:
        break;
    }
    return Matrix();
}

inline ClassificationReport report_from_attempt(const DescriptorElement& el,
                                                const TemplateAttempt& attempt) {
    ClassificationReport rep;
    rep.element_class = attempt.form.element_class;
    rep.differentiations_used = attempt.diffs;
    rep.tolerance_warning = attempt.tolerance_warning;
    rep.derived = attempt.form;
    rep.witness = strength_witness(attempt.form);
    if (rep.witness.rows() == rep.witness.cols()) {
        const PosDefResult pd = is_positive_definite(rep.witness);
        rep.strong = pd.positive_definite;
        rep.margin = pd.lambda_min;
    }
    rep.detail = el.label + ": " + to_string(rep.element_class);
    return rep;
}

} // namespace detail

/// Classify a linear descriptor element. Without a hint the templates are
/// attempted in the order L, C, R and the first success wins.
inline ClassificationReport classify(const DescriptorElement& el,
                                     std::optional<ElementClass> hint = std::nullopt,
                                     std::optional<double> tol = std::nullopt) {
    el.validate();
    std::vector<ElementClass> order;
    if (hint) {
        order = {*hint};
    } else {
        order = {ElementClass::InductanceLike, ElementClass::CapacitanceLike,
                 ElementClass::ResistanceLike};
    }
    std::string reasons;
    bool warned = false;
    for (ElementClass cls : order) {
        detail::TemplateAttempt attempt = detail::attempt_template(el, cls, tol);
        warned = warned || attempt.tolerance_warning;
        if (attempt.ok) return detail::report_from_attempt(el, attempt);
        if (!reasons.empty()) reasons += "; ";
        reasons += std::string(to_string(cls)) + ": " + attempt.reason;
    }
    ClassificationReport rep;
    rep.element_class = ElementClass::Unclassified;
    rep.tolerance_warning = warned;
    rep.detail = el.label + ": unclassified (" + reasons + ")";
    return rep;
}

/// All templates an element fits (--all-classes behaviour).
inline std::vector<ClassificationReport> classify_all(
    const DescriptorElement& el, std::optional<double> tol = std::nullopt) {
    el.validate();
    std::vector<ClassificationReport> reports;
    for (ElementClass cls : {ElementClass::InductanceLike, ElementClass::CapacitanceLike,
                             ElementClass::ResistanceLike}) {
        detail::TemplateAttempt attempt = detail::attempt_template(el, cls, tol);
        if (attempt.ok) reports.push_back(detail::report_from_attempt(el, attempt));
    }
    return reports;
}

} // namespace daestruct
