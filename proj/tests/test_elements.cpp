#include <catch2/catch_amalgamated.hpp>

#include "daestruct/elements.hpp"

#include <random>

using namespace daestruct;

TEST_CASE("classical constructors classify per their propositions", "[elements]") {
    SECTION("resistor: one differentiation, witness R^-1") {
        auto rep = classify(make_resistor(1.0));
        CHECK(rep.element_class == ElementClass::ResistanceLike);
        CHECK(rep.strong);
        CHECK(rep.differentiations_used == 1);
        CHECK_THAT(rep.witness(0, 0), Catch::Matchers::WithinAbs(1.0, 1e-12));
    }
    SECTION("inductor: no differentiation, witness L^-1") {
        auto rep = classify(make_inductor(2.0));
        CHECK(rep.element_class == ElementClass::InductanceLike);
        CHECK(rep.strong);
        CHECK(rep.differentiations_used == 0);
        CHECK_THAT(rep.witness(0, 0), Catch::Matchers::WithinAbs(0.5, 1e-12));
    }
    SECTION("capacitor: no differentiation, witness C^-1") {
        Matrix c(2, 2);
        c << 1, 0, 0, 3;
        auto rep = classify(make_capacitor(c));
        CHECK(rep.element_class == ElementClass::CapacitanceLike);
        CHECK(rep.strong);
        CHECK(rep.differentiations_used == 0);
        Matrix cinv(2, 2);
        cinv << 1, 0, 0, 1.0 / 3.0;
        CHECK(max_abs(Matrix(rep.witness - cinv)) < 1e-12);
    }
    SECTION("flux inductor and charge capacitor: one differentiation") {
        auto fl = classify(make_flux_inductor(2.0));
        CHECK(fl.element_class == ElementClass::InductanceLike);
        CHECK(fl.strong);
        CHECK(fl.differentiations_used == 1);
        CHECK_THAT(fl.witness(0, 0), Catch::Matchers::WithinAbs(0.5, 1e-12));

        auto ch = classify(make_charge_capacitor(4.0));
        CHECK(ch.element_class == ElementClass::CapacitanceLike);
        CHECK(ch.strong);
        CHECK(ch.differentiations_used == 1);
        CHECK_THAT(ch.witness(0, 0), Catch::Matchers::WithinAbs(0.25, 1e-12));
    }
    SECTION("non-square parameter is rejected") {
        CHECK_THROWS_AS(make_resistor(Matrix::Zero(2, 3)), ShapeMismatch);
    }
}

TEST_CASE("strength tracks parameter definiteness", "[elements]") {
    Matrix indefinite(2, 2);
    indefinite << 1, 0, 0, -1;
    auto rep = classify(make_resistor(indefinite));
    CHECK(rep.element_class == ElementClass::ResistanceLike);
    CHECK_FALSE(rep.strong);
    auto repl = classify(make_inductor(indefinite));
    CHECK(repl.element_class == ElementClass::InductanceLike);
    CHECK_FALSE(repl.strong);
}

TEST_CASE("flux/charge variants agree with their classical forms", "[elements][property]") {
    std::mt19937 rng(2024);
    std::normal_distribution<double> dist;
    for (int trial = 0; trial < 20; ++trial) {
        const Index n = 1 + static_cast<Index>(rng() % 3);
        Matrix p(n, n);
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < n; ++j) p(i, j) = dist(rng);
        p = Matrix(p * p.transpose()) + 0.1 * Matrix::Identity(n, n);

        auto classic_l = classify(make_inductor(p));
        auto flux_l = classify(make_flux_inductor(p));
        CHECK(classic_l.element_class == flux_l.element_class);
        CHECK(classic_l.strong == flux_l.strong);

        auto classic_c = classify(make_capacitor(p));
        auto charge_c = classify(make_charge_capacitor(p));
        CHECK(classic_c.element_class == charge_c.element_class);
        CHECK(classic_c.strong == charge_c.strong);
    }
}

TEST_CASE("classification is invariant under row mixing", "[elements][property]") {
    std::mt19937 rng(31337);
    std::normal_distribution<double> dist;
    auto mix = [&](const DescriptorElement& el) {
        const Index m = el.rows();
        Matrix t = Matrix::Identity(m, m);
        for (Index i = 0; i < m; ++i)
            for (Index j = 0; j < m; ++j) t(i, j) += 0.2 * dist(rng);
        DescriptorElement mixed = el;
        mixed.K_x = t * el.K_x;
        mixed.K_i = t * el.K_i;
        mixed.K_v = t * el.K_v;
        mixed.L_x = t * el.L_x;
        mixed.L_i = t * el.L_i;
        mixed.L_v = t * el.L_v;
        return mixed;
    };

    for (int trial = 0; trial < 15; ++trial) {
        Matrix p(2, 2);
        for (Index i = 0; i < 2; ++i)
            for (Index j = 0; j < 2; ++j) p(i, j) = dist(rng);
        p = Matrix(p * p.transpose()) + 0.5 * Matrix::Identity(2, 2);
        for (const auto& el :
             {make_resistor(p), make_inductor(p), make_capacitor(p),
              make_flux_inductor(p), make_charge_capacitor(p)}) {
            auto base = classify(el);
            auto mixed = classify(mix(el));
            CHECK(base.element_class == mixed.element_class);
            CHECK(base.strong == mixed.strong);
            CHECK(base.differentiations_used == mixed.differentiations_used);
        }
    }
}

TEST_CASE("an element needing two differentiations is unclassified", "[elements]") {
    // x1 = 0, x2 = x1', i = x2': reaching i' takes two differentiations of
    // the first constraint, one more than the definitions allow.
    DescriptorElement el;
    el.n_x = 2;
    el.n_p = 1;
    el.label = "double-chain";
    el.K_x = Matrix::Zero(3, 2);
    el.K_i = Matrix::Zero(3, 1);
    el.K_v = Matrix::Zero(3, 1);
    el.L_x = Matrix::Zero(3, 2);
    el.L_i = Matrix::Zero(3, 1);
    el.L_v = Matrix::Zero(3, 1);
    el.L_x(0, 0) = 1.0;                     // x1 = 0
    el.K_x(1, 0) = -1.0; el.L_x(1, 1) = 1.0; // x2 - x1' = 0
    el.K_x(2, 1) = -1.0; el.L_i(2, 0) = 1.0; // i - x2' = 0

    auto rep = classify(el);
    CHECK(rep.element_class == ElementClass::Unclassified);
    CHECK(rep.detail.find("unclassified") != std::string::npos);
}

TEST_CASE("degenerate elements can match multiple templates", "[elements]") {
    // i = v fits the resistance template after one differentiation; classify
    // with hints confirms the report for each requested template.
    auto el = make_resistor(1.0);
    auto all = classify_all(el);
    REQUIRE(all.size() == 1);
    CHECK(all[0].element_class == ElementClass::ResistanceLike);

    // the inductor fits both the inductance and (weakly) resistance templates
    auto ind = make_inductor(1.0);
    auto all_ind = classify_all(ind);
    REQUIRE(all_ind.size() == 2);
    CHECK(all_ind[0].element_class == ElementClass::InductanceLike);
    CHECK(all_ind[0].strong);
    CHECK(all_ind[1].element_class == ElementClass::ResistanceLike);
    CHECK_FALSE(all_ind[1].strong);
}

TEST_CASE("evaluate returns stacked residuals", "[elements]") {
    const Vector empty(0);
    auto r = make_resistor(1.0);
    Vector one1 = Vector::Ones(1);
    Vector zero1 = Vector::Zero(1);
    CHECK(evaluate(r, empty, empty, one1, zero1, one1, zero1, 0.0).norm() == 0.0);

    auto l = make_inductor(1.0);
    Vector idot(1), v(1);
    idot << 2.0;
    v << 2.0;
    CHECK(evaluate(l, empty, empty, zero1, idot, v, zero1, 0.0).norm() == 0.0);

    auto c = make_capacitor(1.0);
    Vector vdot(1);
    vdot << 1.0;
    Vector res = evaluate(c, empty, empty, zero1, zero1, zero1, vdot, 0.0);
    CHECK_THAT(res.norm(), Catch::Matchers::WithinAbs(1.0, 1e-14));

    CHECK_THROWS_AS(evaluate(r, empty, empty, one1, zero1, Vector::Zero(2), zero1, 0.0),
                    ShapeMismatch);
}
