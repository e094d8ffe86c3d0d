#include <catch2/catch_amalgamated.hpp>

#include "daestruct/topology.hpp"

#include <algorithm>
#include <functional>
#include <random>

using namespace daestruct;

namespace {

// Brute-force loop oracle: the X-subgraph contains a cycle (parallel edges
// count) iff some edge closes an already-connected pair.
bool subgraph_has_cycle(int nodes, const std::vector<std::pair<int, int>>& edges) {
    std::vector<int> parent(nodes);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int a) {
        while (parent[a] != a) {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        return a;
    };
    for (auto [a, b] : edges) {
        const int ra = find(a), rb = find(b);
        if (ra == rb) return true;
        parent[ra] = rb;
    }
    return false;
}

// Brute-force cutset oracle: a cutset of only X-branches exists iff removing
// every X-branch disconnects the graph.
bool complement_disconnects(int nodes, const std::vector<std::pair<int, int>>& kept) {
    std::vector<int> parent(nodes);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int a) {
        while (parent[a] != a) {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        return a;
    };
    int components = nodes;
    for (auto [a, b] : kept) {
        const int ra = find(a), rb = find(b);
        if (ra != rb) {
            parent[ra] = rb;
            --components;
        }
    }
    return components > 1;
}

CircuitGraph random_connected_circuit(std::mt19937& rng, int max_nodes = 12) {
    const int n = 2 + static_cast<int>(rng() % (max_nodes - 1));
    CircuitGraph g;
    g.node_count = n;
    const BranchClass classes[] = {BranchClass::C, BranchClass::L, BranchClass::R,
                                   BranchClass::V, BranchClass::I};
    int id = 0;
    auto cls = [&]() { return classes[rng() % 5]; };
    // random spanning tree first, then extra chords
    for (int v = 1; v < n; ++v) {
        const int u = static_cast<int>(rng() % v);
        g.add("b" + std::to_string(id++), u, v, cls());
    }
    const int extra = static_cast<int>(rng() % (n + 2));
    for (int k = 0; k < extra; ++k) {
        const int a = static_cast<int>(rng() % n);
        int b = static_cast<int>(rng() % n);
        if (a == b) b = (b + 1) % n;
        g.add("b" + std::to_string(id++), a, b, cls());
    }
    return g;
}

std::vector<std::pair<int, int>> edges_of(const CircuitGraph& g,
                                          std::initializer_list<BranchClass> classes) {
    std::vector<std::pair<int, int>> out;
    for (const Branch& b : g.branches) {
        for (BranchClass c : classes) {
            if (b.cls == c) out.emplace_back(b.from, b.to);
        }
    }
    return out;
}

} // namespace

TEST_CASE("incidence construction on small circuits", "[topology]") {
    SECTION("single resistor into the mass node") {
        CircuitGraph g;
        g.add("R1", 1, 0, BranchClass::R);
        auto inc = build_incidence(g);
        REQUIRE(inc.A_R.rows() == 1);
        REQUIRE(inc.A_R.cols() == 1);
        CHECK(inc.A_R(0, 0) == 1.0);
    }
    SECTION("triangle V(1->0), R(1->2), C(2->0)") {
        CircuitGraph g;
        g.add("V1", 1, 0, BranchClass::V);
        g.add("R1", 1, 2, BranchClass::R);
        g.add("C1", 2, 0, BranchClass::C);
        auto inc = build_incidence(g);
        Matrix av(2, 1), ar(2, 1), ac(2, 1);
        av << 1, 0;
        ar << 1, -1;
        ac << 0, 1;
        CHECK(max_abs(Matrix(inc.A_V - av)) == 0.0);
        CHECK(max_abs(Matrix(inc.A_R - ar)) == 0.0);
        CHECK(max_abs(Matrix(inc.A_C - ac)) == 0.0);
    }
    SECTION("branch into mass node from node 2") {
        CircuitGraph g;
        g.add("R1", 1, 2, BranchClass::R);
        g.add("R2", 2, 0, BranchClass::R);
        auto inc = build_incidence(g);
        CHECK(inc.A_R(1, 1) == 1.0);
        CHECK(inc.A_R(0, 1) == 0.0);
    }
    SECTION("graph errors") {
        CircuitGraph g;
        g.add("R1", 1, 1, BranchClass::R);
        CHECK_THROWS_AS(build_incidence(g), InvalidBranch);

        CircuitGraph disconnected;
        disconnected.node_count = 4;
        disconnected.branches.push_back({"R1", 0, 1, BranchClass::R, "", 0});
        disconnected.branches.push_back({"R2", 2, 3, BranchClass::R, "", 0});
        CHECK_THROWS_AS(build_incidence(disconnected), NotConnected);
    }
}

TEST_CASE("source sanity checks", "[topology]") {
    SECTION("two parallel voltage sources form a V-loop") {
        CircuitGraph g;
        g.add("V1", 1, 0, BranchClass::V);
        g.add("V2", 1, 0, BranchClass::V);
        auto [no_v_loops, no_i_cutsets] = check_source_sanity(build_incidence(g));
        CHECK_FALSE(no_v_loops);
        CHECK(no_i_cutsets);
    }
    SECTION("I source beside an R branch has no I-cutset") {
        CircuitGraph g;
        g.add("I1", 1, 0, BranchClass::I);
        g.add("R1", 1, 0, BranchClass::R);
        auto [no_v_loops, no_i_cutsets] = check_source_sanity(build_incidence(g));
        CHECK(no_v_loops);
        CHECK(no_i_cutsets);
    }
    SECTION("a node fed only by current sources is an I-cutset") {
        CircuitGraph g;
        g.add("I1", 1, 0, BranchClass::I);
        g.add("I2", 1, 0, BranchClass::I);
        auto [no_v_loops, no_i_cutsets] = check_source_sanity(build_incidence(g));
        CHECK(no_v_loops);
        CHECK_FALSE(no_i_cutsets);
    }
}

TEST_CASE("CV-loop and LI-cutset detection", "[topology]") {
    SECTION("C parallel V") {
        CircuitGraph g;
        g.add("C1", 1, 0, BranchClass::C);
        g.add("V1", 1, 0, BranchClass::V);
        auto inc = build_incidence(g);
        CHECK(detect_cv_loops(inc));
        CHECK_FALSE(detect_li_cutsets(inc));
        auto members = branch_membership(inc);
        CHECK(members.cv_loop_branches == std::set<std::string>{"C1", "V1"});
        CHECK(members.li_cutset_branches.empty());
    }
    SECTION("series V-R-C-L loop has neither") {
        CircuitGraph g;
        g.add("V1", 1, 0, BranchClass::V);
        g.add("R1", 1, 2, BranchClass::R);
        g.add("C1", 2, 3, BranchClass::C);
        g.add("L1", 3, 0, BranchClass::L);
        auto inc = build_incidence(g);
        CHECK_FALSE(detect_cv_loops(inc));
        CHECK_FALSE(detect_li_cutsets(inc));
        auto members = branch_membership(inc);
        CHECK(members.cv_loop_branches.empty());
        CHECK(members.li_cutset_branches.empty());
    }
    SECTION("L in series with an I source") {
        CircuitGraph g;
        g.add("I1", 0, 1, BranchClass::I);
        g.add("L1", 1, 2, BranchClass::L);
        g.add("R1", 2, 0, BranchClass::R);
        auto inc = build_incidence(g);
        CHECK(detect_li_cutsets(inc));
        auto members = branch_membership(inc);
        CHECK(members.li_cutset_branches == std::set<std::string>{"I1", "L1"});
    }
    SECTION("membership separates a CV-loop C from a series C") {
        // loop 1: V1 || C1 (CV-loop); loop 2: C2 in series with R1
        CircuitGraph g;
        g.add("V1", 1, 0, BranchClass::V);
        g.add("C1", 1, 0, BranchClass::C);
        g.add("C2", 1, 2, BranchClass::C);
        g.add("R1", 2, 0, BranchClass::R);
        auto inc = build_incidence(g);
        auto members = branch_membership(inc);
        CHECK(members.cv_loop_branches == std::set<std::string>{"C1", "V1"});
    }
}

TEST_CASE("rank criteria agree with brute-force loop/cutset search",
          "[topology][property]") {
    std::mt19937 rng(60601);
    for (int trial = 0; trial < 120; ++trial) {
        CircuitGraph g = random_connected_circuit(rng);
        auto inc = build_incidence(g);

        const bool v_loop_brute =
            subgraph_has_cycle(g.node_count, edges_of(g, {BranchClass::V}));
        const bool cv_loop_brute = subgraph_has_cycle(
            g.node_count, edges_of(g, {BranchClass::C, BranchClass::V}));
        const bool i_cutset_brute = complement_disconnects(
            g.node_count, edges_of(g, {BranchClass::C, BranchClass::L, BranchClass::R,
                                       BranchClass::V}));
        const bool li_cutset_brute = complement_disconnects(
            g.node_count,
            edges_of(g, {BranchClass::C, BranchClass::R, BranchClass::V}));

        auto [no_v_loops, no_i_cutsets] = check_source_sanity(inc);
        CHECK(v_loop_brute == !no_v_loops);
        CHECK(i_cutset_brute == !no_i_cutsets);
        CHECK(cv_loop_brute == detect_cv_loops(inc));
        CHECK(li_cutset_brute == detect_li_cutsets(inc));
    }
}

TEST_CASE("kernel-support membership agrees with the graph-theoretic reading",
          "[topology][property]") {
    std::mt19937 rng(70707);
    for (int trial = 0; trial < 80; ++trial) {
        CircuitGraph g = random_connected_circuit(rng, 9);
        auto inc = build_incidence(g);
        auto members = branch_membership(inc);

        // CV side: a C/V branch lies in some CV-loop iff it lies on a cycle
        // of the CV-subgraph, i.e. it is not a bridge there.
        for (const Branch& b : g.branches) {
            if (b.cls != BranchClass::C && b.cls != BranchClass::V) continue;
            auto cv_edges = edges_of(g, {BranchClass::C, BranchClass::V});
            // remove one instance of this branch, test connectivity of endpoints
            std::vector<std::pair<int, int>> without;
            bool removed = false;
            for (const Branch& other : g.branches) {
                if (other.cls != BranchClass::C && other.cls != BranchClass::V) continue;
                if (!removed && other.id == b.id) {
                    removed = true;
                    continue;
                }
                without.emplace_back(other.from, other.to);
            }
            std::vector<int> parent(g.node_count);
            std::iota(parent.begin(), parent.end(), 0);
            std::function<int(int)> find = [&](int a) {
                while (parent[a] != a) {
                    parent[a] = parent[parent[a]];
                    a = parent[a];
                }
                return a;
            };
            for (auto [x, y] : without) parent[find(x)] = find(y);
            const bool on_cycle = find(b.from) == find(b.to);
            CHECK(on_cycle == (members.cv_loop_branches.count(b.id) > 0));
        }

        // LI side: an L/I branch lies in some LI-cutset iff its endpoints fall
        // into different components once all L/I branches are removed.
        {
            std::vector<int> parent(g.node_count);
            std::iota(parent.begin(), parent.end(), 0);
            std::function<int(int)> find = [&](int a) {
                while (parent[a] != a) {
                    parent[a] = parent[parent[a]];
                    a = parent[a];
                }
                return a;
            };
            for (const Branch& b : g.branches) {
                if (b.cls == BranchClass::L || b.cls == BranchClass::I) continue;
                parent[find(b.from)] = find(b.to);
            }
            for (const Branch& b : g.branches) {
                if (b.cls != BranchClass::L && b.cls != BranchClass::I) continue;
                const bool separated = find(b.from) != find(b.to);
                CHECK(separated == (members.li_cutset_branches.count(b.id) > 0));
            }
        }
    }
}

TEST_CASE("branch permutation leaves findings unchanged", "[topology][property]") {
    std::mt19937 rng(515151);
    for (int trial = 0; trial < 30; ++trial) {
        CircuitGraph g = random_connected_circuit(rng, 8);
        CircuitGraph shuffled = g;
        std::shuffle(shuffled.branches.begin(), shuffled.branches.end(), rng);

        auto a = analyze_topology(build_incidence(g));
        auto b = analyze_topology(build_incidence(shuffled));
        CHECK(a.has_v_loop == b.has_v_loop);
        CHECK(a.has_i_cutset == b.has_i_cutset);
        CHECK(a.has_cv_loop == b.has_cv_loop);
        CHECK(a.has_li_cutset == b.has_li_cutset);
        CHECK(a.cv_loop_branches == b.cv_loop_branches);
        CHECK(a.li_cutset_branches == b.li_cutset_branches);

        CHECK(a.has_cv_loop == !a.cv_loop_branches.empty());
        CHECK(a.has_li_cutset == !a.li_cutset_branches.empty());
    }
}

TEST_CASE("a parallel R never creates a CV-loop or LI-cutset", "[topology][property]") {
    std::mt19937 rng(888);
    for (int trial = 0; trial < 30; ++trial) {
        CircuitGraph g = random_connected_circuit(rng, 8);
        auto before = analyze_topology(build_incidence(g));
        CircuitGraph with_r = g;
        const int a = static_cast<int>(rng() % g.node_count);
        int b = static_cast<int>(rng() % g.node_count);
        if (a == b) b = (b + 1) % g.node_count;
        with_r.add("Rextra", a, b, BranchClass::R);
        auto after = analyze_topology(build_incidence(with_r));
        CHECK(after.has_cv_loop == before.has_cv_loop);
        if (!before.has_li_cutset) CHECK_FALSE(after.has_li_cutset);
        CHECK(after.cv_loop_branches == before.cv_loop_branches);
    }
}
